//! Matrix-free linear operators.
//!
//! Forward models are expressed through [`LinearOperator`]: a shape plus a
//! forward map and (usually) an adjoint. Operators are immutable once built
//! and safe to share across threads. Concrete types cover banded Gaussian
//! blurs with zero (Dirichlet) boundary handling, Kronecker products applied
//! by reshaping instead of materialization, dense matrices, and sparse-row
//! observation operators. Symmetric positive definite priors live behind the
//! separate [`SpdOperator`] trait.
//!
//! Conventions: images are vectorized row by row; space–time volumes are
//! vectorized space-fastest, time-slowest, so the value of cell `p` at time
//! `t` sits at index `p + t * n_space`.

use crate::dense::{cholesky, cholesky_solve, Mat};
use crate::scalar::{real, Scalar};
use crate::{Error, Result};

/// A linear map `R^cols -> R^rows` given by its action.
pub trait LinearOperator<T: Scalar>: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;

    /// Writes `A x` into `out`; `x.len() == cols`, `out.len() == rows`.
    fn apply_into(&self, x: &[T], out: &mut [T]);

    /// Writes `Aᵀ y` into `out`. Implementations without an adjoint must
    /// override [`LinearOperator::has_adjoint`]; callers check it before use.
    fn apply_adjoint_into(&self, y: &[T], out: &mut [T]);

    /// Whether [`LinearOperator::apply_adjoint_into`] is usable.
    fn has_adjoint(&self) -> bool {
        true
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols(), "operator input length mismatch");
        let mut out = vec![T::zero(); self.rows()];
        self.apply_into(x, &mut out);
        out
    }

    fn apply_adjoint(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.rows(), "operator adjoint input length mismatch");
        let mut out = vec![T::zero(); self.cols()];
        self.apply_adjoint_into(y, &mut out);
        out
    }
}

impl<T: Scalar> LinearOperator<T> for Box<dyn LinearOperator<T>> {
    fn rows(&self) -> usize {
        self.as_ref().rows()
    }
    fn cols(&self) -> usize {
        self.as_ref().cols()
    }
    fn apply_into(&self, x: &[T], out: &mut [T]) {
        self.as_ref().apply_into(x, out)
    }
    fn apply_adjoint_into(&self, y: &[T], out: &mut [T]) {
        self.as_ref().apply_adjoint_into(y, out)
    }
    fn has_adjoint(&self) -> bool {
        self.as_ref().has_adjoint()
    }
}

/// Symmetric positive definite operator (covariance priors).
pub trait SpdOperator<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    fn apply_into(&self, x: &[T], out: &mut [T]);

    /// Applies the inverse. Only valid when [`SpdOperator::has_inverse`] is
    /// true; the default implementation panics.
    fn apply_inverse_into(&self, _x: &[T], _out: &mut [T]) {
        panic!("this SPD operator does not expose an inverse");
    }

    fn has_inverse(&self) -> bool {
        false
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.dim(), "SPD operator input length mismatch");
        let mut out = vec![T::zero(); self.dim()];
        self.apply_into(x, &mut out);
        out
    }

    fn apply_inverse(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.dim(), "SPD operator input length mismatch");
        let mut out = vec![T::zero(); self.dim()];
        self.apply_inverse_into(x, &mut out);
        out
    }
}

/// Dense matrix operator. Small problems and tests only.
#[derive(Debug, Clone)]
pub struct DenseOp<T> {
    mat: Mat<T>,
}

impl<T: Scalar> DenseOp<T> {
    pub fn new(mat: Mat<T>) -> Self {
        DenseOp { mat }
    }

    pub fn mat(&self) -> &Mat<T> {
        &self.mat
    }
}

impl<T: Scalar> LinearOperator<T> for DenseOp<T> {
    fn rows(&self) -> usize {
        self.mat.rows()
    }
    fn cols(&self) -> usize {
        self.mat.cols()
    }
    fn apply_into(&self, x: &[T], out: &mut [T]) {
        out.copy_from_slice(&self.mat.matvec(x));
    }
    fn apply_adjoint_into(&self, y: &[T], out: &mut [T]) {
        out.copy_from_slice(&self.mat.t_matvec(y));
    }
}

/// One-dimensional Gaussian blur: a banded symmetric Toeplitz convolution
/// with taps `g_j = exp(-j²/(2σ²))` for `|j| <= bandwidth`, truncated at the
/// array edges (zero boundary values) and normalized by the full kernel sum
/// so that interior rows sum to one.
#[derive(Debug, Clone)]
pub struct GaussianBlur1D<T> {
    n: usize,
    sigma: f64,
    bandwidth: usize,
    taps: Vec<T>,
}

/// Builds the 1-D blur operator. `bandwidth` must be smaller than `n` and
/// `sigma` strictly positive.
pub fn gaussian_blur_1d<T: Scalar>(n: usize, sigma: f64, bandwidth: usize) -> Result<GaussianBlur1D<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("blur length must be positive".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("blur sigma must be positive, got {sigma}")));
    }
    if bandwidth >= n {
        return Err(Error::InvalidArgument(format!(
            "blur bandwidth {bandwidth} must be smaller than the signal length {n}"
        )));
    }
    let mut raw = Vec::with_capacity(bandwidth + 1);
    for j in 0..=bandwidth {
        let e = -((j * j) as f64) / (2.0 * sigma * sigma);
        raw.push(e.exp());
    }
    let sum: f64 = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
    let taps = raw.into_iter().map(|g| real::<T>(g / sum)).collect();
    Ok(GaussianBlur1D { n, sigma, bandwidth, taps })
}

impl<T: Scalar> GaussianBlur1D<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }
}

impl<T: Scalar> LinearOperator<T> for GaussianBlur1D<T> {
    fn rows(&self) -> usize {
        self.n
    }
    fn cols(&self) -> usize {
        self.n
    }
    fn apply_into(&self, x: &[T], out: &mut [T]) {
        let n = self.n;
        let bw = self.bandwidth as isize;
        for i in 0..n {
            let mut acc = self.taps[0] * x[i];
            for d in 1..=bw {
                let lo = i as isize - d;
                if lo >= 0 {
                    acc = acc + self.taps[d as usize] * x[lo as usize];
                }
                let hi = i as isize + d;
                if (hi as usize) < n {
                    acc = acc + self.taps[d as usize] * x[hi as usize];
                }
            }
            out[i] = acc;
        }
    }
    fn apply_adjoint_into(&self, y: &[T], out: &mut [T]) {
        // The truncated symmetric band is a symmetric matrix.
        self.apply_into(y, out);
    }
}

/// Kronecker product `A ⊗ B` applied by reshaping: for a row-major matrix
/// view `X` of the input, `(A ⊗ B) vec(X) = vec(A X Bᵀ)`; `A` acts along the
/// slow (first) index and `B` along the fast (second) index.
#[derive(Debug, Clone)]
pub struct KronOp<OA, OB> {
    a: OA,
    b: OB,
}

/// Builds `A ⊗ B` without materializing it.
pub fn kron<OA, OB>(a: OA, b: OB) -> KronOp<OA, OB> {
    KronOp { a, b }
}

fn kron_apply<T: Scalar>(
    a_rows: usize,
    a_cols: usize,
    b_rows: usize,
    b_cols: usize,
    apply_a: impl Fn(&[T]) -> Vec<T>,
    apply_b: impl Fn(&[T]) -> Vec<T>,
    x: &[T],
) -> Vec<T> {
    debug_assert_eq!(x.len(), a_cols * b_cols);
    // Fast index first: rows of X through B.
    let mut mid = vec![T::zero(); a_cols * b_rows];
    for j in 0..a_cols {
        let row = &x[j * b_cols..(j + 1) * b_cols];
        let t = apply_b(row);
        mid[j * b_rows..(j + 1) * b_rows].copy_from_slice(&t);
    }
    // Slow index: columns of the intermediate through A.
    let mut out = vec![T::zero(); a_rows * b_rows];
    let mut col = vec![T::zero(); a_cols];
    for c in 0..b_rows {
        for j in 0..a_cols {
            col[j] = mid[j * b_rows + c];
        }
        let t = apply_a(&col);
        for i in 0..a_rows {
            out[i * b_rows + c] = t[i];
        }
    }
    out
}

impl<T, OA, OB> LinearOperator<T> for KronOp<OA, OB>
where
    T: Scalar,
    OA: LinearOperator<T>,
    OB: LinearOperator<T>,
{
    fn rows(&self) -> usize {
        self.a.rows() * self.b.rows()
    }
    fn cols(&self) -> usize {
        self.a.cols() * self.b.cols()
    }
    fn apply_into(&self, x: &[T], out: &mut [T]) {
        let y = kron_apply(
            self.a.rows(),
            self.a.cols(),
            self.b.rows(),
            self.b.cols(),
            |v| self.a.apply(v),
            |v| self.b.apply(v),
            x,
        );
        out.copy_from_slice(&y);
    }
    fn apply_adjoint_into(&self, y: &[T], out: &mut [T]) {
        let x = kron_apply(
            self.a.cols(),
            self.a.rows(),
            self.b.cols(),
            self.b.rows(),
            |v| self.a.apply_adjoint(v),
            |v| self.b.apply_adjoint(v),
            y,
        );
        out.copy_from_slice(&x);
    }
    fn has_adjoint(&self) -> bool {
        self.a.has_adjoint() && self.b.has_adjoint()
    }
}

/// Two-dimensional separable Gaussian blur on `rows x cols` row-major images:
/// the 1-D blur along image rows Kronecker the 1-D blur along image columns.
pub fn gaussian_blur_2d<T: Scalar>(
    rows: usize,
    cols: usize,
    sigma: f64,
    bandwidth: usize,
) -> Result<KronOp<GaussianBlur1D<T>, GaussianBlur1D<T>>> {
    Ok(kron(gaussian_blur_1d(rows, sigma, bandwidth)?, gaussian_blur_1d(cols, sigma, bandwidth)?))
}

/// Sparse-row operator: each row is a short list of `(column, value)` pairs.
#[derive(Debug, Clone)]
pub struct SparseRowOp<T> {
    cols: usize,
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SparseRowOp<T> {
    pub fn new(cols: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            for &(j, _) in row {
                if j >= cols {
                    return Err(Error::InvalidArgument(format!(
                        "row {i} references column {j} out of {cols}"
                    )));
                }
            }
        }
        Ok(SparseRowOp { cols, rows })
    }

    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }
}

impl<T: Scalar> LinearOperator<T> for SparseRowOp<T> {
    fn rows(&self) -> usize {
        self.rows.len()
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn apply_into(&self, x: &[T], out: &mut [T]) {
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = T::zero();
            for &(j, v) in row {
                acc = acc + v * x[j];
            }
            out[i] = acc;
        }
    }
    fn apply_adjoint_into(&self, y: &[T], out: &mut [T]) {
        for o in out.iter_mut() {
            *o = T::zero();
        }
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                out[j] = out[j] + v * y[i];
            }
        }
    }
}

/// Dense SPD matrix with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct DenseSpd<T> {
    mat: Mat<T>,
    chol: Mat<T>,
}

impl<T: Scalar> DenseSpd<T> {
    /// Validates symmetry and positive definiteness (through Cholesky).
    pub fn new(mat: Mat<T>) -> Result<Self> {
        let n = mat.rows();
        if n != mat.cols() {
            return Err(Error::InvalidArgument("SPD matrix must be square".into()));
        }
        let scale = mat.frob_norm();
        let tol = scale * real::<T>(1e-12);
        for i in 0..n {
            for j in i + 1..n {
                if (mat.get(i, j) - mat.get(j, i)).abs() > tol {
                    return Err(Error::InvalidArgument("SPD matrix must be symmetric".into()));
                }
            }
        }
        let chol = cholesky(&mat).ok_or_else(|| {
            Error::Degenerate("matrix is not positive definite".into())
        })?;
        Ok(DenseSpd { mat, chol })
    }

    pub fn mat(&self) -> &Mat<T> {
        &self.mat
    }

    /// Applies the lower Cholesky factor `L` (with `L Lᵀ` the operator);
    /// mapping i.i.d. standard normal input through it yields samples with
    /// this operator as covariance.
    pub fn factor_apply(&self, g: &[T]) -> Vec<T> {
        let n = self.mat.rows();
        assert_eq!(g.len(), n);
        let mut out = vec![T::zero(); n];
        for i in 0..n {
            let mut acc = T::zero();
            for j in 0..=i {
                acc = acc + self.chol.get(i, j) * g[j];
            }
            out[i] = acc;
        }
        out
    }
}

impl<T: Scalar> SpdOperator<T> for DenseSpd<T> {
    fn dim(&self) -> usize {
        self.mat.rows()
    }
    fn apply_into(&self, x: &[T], out: &mut [T]) {
        out.copy_from_slice(&self.mat.matvec(x));
    }
    fn apply_inverse_into(&self, x: &[T], out: &mut [T]) {
        out.copy_from_slice(&cholesky_solve(&self.chol, x));
    }
    fn has_inverse(&self) -> bool {
        true
    }
}

/// `c · I` for `c > 0`.
#[derive(Debug, Clone)]
pub struct ScaledIdentity<T> {
    dim: usize,
    scale: T,
}

impl<T: Scalar> ScaledIdentity<T> {
    pub fn new(dim: usize, scale: T) -> Result<Self> {
        if !(scale > T::zero()) {
            return Err(Error::InvalidArgument("identity scale must be positive".into()));
        }
        Ok(ScaledIdentity { dim, scale })
    }

    pub fn scale(&self) -> T {
        self.scale
    }
}

impl<T: Scalar> SpdOperator<T> for ScaledIdentity<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply_into(&self, x: &[T], out: &mut [T]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = self.scale * *v;
        }
    }
    fn apply_inverse_into(&self, x: &[T], out: &mut [T]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = *v / self.scale;
        }
    }
    fn has_inverse(&self) -> bool {
        true
    }
}

/// Kronecker product of two dense SPD operators: `T ⊗ S`, with the first
/// factor acting on the slow index. Its inverse is the Kronecker product of
/// the inverses, and its Cholesky factor the Kronecker product of the
/// factors.
#[derive(Debug, Clone)]
pub struct KronSpd<T> {
    slow: DenseSpd<T>,
    fast: DenseSpd<T>,
}

impl<T: Scalar> KronSpd<T> {
    pub fn new(slow: DenseSpd<T>, fast: DenseSpd<T>) -> Self {
        KronSpd { slow, fast }
    }

    pub fn factor_apply(&self, g: &[T]) -> Vec<T> {
        kron_apply(
            self.slow.dim(),
            self.slow.dim(),
            self.fast.dim(),
            self.fast.dim(),
            |v| self.slow.factor_apply(v),
            |v| self.fast.factor_apply(v),
            g,
        )
    }
}

impl<T: Scalar> SpdOperator<T> for KronSpd<T> {
    fn dim(&self) -> usize {
        self.slow.dim() * self.fast.dim()
    }
    fn apply_into(&self, x: &[T], out: &mut [T]) {
        let y = kron_apply(
            self.slow.dim(),
            self.slow.dim(),
            self.fast.dim(),
            self.fast.dim(),
            |v| self.slow.apply(v),
            |v| self.fast.apply(v),
            x,
        );
        out.copy_from_slice(&y);
    }
    fn apply_inverse_into(&self, x: &[T], out: &mut [T]) {
        let y = kron_apply(
            self.slow.dim(),
            self.slow.dim(),
            self.fast.dim(),
            self.fast.dim(),
            |v| self.slow.apply_inverse(v),
            |v| self.fast.apply_inverse(v),
            x,
        );
        out.copy_from_slice(&y);
    }
    fn has_inverse(&self) -> bool {
        true
    }
}

/// Distance interpretation for [`build_covariance`] coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Points in R^d, Euclidean distance.
    Euclidean,
    /// `(latitude, longitude)` in degrees; great-circle distance in
    /// kilometers on a sphere of radius 6371 km.
    SphericalGreatCircle,
    /// Scalar time stamps in days; absolute difference.
    TimeDays,
}

/// Compactly supported spherical covariance kernel:
/// `k(d) = 1 - (3/2)(d/θ) + (1/2)(d/θ)³` for `d <= θ`, zero beyond.
pub fn covariance_kernel<T: Scalar>(d: T, theta: T) -> Result<T> {
    if !(theta > T::zero()) {
        return Err(Error::InvalidArgument("kernel range theta must be positive".into()));
    }
    if d < T::zero() {
        return Err(Error::InvalidArgument("distances are nonnegative".into()));
    }
    if d > theta {
        return Ok(T::zero());
    }
    let r = d / theta;
    let half = real::<T>(0.5);
    let three_half = real::<T>(1.5);
    Ok(T::one() - three_half * r + half * r * r * r)
}

fn metric_distance<T: Scalar>(a: &[T], b: &[T], metric: Metric) -> Result<T> {
    match metric {
        Metric::Euclidean => {
            if a.len() != b.len() {
                return Err(Error::InvalidArgument("points of mixed dimension".into()));
            }
            let mut acc = T::zero();
            for (x, y) in a.iter().zip(b) {
                let d = *x - *y;
                acc = acc + d * d;
            }
            Ok(acc.sqrt())
        }
        Metric::SphericalGreatCircle => {
            if a.len() != 2 || b.len() != 2 {
                return Err(Error::InvalidArgument(
                    "great-circle points are (lat, lon) pairs in degrees".into(),
                ));
            }
            let to_rad = real::<T>(std::f64::consts::PI / 180.0);
            let (la1, lo1) = (a[0] * to_rad, a[1] * to_rad);
            let (la2, lo2) = (b[0] * to_rad, b[1] * to_rad);
            let half = real::<T>(0.5);
            let sdla = ((la2 - la1) * half).sin();
            let sdlo = ((lo2 - lo1) * half).sin();
            let h = sdla * sdla + la1.cos() * la2.cos() * sdlo * sdlo;
            let h = h.min(T::one()).max(T::zero());
            let radius_km = real::<T>(6371.0);
            let two = T::one() + T::one();
            Ok(radius_km * two * h.sqrt().asin())
        }
        Metric::TimeDays => {
            if a.len() != 1 || b.len() != 1 {
                return Err(Error::InvalidArgument("time coordinates are scalars".into()));
            }
            Ok((a[0] - b[0]).abs())
        }
    }
}

/// Builds the dense covariance matrix `K[i][j] = k(dist(cᵢ, cⱼ); θ)` over the
/// given coordinates and verifies it is positive definite. Coincident or
/// otherwise degenerate point configurations surface as
/// [`Error::Degenerate`] from the factorization check.
pub fn build_covariance<T: Scalar>(
    coords: &[Vec<T>],
    theta: T,
    metric: Metric,
) -> Result<DenseSpd<T>> {
    if coords.is_empty() {
        return Err(Error::InvalidArgument("covariance needs at least one point".into()));
    }
    let n = coords.len();
    let mut mat = Mat::zeros(n, n);
    for i in 0..n {
        mat.set(i, i, T::one());
        for j in i + 1..n {
            let d = metric_distance(&coords[i], &coords[j], metric)?;
            let v = covariance_kernel(d, theta)?;
            mat.set(i, j, v);
            mat.set(j, i, v);
        }
    }
    DenseSpd::new(mat)
}
