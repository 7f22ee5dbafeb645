//! Small dense matrices and factorizations.
//!
//! The Krylov drivers only ever solve projected problems whose dimension is
//! the iteration count, so everything here is written for matrices of a few
//! hundred rows at most: row-major storage, Householder least squares,
//! Cholesky for symmetric positive definite systems, and a cyclic Jacobi
//! eigensolver used as a rank-deficient fallback.

use crate::scalar::{real, Scalar};
use crate::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    /// Builds a matrix from column vectors. Short columns are zero-padded at
    /// the bottom, which is how the growing Hessenberg/triangular projected
    /// matrices are materialized.
    pub fn from_columns(rows: usize, cols: &[Vec<T>]) -> Self {
        let mut m = Mat::zeros(rows, cols.len());
        for (j, col) in cols.iter().enumerate() {
            assert!(col.len() <= rows, "column longer than the requested row count");
            for (i, v) in col.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut m = Mat::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            for (j, v) in row.iter().enumerate() {
                m.set(i, j, *v);
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![T::zero(); self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            y[i] = crate::scalar::dot(row, x);
        }
        y
    }

    pub fn t_matvec(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.rows);
        let mut x = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            crate::scalar::axpy(y[i], row, &mut x);
        }
        x
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(l, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    /// Gram matrix AᵀA.
    pub fn gram(&self) -> Mat<T> {
        let mut g = Mat::zeros(self.cols, self.cols);
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..self.cols {
                for l in j..self.cols {
                    let v = g.get(j, l) + row[j] * row[l];
                    g.set(j, l, v);
                }
            }
        }
        for j in 0..self.cols {
            for l in 0..j {
                g.set(j, l, g.get(l, j));
            }
        }
        g
    }

    pub fn frob_norm(&self) -> T {
        crate::scalar::norm2(&self.data)
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

/// Least-squares solution of an overdetermined system by Householder QR.
pub struct Lstsq<T> {
    pub solution: Vec<T>,
    /// Set when some diagonal entry of R is negligible relative to the
    /// largest one; the solution is then a minimum-norm pseudoinverse
    /// solution computed through the spectral fallback.
    pub rank_deficient: bool,
}

/// Solves `min ‖A y − b‖₂` for `A` with `rows ≥ cols`.
///
/// Full-rank systems go through Householder QR. If R's diagonal collapses
/// (relative tolerance 1e-14) the minimum-norm solution is produced from a
/// spectral decomposition of AᵀA instead and flagged.
pub fn lstsq<T: Scalar>(a: &Mat<T>, b: &[T]) -> Result<Lstsq<T>> {
    let m = a.rows();
    let n = a.cols();
    if m < n {
        return Err(Error::InvalidArgument(format!(
            "least squares needs rows >= cols, got {m}x{n}"
        )));
    }
    if b.len() != m {
        return Err(Error::InvalidArgument("rhs length mismatch".into()));
    }
    if n == 0 {
        return Ok(Lstsq { solution: Vec::new(), rank_deficient: false });
    }

    let mut r = a.clone();
    let mut rhs = b.to_vec();
    let mut diag = vec![T::zero(); n];
    for j in 0..n {
        // Householder reflection zeroing column j below the diagonal.
        let mut nrm = T::zero();
        for i in j..m {
            nrm = nrm + r.get(i, j) * r.get(i, j);
        }
        let nrm = nrm.sqrt();
        diag[j] = nrm;
        if nrm == T::zero() {
            continue;
        }
        let ajj = r.get(j, j);
        let alpha = if ajj >= T::zero() { -nrm } else { nrm };
        let mut v = vec![T::zero(); m - j];
        v[0] = ajj - alpha;
        for i in j + 1..m {
            v[i - j] = r.get(i, j);
        }
        let vtv = crate::scalar::dot(&v, &v);
        if vtv > T::zero() {
            for c in j..n {
                let mut s = T::zero();
                for i in j..m {
                    s = s + v[i - j] * r.get(i, c);
                }
                let f = (T::one() + T::one()) * s / vtv;
                for i in j..m {
                    let val = r.get(i, c) - f * v[i - j];
                    r.set(i, c, val);
                }
            }
            let mut s = T::zero();
            for i in j..m {
                s = s + v[i - j] * rhs[i];
            }
            let f = (T::one() + T::one()) * s / vtv;
            for i in j..m {
                rhs[i] = rhs[i] - f * v[i - j];
            }
        }
        r.set(j, j, alpha);
        for i in j + 1..m {
            r.set(i, j, T::zero());
        }
    }

    let max_d = diag.iter().fold(T::zero(), |acc, d| acc.max(d.abs()));
    let tol = max_d * real::<T>(1e-14);
    if diag.iter().any(|d| d.abs() <= tol) {
        return Ok(Lstsq { solution: minnorm_via_spectrum(a, b), rank_deficient: true });
    }

    let mut y = vec![T::zero(); n];
    for j in (0..n).rev() {
        let mut s = rhs[j];
        for c in j + 1..n {
            s = s - r.get(j, c) * y[c];
        }
        y[j] = s / r.get(j, j);
    }
    Ok(Lstsq { solution: y, rank_deficient: false })
}

/// Minimum-norm least-squares solution through the eigendecomposition of AᵀA.
fn minnorm_via_spectrum<T: Scalar>(a: &Mat<T>, b: &[T]) -> Vec<T> {
    let g = a.gram();
    let (evals, evecs) = jacobi_eigh(&g);
    let atb = a.t_matvec(b);
    let max_e = evals.iter().fold(T::zero(), |acc, e| acc.max(e.abs()));
    // Null eigenvalues of the Gram matrix surface as rounding noise of size
    // eps * ||A'A||; cut just above that floor.
    let tol = max_e * T::epsilon() * T::from_usize(a.cols().max(4)).unwrap();
    let n = a.cols();
    let mut y = vec![T::zero(); n];
    for (idx, &e) in evals.iter().enumerate() {
        if e > tol {
            let col = evecs.col(idx);
            let c = crate::scalar::dot(&col, &atb) / e;
            crate::scalar::axpy(c, &col, &mut y);
        }
    }
    y
}

/// Lower Cholesky factor of a symmetric positive definite matrix, or `None`
/// when a pivot is not strictly positive.
pub fn cholesky<T: Scalar>(a: &Mat<T>) -> Option<Mat<T>> {
    let n = a.rows();
    if n != a.cols() {
        return None;
    }
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for p in 0..j {
                s = s - l.get(i, p) * l.get(j, p);
            }
            if i == j {
                if s <= T::zero() {
                    return None;
                }
                l.set(i, i, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Some(l)
}

/// Solves L Lᵀ x = b given the lower factor L.
pub fn cholesky_solve<T: Scalar>(l: &Mat<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    assert_eq!(b.len(), n);
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s = s - l.get(i, j) * y[j];
        }
        y[i] = s / l.get(i, i);
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in i + 1..n {
            s = s - l.get(j, i) * x[j];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (unsorted) and the matrix whose columns are the
/// corresponding orthonormal eigenvectors.
pub fn jacobi_eigh<T: Scalar>(a: &Mat<T>) -> (Vec<T>, Mat<T>) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "eigendecomposition needs a square matrix");
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    let eps = real::<T>(1e-30);
    for _sweep in 0..64 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off = off + m.get(i, j) * m.get(i, j);
            }
        }
        let scale = m.frob_norm();
        if off.sqrt() <= scale * real::<T>(1e-15) + eps {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() <= eps {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / ((T::one() + T::one()) * apq);
                let t = {
                    let s = if theta >= T::zero() { T::one() } else { -T::one() };
                    s / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = m.get(i, p);
                    let aiq = m.get(i, q);
                    m.set(i, p, c * aip - s * aiq);
                    m.set(i, q, s * aip + c * aiq);
                }
                for j in 0..n {
                    let apj = m.get(p, j);
                    let aqj = m.get(q, j);
                    m.set(p, j, c * apj - s * aqj);
                    m.set(q, j, s * apj + c * aqj);
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    let evals = (0..n).map(|i| m.get(i, i)).collect();
    (evals, v)
}
