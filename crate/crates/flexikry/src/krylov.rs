//! Flexible Krylov recurrences and projected regularized solves.
//!
//! Three decompositions share one state type:
//!
//! * flexible Arnoldi (square A):  `A Ψ⁻¹ Z_k = V_{k+1} H_k`,
//! * flexible Golub–Kahan:         `A Ψ⁻¹ Z_k = U_{k+1} M_k` together with
//!   `Ψ⁻ᵀ Aᵀ U_{k+1} = V_{k+1} S_{k+1}`,
//! * generalized Golub–Kahan with priors (Q, R):
//!   `A (Q V_k + Z_k) = U_{k+1} M_k`, `Aᵀ R⁻¹ U_{k+1} = V_{k+1} S_{k+1}`,
//!   with `Uᵀ R⁻¹ U = I` and `Vᵀ Q V = I`.
//!
//! The direction z_k fed to the operator at step k is the current basis
//! vector v_k passed through the iteration's diagonal preconditioner,
//! z_k = W_k⁻¹ v_k, which is what makes the methods "flexible": W_k may
//! change every step and the relations above still hold by construction.
//!
//! Orthogonalization always runs a second full pass (CGS2/MGS2 style);
//! a step whose new basis vector collapses below `1e-14` of its
//! pre-orthogonalization norm records a breakdown, keeps the projected
//! column it produced, and refuses further steps.
//!
//! The projected problems are small and dense:
//!
//! ```text
//!   min_y ‖H y − β e₁‖² + λ ‖y‖²               (Tikhonov form)
//!   min_y ‖M y − β e₁‖² + α ‖y‖² + λ ‖R_W y‖²  (two-parameter form)
//! ```
//!
//! and the discrepancy principle picks λ so the projected residual matches
//! η‖e‖ by bisection on log₁₀ λ over [-12, 12].

use crate::dense::{lstsq, Mat};
use crate::groups::WeightVector;
use crate::linops::{LinearOperator, SpdOperator};
use crate::scalar::{axpy, dot, norm2, real, Scalar};
use crate::transforms::Transform;
use crate::{Error, Result};

/// Relative collapse threshold under which a step is declared a breakdown.
const BREAKDOWN_RTOL: f64 = 1e-14;

/// Which recurrence a [`KrylovState`] is running.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompKind {
    Arnoldi,
    GolubKahan,
    Fggk,
}

/// Which basis collapsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakdownKind {
    /// The data-space basis (u for Golub–Kahan/FGGK, v for Arnoldi) gained
    /// no new direction.
    DataBasis,
    /// The solution-space basis v gained no new direction.
    SolutionBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Breakdown {
    /// 1-based iteration at which the collapse happened.
    pub at_iteration: usize,
    pub kind: BreakdownKind,
}

/// Incremental thin QR with re-orthogonalized Gram–Schmidt updates.
#[derive(Debug, Clone)]
pub struct ThinQr<T> {
    q: Vec<Vec<T>>,
    r_cols: Vec<Vec<T>>,
    dependent: bool,
}

impl<T: Scalar> Default for ThinQr<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ThinQr<T> {
    pub fn new() -> Self {
        ThinQr { q: Vec::new(), r_cols: Vec::new(), dependent: false }
    }

    pub fn len(&self) -> usize {
        self.r_cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_cols.is_empty()
    }

    /// Marks the factorization as having met a numerically dependent column
    /// (new diagonal below `1e-14` of the column norm).
    pub fn dependent(&self) -> bool {
        self.dependent
    }

    pub fn q_columns(&self) -> &[Vec<T>] {
        &self.q
    }

    /// Appends one column, extending Q and R.
    pub fn update(&mut self, col: Vec<T>) {
        let col_norm = norm2(&col);
        let mut w = col;
        let mut coeffs = vec![T::zero(); self.q.len()];
        for _pass in 0..2 {
            for (i, q) in self.q.iter().enumerate() {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
                coeffs[i] += c;
            }
        }
        let rnorm = norm2(&w);
        if rnorm <= real::<T>(BREAKDOWN_RTOL) * col_norm {
            self.dependent = true;
        }
        if rnorm > T::zero() {
            let inv = T::one() / rnorm;
            for x in w.iter_mut() {
                *x *= inv;
            }
            self.q.push(w);
        } else {
            let dim = self.q.first().map_or(0, |q| q.len());
            self.q.push(vec![T::zero(); dim]);
        }
        coeffs.push(rnorm);
        self.r_cols.push(coeffs);
    }

    /// The upper triangular factor as a dense k x k matrix.
    pub fn r_matrix(&self) -> Mat<T> {
        Mat::from_columns(self.len(), &self.r_cols)
    }
}

/// State of one flexible decomposition: bases, directions, and the growing
/// projected matrices.
#[derive(Debug, Clone)]
pub struct KrylovState<T> {
    kind: DecompKind,
    beta: T,
    u: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    z: Vec<Vec<T>>,
    /// Column j holds rows 0..=j+1 of the Hessenberg H (Arnoldi) or M.
    h_cols: Vec<Vec<T>>,
    /// Column j holds rows 0..=j of the upper triangular S.
    s_cols: Vec<Vec<T>>,
    qr_z: Option<ThinQr<T>>,
    breakdown: Option<Breakdown>,
}

impl<T: Scalar> KrylovState<T> {
    pub fn kind(&self) -> DecompKind {
        self.kind
    }

    /// Completed iterations (columns of Z and of the projected matrix).
    pub fn iterations(&self) -> usize {
        self.z.len()
    }

    /// ‖b‖ in the decomposition's data-space norm.
    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn breakdown(&self) -> Option<Breakdown> {
        self.breakdown
    }

    pub fn basis_u(&self) -> &[Vec<T>] {
        &self.u
    }

    pub fn basis_v(&self) -> &[Vec<T>] {
        &self.v
    }

    /// Preconditioned directions z_1..z_k.
    pub fn directions(&self) -> &[Vec<T>] {
        &self.z
    }

    /// The projected (k+1) x k Hessenberg matrix H (Arnoldi) or M.
    pub fn projected_matrix(&self) -> Mat<T> {
        Mat::from_columns(self.z.len() + 1, &self.h_cols)
    }

    /// The (k+1) x (k+1) upper triangular S (Golub–Kahan and FGGK only).
    pub fn s_matrix(&self) -> Option<Mat<T>> {
        if self.s_cols.is_empty() {
            None
        } else {
            Some(Mat::from_columns(self.s_cols.len(), &self.s_cols))
        }
    }

    /// Incremental thin QR of Z (FGGK only).
    pub fn z_qr(&self) -> Option<&ThinQr<T>> {
        self.qr_z.as_ref()
    }

    /// `Z_k y` for `y` of length at most k.
    pub fn combine_z(&self, y: &[T]) -> Vec<T> {
        assert!(y.len() <= self.z.len());
        let n = self.z.first().map_or(0, |z| z.len());
        let mut out = vec![T::zero(); n];
        for (c, zc) in y.iter().zip(&self.z) {
            axpy(*c, zc, &mut out);
        }
        out
    }

    /// `V_k y` for `y` of length at most the basis size.
    pub fn combine_v(&self, y: &[T]) -> Vec<T> {
        assert!(y.len() <= self.v.len());
        let n = self.v.first().map_or(0, |v| v.len());
        let mut out = vec![T::zero(); n];
        for (c, vc) in y.iter().zip(&self.v) {
            axpy(*c, vc, &mut out);
        }
        out
    }

    fn ensure_steppable(&self, kind: DecompKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidArgument(
                "state was initialized for a different decomposition".into(),
            ));
        }
        if let Some(b) = self.breakdown {
            return Err(Error::InvalidArgument(format!(
                "cannot step past the breakdown recorded at iteration {}",
                b.at_iteration
            )));
        }
        Ok(())
    }
}

fn normalize_or_err<T: Scalar>(mut v: Vec<T>, what: &str) -> Result<(Vec<T>, T)> {
    let n = norm2(&v);
    if !(n > T::zero()) || !n.is_finite() {
        return Err(Error::InvalidArgument(format!("{what} has zero or non-finite norm")));
    }
    let inv = T::one() / n;
    for x in v.iter_mut() {
        *x *= inv;
    }
    Ok((v, n))
}

/// Two-pass modified Gram–Schmidt against an orthonormal basis. Returns the
/// accumulated coefficients; `w` is left as the orthogonal remainder.
fn mgs2<T: Scalar>(basis: &[Vec<T>], w: &mut [T]) -> Vec<T> {
    let mut coeffs = vec![T::zero(); basis.len()];
    for _pass in 0..2 {
        for (i, q) in basis.iter().enumerate() {
            let c = dot(q, w);
            axpy(-c, q, w);
            coeffs[i] += c;
        }
    }
    coeffs
}

/// Two-pass classical Gram–Schmidt in the inner product `<x, y> = xᵀ G y`,
/// with `G` given by its action. The basis must be G-orthonormal. Returns
/// (coefficients, norm before, norm after) and leaves `w` as the remainder.
fn weighted_cgs2<T: Scalar>(
    basis: &[Vec<T>],
    w: &mut [T],
    metric: impl Fn(&[T]) -> Vec<T>,
) -> (Vec<T>, T, T) {
    let gw = metric(w);
    let norm_before = dot(w, &gw).max(T::zero()).sqrt();
    let mut coeffs = vec![T::zero(); basis.len()];
    let mut gw = gw;
    for pass in 0..2 {
        if pass > 0 {
            gw = metric(w);
        }
        let step: Vec<T> = basis.iter().map(|q| dot(q, &gw)).collect();
        for (i, c) in step.iter().enumerate() {
            axpy(-*c, &basis[i], w);
            coeffs[i] += *c;
        }
    }
    let gw = metric(w);
    let norm_after = dot(w, &gw).max(T::zero()).sqrt();
    (coeffs, norm_before, norm_after)
}

/// Starts a flexible Arnoldi decomposition: v₁ = b / ‖b‖₂. Requires a
/// square operator.
pub fn arnoldi_init<T: Scalar>(a: &dyn LinearOperator<T>, b: &[T]) -> Result<KrylovState<T>> {
    if a.rows() != a.cols() {
        return Err(Error::InvalidArgument(format!(
            "Arnoldi needs a square operator, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if b.len() != a.rows() {
        return Err(Error::InvalidArgument("rhs length does not match operator".into()));
    }
    let (v1, beta) = normalize_or_err(b.to_vec(), "right-hand side")?;
    Ok(KrylovState {
        kind: DecompKind::Arnoldi,
        beta,
        u: Vec::new(),
        v: vec![v1],
        z: Vec::new(),
        h_cols: Vec::new(),
        s_cols: Vec::new(),
        qr_z: None,
        breakdown: None,
    })
}

/// One flexible Arnoldi step with the given diagonal preconditioner:
/// z_k = W_k⁻¹ v_k, expand with A Ψ⁻¹ z_k.
pub fn arnoldi_step<T: Scalar>(
    a: &dyn LinearOperator<T>,
    psi: &dyn Transform<T>,
    weights: &WeightVector<T>,
    st: &mut KrylovState<T>,
) -> Result<()> {
    st.ensure_steppable(DecompKind::Arnoldi)?;
    let k = st.z.len();
    if weights.len() != st.v[k].len() {
        return Err(Error::InvalidArgument("weight length does not match basis".into()));
    }
    let zk = weights.solve(&st.v[k]);
    let mut w = a.apply(&psi.inverse(&zk));
    let norm_before = norm2(&w);
    let mut col = mgs2(&st.v, &mut w);
    let norm_after = norm2(&w);
    col.push(norm_after);
    st.z.push(zk);
    st.h_cols.push(col);
    if norm_after <= real::<T>(BREAKDOWN_RTOL) * norm_before {
        st.breakdown =
            Some(Breakdown { at_iteration: k + 1, kind: BreakdownKind::SolutionBasis });
    } else {
        let inv = T::one() / norm_after;
        for x in w.iter_mut() {
            *x *= inv;
        }
        st.v.push(w);
    }
    Ok(())
}

/// Starts a flexible Golub–Kahan decomposition: u₁ = b / ‖b‖₂ and
/// v₁ = Ψ⁻ᵀ Aᵀ u₁ normalized, with the norm recorded as S₁₁.
pub fn golub_kahan_init<T: Scalar>(
    a: &dyn LinearOperator<T>,
    psi: &dyn Transform<T>,
    b: &[T],
) -> Result<KrylovState<T>> {
    if b.len() != a.rows() {
        return Err(Error::InvalidArgument("rhs length does not match operator".into()));
    }
    if !a.has_adjoint() {
        return Err(Error::InvalidArgument("Golub–Kahan needs the adjoint of A".into()));
    }
    let (u1, beta) = normalize_or_err(b.to_vec(), "right-hand side")?;
    let g = psi.inverse_transpose(&a.apply_adjoint(&u1));
    let (v1, s11) = normalize_or_err(g, "initial adjoint direction")?;
    Ok(KrylovState {
        kind: DecompKind::GolubKahan,
        beta,
        u: vec![u1],
        v: vec![v1],
        z: Vec::new(),
        h_cols: Vec::new(),
        s_cols: vec![vec![s11]],
        qr_z: None,
        breakdown: None,
    })
}

/// One flexible Golub–Kahan step: expand the data basis with A Ψ⁻¹ W_k⁻¹
/// v_k and the solution basis with Ψ⁻ᵀ Aᵀ u_{k+1}.
pub fn golub_kahan_step<T: Scalar>(
    a: &dyn LinearOperator<T>,
    psi: &dyn Transform<T>,
    weights: &WeightVector<T>,
    st: &mut KrylovState<T>,
) -> Result<()> {
    st.ensure_steppable(DecompKind::GolubKahan)?;
    let k = st.z.len();
    if weights.len() != st.v[k].len() {
        return Err(Error::InvalidArgument("weight length does not match basis".into()));
    }
    let zk = weights.solve(&st.v[k]);
    let mut w = a.apply(&psi.inverse(&zk));
    let norm_before = norm2(&w);
    let mut mcol = mgs2(&st.u, &mut w);
    let norm_after = norm2(&w);
    mcol.push(norm_after);
    st.z.push(zk);
    st.h_cols.push(mcol);
    if norm_after <= real::<T>(BREAKDOWN_RTOL) * norm_before {
        st.breakdown = Some(Breakdown { at_iteration: k + 1, kind: BreakdownKind::DataBasis });
        return Ok(());
    }
    let inv = T::one() / norm_after;
    for x in w.iter_mut() {
        *x *= inv;
    }
    st.u.push(w);

    let mut g = psi.inverse_transpose(&a.apply_adjoint(st.u.last().unwrap()));
    let g_before = norm2(&g);
    let mut scol = mgs2(&st.v, &mut g);
    let g_after = norm2(&g);
    scol.push(g_after);
    st.s_cols.push(scol);
    if g_after <= real::<T>(BREAKDOWN_RTOL) * g_before {
        st.breakdown =
            Some(Breakdown { at_iteration: k + 1, kind: BreakdownKind::SolutionBasis });
        return Ok(());
    }
    let inv = T::one() / g_after;
    for x in g.iter_mut() {
        *x *= inv;
    }
    st.v.push(g);
    Ok(())
}

/// Starts a generalized Golub–Kahan decomposition with priors:
/// u₁ = b / ‖b‖_{R⁻¹} and v₁ = Aᵀ R⁻¹ u₁ normalized in the Q-norm.
pub fn fggk_init<T: Scalar>(
    a: &dyn LinearOperator<T>,
    q: &dyn SpdOperator<T>,
    r_inv: &dyn SpdOperator<T>,
    b: &[T],
) -> Result<KrylovState<T>> {
    if b.len() != a.rows() {
        return Err(Error::InvalidArgument("rhs length does not match operator".into()));
    }
    if r_inv.dim() != a.rows() || q.dim() != a.cols() {
        return Err(Error::InvalidArgument("prior dimensions do not match operator".into()));
    }
    if !a.has_adjoint() {
        return Err(Error::InvalidArgument("the generalized decomposition needs Aᵀ".into()));
    }
    let rb = r_inv.apply(b);
    let beta = dot(b, &rb).max(T::zero()).sqrt();
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(Error::InvalidArgument("right-hand side has zero or non-finite norm".into()));
    }
    let inv = T::one() / beta;
    let u1: Vec<T> = b.iter().map(|x| *x * inv).collect();
    let mut g = a.apply_adjoint(&r_inv.apply(&u1));
    let qg = q.apply(&g);
    let s11 = dot(&g, &qg).max(T::zero()).sqrt();
    if !(s11 > T::zero()) || !s11.is_finite() {
        return Err(Error::InvalidArgument("initial adjoint direction has zero norm".into()));
    }
    let inv = T::one() / s11;
    for x in g.iter_mut() {
        *x *= inv;
    }
    Ok(KrylovState {
        kind: DecompKind::Fggk,
        beta,
        u: vec![u1],
        v: vec![g],
        z: Vec::new(),
        h_cols: Vec::new(),
        s_cols: vec![vec![s11]],
        qr_z: Some(ThinQr::new()),
        breakdown: None,
    })
}

/// One generalized Golub–Kahan step: z_k = W_k⁻¹ v_k, expand the data basis
/// with A(Q v_k + z_k) in the R⁻¹ inner product and the parameter basis with
/// Aᵀ R⁻¹ u_{k+1} in the Q inner product; the thin QR of Z grows alongside.
pub fn fggk_step<T: Scalar>(
    a: &dyn LinearOperator<T>,
    q: &dyn SpdOperator<T>,
    r_inv: &dyn SpdOperator<T>,
    weights: &WeightVector<T>,
    st: &mut KrylovState<T>,
) -> Result<()> {
    st.ensure_steppable(DecompKind::Fggk)?;
    let k = st.z.len();
    if weights.len() != st.v[k].len() {
        return Err(Error::InvalidArgument("weight length does not match basis".into()));
    }
    let vk = st.v[k].clone();
    let zk = weights.solve(&vk);
    let qv = q.apply(&vk);
    let sum: Vec<T> = qv.iter().zip(&zk).map(|(a, b)| *a + *b).collect();
    let mut w = a.apply(&sum);
    let (mut mcol, norm_before, norm_after) =
        weighted_cgs2(&st.u, &mut w, |x| r_inv.apply(x));
    mcol.push(norm_after);
    st.qr_z.as_mut().expect("FGGK state carries a thin QR").update(zk.clone());
    st.z.push(zk);
    st.h_cols.push(mcol);
    if norm_after <= real::<T>(BREAKDOWN_RTOL) * norm_before {
        st.breakdown = Some(Breakdown { at_iteration: k + 1, kind: BreakdownKind::DataBasis });
        return Ok(());
    }
    let inv = T::one() / norm_after;
    for x in w.iter_mut() {
        *x *= inv;
    }
    st.u.push(w);

    let mut g = a.apply_adjoint(&r_inv.apply(st.u.last().unwrap()));
    let (mut scol, g_before, g_after) = weighted_cgs2(&st.v, &mut g, |x| q.apply(x));
    scol.push(g_after);
    st.s_cols.push(scol);
    if g_after <= real::<T>(BREAKDOWN_RTOL) * g_before {
        st.breakdown =
            Some(Breakdown { at_iteration: k + 1, kind: BreakdownKind::SolutionBasis });
        return Ok(());
    }
    let inv = T::one() / g_after;
    for x in g.iter_mut() {
        *x *= inv;
    }
    st.v.push(g);
    Ok(())
}

/// Solution of a projected regularized least-squares problem.
#[derive(Debug, Clone)]
pub struct ProjectedSolution<T> {
    pub y: Vec<T>,
    pub lambda: T,
    pub alpha: T,
    /// ‖H y − β e₁‖₂, evaluated directly on the returned y.
    pub projected_residual_norm: T,
    /// The unregularized system was numerically rank deficient and y is the
    /// minimum-norm solution.
    pub rank_deficient: bool,
}

fn projected_residual<T: Scalar>(h: &Mat<T>, beta: T, y: &[T]) -> T {
    let hy = h.matvec(y);
    let mut acc = T::zero();
    for (i, v) in hy.iter().enumerate() {
        let r = if i == 0 { *v - beta } else { *v };
        acc = acc + r * r;
    }
    acc.sqrt()
}

/// Solves `min_y ‖H y − β e₁‖² + λ ‖y‖²` through QR on the stacked matrix.
/// With λ = 0 and a rank-deficient H the minimum-norm solution is returned
/// and flagged.
pub fn solve_projected_tikhonov<T: Scalar>(
    h: &Mat<T>,
    beta: T,
    lambda: T,
) -> Result<ProjectedSolution<T>> {
    if h.cols() == 0 {
        return Err(Error::InvalidArgument("projected matrix has no columns".into()));
    }
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidArgument("lambda must be finite and nonnegative".into()));
    }
    let m = h.rows();
    let k = h.cols();
    let extra = if lambda > T::zero() { k } else { 0 };
    let mut stacked = Mat::zeros(m + extra, k);
    for i in 0..m {
        for j in 0..k {
            stacked.set(i, j, h.get(i, j));
        }
    }
    if extra > 0 {
        let sq = lambda.sqrt();
        for j in 0..k {
            stacked.set(m + j, j, sq);
        }
    }
    let mut rhs = vec![T::zero(); m + extra];
    rhs[0] = beta;
    let sol = lstsq(&stacked, &rhs)?;
    let res = projected_residual(h, beta, &sol.solution);
    Ok(ProjectedSolution {
        y: sol.solution,
        lambda,
        alpha: T::zero(),
        projected_residual_norm: res,
        rank_deficient: sol.rank_deficient,
    })
}

/// Solves `min_y ‖M y − β e₁‖² + α ‖y‖² + λ ‖R_W y‖²` through QR on the
/// stacked matrix; `r_w` is k x k.
pub fn solve_projected_sd<T: Scalar>(
    m_mat: &Mat<T>,
    beta: T,
    alpha: T,
    lambda: T,
    r_w: &Mat<T>,
) -> Result<ProjectedSolution<T>> {
    let k = m_mat.cols();
    if k == 0 {
        return Err(Error::InvalidArgument("projected matrix has no columns".into()));
    }
    if r_w.rows() != k || r_w.cols() != k {
        return Err(Error::InvalidArgument("R_W must be k x k".into()));
    }
    for (name, par) in [("alpha", alpha), ("lambda", lambda)] {
        if !(par >= T::zero()) || !par.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{name} must be finite and nonnegative"
            )));
        }
    }
    let m = m_mat.rows();
    let alpha_rows = if alpha > T::zero() { k } else { 0 };
    let lambda_rows = if lambda > T::zero() { k } else { 0 };
    let mut stacked = Mat::zeros(m + alpha_rows + lambda_rows, k);
    for i in 0..m {
        for j in 0..k {
            stacked.set(i, j, m_mat.get(i, j));
        }
    }
    if alpha_rows > 0 {
        let sq = alpha.sqrt();
        for j in 0..k {
            stacked.set(m + j, j, sq);
        }
    }
    if lambda_rows > 0 {
        let sq = lambda.sqrt();
        for i in 0..k {
            for j in 0..k {
                stacked.set(m + alpha_rows + i, j, sq * r_w.get(i, j));
            }
        }
    }
    let mut rhs = vec![T::zero(); stacked.rows()];
    rhs[0] = beta;
    let sol = lstsq(&stacked, &rhs)?;
    let res = projected_residual(m_mat, beta, &sol.solution);
    Ok(ProjectedSolution {
        y: sol.solution,
        lambda,
        alpha,
        projected_residual_norm: res,
        rank_deficient: sol.rank_deficient,
    })
}

/// Outcome of a discrepancy-principle search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpOutcome {
    /// |r(λ) − η‖e‖| ≤ 1e-6 η‖e‖ at the returned λ.
    Reached,
    /// Even λ = 0 leaves the residual at or above the target; λ = 0 returned.
    UnreachableLow,
    /// The target is at or above β = r(∞); the bracket maximum is returned.
    UnreachableHigh,
    /// Bisection exhausted its iterations without meeting the tolerance.
    NotConverged,
}

impl DpOutcome {
    /// Whether the discrepancy target was actually met.
    pub fn reached(&self) -> bool {
        matches!(self, DpOutcome::Reached)
    }
}

#[derive(Debug, Clone)]
pub struct DpSelection<T> {
    pub lambda: T,
    pub alpha: T,
    /// Projected residual at the returned parameters.
    pub residual: T,
    pub outcome: DpOutcome,
}

const DP_EXP_LO: f64 = -12.0;
const DP_EXP_HI: f64 = 12.0;
const DP_MAX_BISECTIONS: usize = 60;

fn dp_bisect<T: Scalar>(
    eval: &mut dyn FnMut(T) -> Result<T>,
    beta: T,
    target: T,
) -> Result<(T, T, DpOutcome)> {
    let tol = real::<T>(1e-6) * target;
    let r0 = eval(T::zero())?;
    if r0 >= target {
        return Ok((T::zero(), r0, DpOutcome::UnreachableLow));
    }
    if target >= beta {
        let lam = real::<T>(10f64.powf(DP_EXP_HI));
        let r = eval(lam)?;
        return Ok((lam, r, DpOutcome::UnreachableHigh));
    }
    let mut lo = DP_EXP_LO;
    let mut hi = DP_EXP_HI;
    let lam_lo = real::<T>(10f64.powf(lo));
    let r_lo = eval(lam_lo)?;
    if r_lo >= target {
        // The crossing hides below the bracket; the best representable
        // answer is the bracket edge.
        if (r_lo - target).abs() <= tol {
            return Ok((lam_lo, r_lo, DpOutcome::Reached));
        }
        return Ok((lam_lo, r_lo, DpOutcome::NotConverged));
    }
    let lam_hi = real::<T>(10f64.powf(hi));
    let r_hi = eval(lam_hi)?;
    if r_hi <= target {
        if (r_hi - target).abs() <= tol {
            return Ok((lam_hi, r_hi, DpOutcome::Reached));
        }
        return Ok((lam_hi, r_hi, DpOutcome::NotConverged));
    }
    let mut lam = lam_lo;
    let mut r = r_lo;
    for _ in 0..DP_MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        lam = real::<T>(10f64.powf(mid));
        r = eval(lam)?;
        if (r - target).abs() <= tol {
            return Ok((lam, r, DpOutcome::Reached));
        }
        if r < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lam, r, DpOutcome::NotConverged))
}

/// Discrepancy principle for the Tikhonov-form projected problem: picks λ
/// with ‖H y(λ) − β e₁‖ = η · noise_norm by bisection on log₁₀ λ. The
/// residual is monotone nondecreasing in λ with range [r(0), β).
pub fn discrepancy_lambda<T: Scalar>(
    h: &Mat<T>,
    beta: T,
    noise_norm: T,
    eta: T,
) -> Result<DpSelection<T>> {
    let target = eta * noise_norm;
    if !(target > T::zero()) || !target.is_finite() {
        return Err(Error::InvalidArgument(
            "discrepancy target eta * noise_norm must be positive".into(),
        ));
    }
    let mut eval = |lam: T| -> Result<T> {
        Ok(solve_projected_tikhonov(h, beta, lam)?.projected_residual_norm)
    };
    let (lambda, residual, outcome) = dp_bisect(&mut eval, beta, target)?;
    Ok(DpSelection { lambda, alpha: T::zero(), residual, outcome })
}

/// Discrepancy principle for the two-parameter projected problem with the
/// coupling α = ratio · λ (ratio = 0 reduces to the pure ‖R_W y‖ penalty):
/// picks λ with ‖M y(λ) − β e₁‖ = η · noise_norm.
pub fn discrepancy_pair<T: Scalar>(
    m_mat: &Mat<T>,
    beta: T,
    r_w: &Mat<T>,
    noise_norm: T,
    eta: T,
    ratio: T,
) -> Result<DpSelection<T>> {
    let target = eta * noise_norm;
    if !(target > T::zero()) || !target.is_finite() {
        return Err(Error::InvalidArgument(
            "discrepancy target eta * noise_norm must be positive".into(),
        ));
    }
    if !(ratio >= T::zero()) || !ratio.is_finite() {
        return Err(Error::InvalidArgument("coupling ratio must be nonnegative".into()));
    }
    let mut eval = |lam: T| -> Result<T> {
        Ok(solve_projected_sd(m_mat, beta, ratio * lam, lam, r_w)?.projected_residual_norm)
    };
    let (lambda, residual, outcome) = dp_bisect(&mut eval, beta, target)?;
    Ok(DpSelection { lambda, alpha: ratio * lambda, residual, outcome })
}
