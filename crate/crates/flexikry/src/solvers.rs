//! Iteration drivers assembling weight updates, decomposition steps,
//! projected solves, and discrepancy-principle selection into named
//! methods.
//!
//! Naming follows `projection`-`algorithm`-`groups`:
//!
//! | variant        | decomposition    | projected problem                   |
//! |----------------|------------------|-------------------------------------|
//! | `flsqr`        | Golub–Kahan      | least squares, λ = 0                |
//! | `hybrid-flsqr` | Golub–Kahan      | + λ‖y‖²                             |
//! | `irw-flsqr`    | Golub–Kahan      | + λ‖R̃y‖², R̃ from QR of W_k Z_k      |
//! | `hybrid-fgmres`| Arnoldi          | + λ‖y‖²                             |
//! | `hybrid-sd`    | generalized GK   | + α‖y‖² + λ‖R_W y‖²                 |
//!
//! and the regularizer picks the weights: `l2` keeps W = I (the method
//! degenerates to its non-flexible counterpart), `l1` reweights every entry
//! on its own, `group` reweights by group norms, `combined` mixes both.
//! Weights at iteration k come from the previous iterate, so W₁ = I.

use crate::groups::{
    combined_weights, compute_weights, group_norm, singleton_groups, GroupStructure,
    WeightVector, DEFAULT_TAU,
};
use crate::krylov::{
    arnoldi_init, arnoldi_step, discrepancy_lambda, discrepancy_pair, fggk_init, fggk_step,
    golub_kahan_init, golub_kahan_step, solve_projected_sd, solve_projected_tikhonov,
    Breakdown, DpOutcome, KrylovState, ProjectedSolution, ThinQr,
};
use crate::problems::TestProblem;
use crate::scalar::{norm2, real, Scalar};
use crate::linops::SpdOperator;
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Projection/decomposition family of a solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Flexible LSQR, λ = 0, regularized by early stopping.
    Flsqr,
    /// Flexible LSQR with Tikhonov-regularized projected problem.
    HybridFlsqr,
    /// Flexible LSQR with the iteratively reweighted projected penalty.
    IrwFlsqr,
    /// Flexible GMRES with Tikhonov-regularized projected problem.
    HybridFgmres,
    /// Generalized Golub–Kahan solution decomposition with priors.
    HybridSd,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Flsqr => "flsqr",
            Variant::HybridFlsqr => "hybrid-flsqr",
            Variant::IrwFlsqr => "irw-flsqr",
            Variant::HybridFgmres => "hybrid-fgmres",
            Variant::HybridSd => "hybrid-sd",
        }
    }
}

/// Which sparsity pattern drives the reweighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    /// Group sparsity over the configured groups.
    Group,
    /// Elementwise sparsity (singleton groups).
    L1,
    /// No reweighting; weights stay identity.
    L2,
    /// Elementwise and group weights mixed through `tau_lambda`.
    Combined,
}

impl Regularizer {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regularizer::Group => "group",
            Regularizer::L1 => "l1",
            Regularizer::L2 => "l2",
            Regularizer::Combined => "combined",
        }
    }
}

/// How λ is chosen each iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode<T> {
    /// Discrepancy principle against η·noise_norm.
    Dp,
    /// The given value at every iteration.
    Fixed(T),
    /// λ = 0: the plain flexible method, regularized by early stopping.
    None,
}

/// Full description of one solver run.
#[derive(Debug, Clone)]
pub struct SolverConfig<T> {
    pub variant: Variant,
    pub regularizer: Regularizer,
    /// Group structure over the transform-domain coefficients; also defines
    /// the `group_norm` column of the trace.
    pub groups: GroupStructure,
    /// Weight smoothing constant.
    pub tau: T,
    /// Discrepancy safety factor.
    pub eta: T,
    /// Mixing ratio for the combined regularizer.
    pub tau_lambda: T,
    /// Coupling α = γλ for the solution-decomposition variant.
    pub gamma: T,
    pub max_iters: usize,
    pub lambda_mode: LambdaMode<T>,
    /// Store the solution every this many iterations (0 = final only); the
    /// final iterate is always stored.
    pub snapshot_every: usize,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(variant: Variant, regularizer: Regularizer, groups: GroupStructure) -> Self {
        SolverConfig {
            variant,
            regularizer,
            groups,
            tau: real::<T>(DEFAULT_TAU),
            eta: real::<T>(1.01),
            tau_lambda: T::one(),
            gamma: T::one(),
            max_iters: 50,
            lambda_mode: LambdaMode::Dp,
            snapshot_every: 0,
        }
    }

    /// Config for a canonical solver name (see [`parse_solver_name`]), with
    /// the plain variants set to λ = 0 and the rest to the discrepancy
    /// principle.
    pub fn for_name(name: &str, groups: GroupStructure) -> Result<Self> {
        let (variant, regularizer) = parse_solver_name(name)?;
        let mut cfg = SolverConfig::new(variant, regularizer, groups);
        if variant == Variant::Flsqr {
            cfg.lambda_mode = LambdaMode::None;
        }
        Ok(cfg)
    }

    /// Canonical name of this variant/regularizer pair.
    pub fn name(&self) -> &'static str {
        solver_display_name(self.variant, self.regularizer)
    }
}

/// Every canonical solver name accepted by [`parse_solver_name`].
pub const SOLVER_NAMES: &[&str] = &[
    "flsqr",
    "flsqr-g",
    "hybrid-lsqr",
    "hybrid-flsqr",
    "hybrid-flsqr-g",
    "hybrid-flsqr-c",
    "hybrid-gmres",
    "hybrid-fgmres",
    "hybrid-fgmres-g",
    "hybrid-fgmres-c",
    "irw-flsqr",
    "irw-flsqr-g",
    "hybrid-sd",
    "hybrid-sd-g",
];

/// Maps a canonical solver name to its variant and regularizer. The plain
/// `hybrid-lsqr`/`hybrid-gmres` names are the l2 (identity-weight) cases of
/// their flexible counterparts; an `-g` suffix selects group weights, `-c`
/// the combined ones, no suffix elementwise sparsity.
pub fn parse_solver_name(name: &str) -> Result<(Variant, Regularizer)> {
    let pair = match name {
        "flsqr" => (Variant::Flsqr, Regularizer::L1),
        "flsqr-g" => (Variant::Flsqr, Regularizer::Group),
        "hybrid-lsqr" => (Variant::HybridFlsqr, Regularizer::L2),
        "hybrid-flsqr" => (Variant::HybridFlsqr, Regularizer::L1),
        "hybrid-flsqr-g" => (Variant::HybridFlsqr, Regularizer::Group),
        "hybrid-flsqr-c" => (Variant::HybridFlsqr, Regularizer::Combined),
        "hybrid-gmres" => (Variant::HybridFgmres, Regularizer::L2),
        "hybrid-fgmres" => (Variant::HybridFgmres, Regularizer::L1),
        "hybrid-fgmres-g" => (Variant::HybridFgmres, Regularizer::Group),
        "hybrid-fgmres-c" => (Variant::HybridFgmres, Regularizer::Combined),
        "irw-flsqr" => (Variant::IrwFlsqr, Regularizer::L1),
        "irw-flsqr-g" => (Variant::IrwFlsqr, Regularizer::Group),
        "hybrid-sd" => (Variant::HybridSd, Regularizer::L1),
        "hybrid-sd-g" => (Variant::HybridSd, Regularizer::Group),
        other => {
            return Err(Error::InvalidArgument(format!("unknown solver name {other:?}")))
        }
    };
    Ok(pair)
}

/// Inverse of [`parse_solver_name`] for the supported pairs.
pub fn solver_display_name(variant: Variant, regularizer: Regularizer) -> &'static str {
    match (variant, regularizer) {
        (Variant::Flsqr, Regularizer::L1) => "flsqr",
        (Variant::Flsqr, Regularizer::Group) => "flsqr-g",
        (Variant::HybridFlsqr, Regularizer::L2) => "hybrid-lsqr",
        (Variant::HybridFlsqr, Regularizer::L1) => "hybrid-flsqr",
        (Variant::HybridFlsqr, Regularizer::Group) => "hybrid-flsqr-g",
        (Variant::HybridFlsqr, Regularizer::Combined) => "hybrid-flsqr-c",
        (Variant::HybridFgmres, Regularizer::L2) => "hybrid-gmres",
        (Variant::HybridFgmres, Regularizer::L1) => "hybrid-fgmres",
        (Variant::HybridFgmres, Regularizer::Group) => "hybrid-fgmres-g",
        (Variant::HybridFgmres, Regularizer::Combined) => "hybrid-fgmres-c",
        (Variant::IrwFlsqr, Regularizer::L1) => "irw-flsqr",
        (Variant::IrwFlsqr, Regularizer::Group) => "irw-flsqr-g",
        (Variant::HybridSd, Regularizer::L1) => "hybrid-sd",
        (Variant::HybridSd, Regularizer::Group) => "hybrid-sd-g",
        (v, r) => {
            debug_assert!(false, "no canonical name for {v:?}/{r:?}");
            "unnamed"
        }
    }
}

/// One recorded iteration.
#[derive(Debug, Clone)]
pub struct IterRecord<T> {
    pub k: usize,
    pub lambda: T,
    pub alpha: T,
    /// Discrepancy search outcome, when the discrepancy principle ran.
    pub dp: Option<DpOutcome>,
    /// ‖H y − β e₁‖ of the projected problem.
    pub projected_residual: T,
    /// ‖A x_k − b‖₂ computed directly from the mapped-back iterate.
    pub full_residual: T,
    pub rel_error: Option<T>,
    /// ‖Ψ x_k‖₂,₁ over the configured groups.
    pub group_norm: T,
}

/// Stored solution at one iteration; decomposition variants carry the
/// smooth and sparse parts too.
#[derive(Debug, Clone)]
pub struct Snapshot<T> {
    pub x: Vec<T>,
    pub xi: Option<Vec<T>>,
    pub s: Option<Vec<T>>,
}

/// Result of a solver run: per-iteration records, stored solutions, and
/// the final iterate.
#[derive(Debug, Clone)]
pub struct SolverTrace<T> {
    pub records: Vec<IterRecord<T>>,
    snapshots: BTreeMap<usize, Snapshot<T>>,
    pub final_x: Vec<T>,
    pub final_xi: Option<Vec<T>>,
    pub final_s: Option<Vec<T>>,
    pub breakdown: Option<Breakdown>,
    x_dim: usize,
}

impl<T: Scalar> SolverTrace<T> {
    /// Completed iterations.
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn snapshot(&self, k: usize) -> Option<&Snapshot<T>> {
        self.snapshots.get(&k)
    }

    pub fn snapshot_iterations(&self) -> Vec<usize> {
        self.snapshots.keys().copied().collect()
    }

    /// (iteration, error) with the smallest recorded relative error.
    pub fn best_error(&self) -> Option<(usize, T)> {
        self.records
            .iter()
            .filter_map(|r| r.rel_error.map(|e| (r.k, e)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
    }

    pub fn final_error(&self) -> Option<T> {
        self.records.last().and_then(|r| r.rel_error)
    }

    /// CSV serialization with the fixed column set.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "k,lambda,alpha,proj_residual,full_residual,rel_error,group_norm\n",
        );
        for r in &self.records {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                r.k, r.lambda, r.alpha, r.projected_residual, r.full_residual
            );
            match r.rel_error {
                Some(e) => {
                    let _ = write!(out, ",{e}");
                }
                None => out.push(','),
            }
            let _ = writeln!(out, ",{}", r.group_norm);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Solution at iteration `k`: zero at k = 0, otherwise the snapshot stored
/// there.
pub fn reconstruct<T: Scalar>(trace: &SolverTrace<T>, k: usize) -> Result<Vec<T>> {
    if k == 0 {
        return Ok(vec![T::zero(); trace.x_dim]);
    }
    trace
        .snapshots
        .get(&k)
        .map(|s| s.x.clone())
        .ok_or(Error::MissingSnapshot(k))
}

/// ‖x − x_true‖₂ / ‖x_true‖₂.
pub fn relative_error<T: Scalar>(x: &[T], x_true: &[T]) -> Result<T> {
    if x.len() != x_true.len() {
        return Err(Error::InvalidArgument("vector lengths differ".into()));
    }
    let tn = norm2(x_true);
    if !(tn > T::zero()) {
        return Err(Error::InvalidArgument("reference vector has zero norm".into()));
    }
    let mut acc = T::zero();
    for (a, b) in x.iter().zip(x_true) {
        let d = *a - *b;
        acc = acc + d * d;
    }
    Ok(acc.sqrt() / tn)
}

fn validate<T: Scalar>(problem: &TestProblem<T>, config: &SolverConfig<T>) -> Result<()> {
    let n = problem.x_dim();
    if config.groups.len() != n {
        return Err(Error::InvalidArgument(format!(
            "group structure covers {} entries, problem has {}",
            config.groups.len(),
            n
        )));
    }
    if !(config.tau > T::zero()) || !config.tau.is_finite() {
        return Err(Error::InvalidArgument("tau must be positive and finite".into()));
    }
    if !(config.eta >= T::one()) || !config.eta.is_finite() {
        return Err(Error::InvalidArgument("eta must be at least 1".into()));
    }
    if !(config.gamma >= T::zero()) || !config.gamma.is_finite() {
        return Err(Error::InvalidArgument("gamma must be nonnegative".into()));
    }
    if config.regularizer == Regularizer::Combined {
        if !(config.tau_lambda > T::zero()) || !config.tau_lambda.is_finite() {
            return Err(Error::InvalidArgument(
                "the combined regularizer needs a positive tau_lambda".into(),
            ));
        }
        if config.variant == Variant::HybridSd {
            return Err(Error::InvalidArgument(
                "the decomposition variant supports group or elementwise weights only".into(),
            ));
        }
    }
    if let LambdaMode::Fixed(v) = config.lambda_mode {
        if !(v >= T::zero()) || !v.is_finite() {
            return Err(Error::InvalidArgument(
                "fixed lambda must be finite and nonnegative".into(),
            ));
        }
    }
    match config.variant {
        Variant::HybridFgmres => {
            if problem.a.rows() != problem.a.cols() {
                return Err(Error::InvalidArgument(
                    "GMRES-family solvers need a square operator".into(),
                ));
            }
        }
        Variant::HybridSd => {
            let priors = problem.priors.as_ref().ok_or_else(|| {
                Error::InvalidArgument(
                    "the decomposition variant needs problem priors (Q, R)".into(),
                )
            })?;
            if !priors.r.has_inverse() {
                return Err(Error::InvalidArgument(
                    "the noise prior R must expose its inverse".into(),
                ));
            }
            if priors.q.dim() != n || priors.r.dim() != problem.data_dim() {
                return Err(Error::InvalidArgument("prior dimensions do not match".into()));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Applies the inverse of a wrapped operator; lets the generalized
/// decomposition consume R through its inverse action.
struct InverseView<'a, T>(&'a dyn SpdOperator<T>);

impl<T: Scalar> SpdOperator<T> for InverseView<'_, T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply_into(&self, x: &[T], out: &mut [T]) {
        self.0.apply_inverse_into(x, out);
    }
    fn apply_inverse_into(&self, x: &[T], out: &mut [T]) {
        self.0.apply_into(x, out);
    }
    fn has_inverse(&self) -> bool {
        true
    }
}

fn weights_for<T: Scalar>(
    config: &SolverConfig<T>,
    singles: &GroupStructure,
    z: &[T],
) -> Result<WeightVector<T>> {
    match config.regularizer {
        Regularizer::L2 => Ok(WeightVector::ones(z.len())),
        Regularizer::L1 => compute_weights(singles, z, config.tau),
        Regularizer::Group => compute_weights(&config.groups, z, config.tau),
        Regularizer::Combined => {
            let w1 = compute_weights(singles, z, config.tau)?;
            let w2 = compute_weights(&config.groups, z, config.tau)?;
            combined_weights(&w1, &w2, config.tau_lambda)
        }
    }
}

enum Stepper<'a, T> {
    GolubKahan,
    Arnoldi,
    Fggk { q: &'a dyn SpdOperator<T>, r: &'a dyn SpdOperator<T> },
}

/// Runs one solver to `max_iters` iterations (or breakdown) and returns the
/// trace.
pub fn run<T: Scalar>(problem: &TestProblem<T>, config: &SolverConfig<T>) -> Result<SolverTrace<T>> {
    validate(problem, config)?;
    let n = problem.x_dim();
    let a = problem.a.as_ref();
    let psi = problem.psi.as_ref();
    let singles = singleton_groups(n);

    let stepper = match config.variant {
        Variant::HybridFgmres => Stepper::Arnoldi,
        Variant::HybridSd => {
            let priors = problem.priors.as_ref().unwrap();
            Stepper::Fggk { q: priors.q.as_ref(), r: priors.r.as_ref() }
        }
        _ => Stepper::GolubKahan,
    };

    let mut trace = SolverTrace {
        records: Vec::new(),
        snapshots: BTreeMap::new(),
        final_x: vec![T::zero(); n],
        final_xi: None,
        final_s: None,
        breakdown: None,
        x_dim: n,
    };
    if config.max_iters == 0 {
        return Ok(trace);
    }

    let mut state: KrylovState<T> = match stepper {
        Stepper::Arnoldi => arnoldi_init(a, &problem.b)?,
        Stepper::GolubKahan => golub_kahan_init(a, psi, &problem.b)?,
        Stepper::Fggk { q, r } => {
            let r_inv = InverseView(r);
            fggk_init(a, q, &r_inv, &problem.b)?
        }
    };
    let beta = state.beta();
    let dp_target = config.eta * problem.noise_norm;

    let mut prev_z: Option<Vec<T>> = None;
    let mut last: Option<(usize, Snapshot<T>)> = None;

    for k in 1..=config.max_iters {
        let weights = match &prev_z {
            None => WeightVector::ones(n),
            Some(z) => weights_for(config, &singles, z)?,
        };
        match stepper {
            Stepper::Arnoldi => arnoldi_step(a, psi, &weights, &mut state)?,
            Stepper::GolubKahan => golub_kahan_step(a, psi, &weights, &mut state)?,
            Stepper::Fggk { q, r } => {
                let r_inv = InverseView(r);
                fggk_step(a, q, &r_inv, &weights, &mut state)?;
            }
        }
        let h = state.projected_matrix();

        let (sol, dp): (ProjectedSolution<T>, Option<DpOutcome>) = match config.variant {
            Variant::Flsqr | Variant::HybridFlsqr | Variant::HybridFgmres => {
                match config.lambda_mode {
                    LambdaMode::None => (solve_projected_tikhonov(&h, beta, T::zero())?, None),
                    LambdaMode::Fixed(v) => (solve_projected_tikhonov(&h, beta, v)?, None),
                    LambdaMode::Dp => {
                        if dp_target > T::zero() {
                            let sel = discrepancy_lambda(&h, beta, problem.noise_norm, config.eta)?;
                            (solve_projected_tikhonov(&h, beta, sel.lambda)?, Some(sel.outcome))
                        } else {
                            (solve_projected_tikhonov(&h, beta, T::zero())?, None)
                        }
                    }
                }
            }
            Variant::IrwFlsqr => {
                let mut qr = ThinQr::new();
                for z in state.directions() {
                    qr.update(weights.apply(z));
                }
                let r_tilde = qr.r_matrix();
                match config.lambda_mode {
                    LambdaMode::None => {
                        (solve_projected_sd(&h, beta, T::zero(), T::zero(), &r_tilde)?, None)
                    }
                    LambdaMode::Fixed(v) => {
                        (solve_projected_sd(&h, beta, T::zero(), v, &r_tilde)?, None)
                    }
                    LambdaMode::Dp => {
                        if dp_target > T::zero() {
                            let sel = discrepancy_pair(
                                &h,
                                beta,
                                &r_tilde,
                                problem.noise_norm,
                                config.eta,
                                T::zero(),
                            )?;
                            (
                                solve_projected_sd(&h, beta, T::zero(), sel.lambda, &r_tilde)?,
                                Some(sel.outcome),
                            )
                        } else {
                            (
                                solve_projected_sd(&h, beta, T::zero(), T::zero(), &r_tilde)?,
                                None,
                            )
                        }
                    }
                }
            }
            Variant::HybridSd => {
                let r_w = state.z_qr().expect("generalized state carries a QR").r_matrix();
                match config.lambda_mode {
                    LambdaMode::None => {
                        (solve_projected_sd(&h, beta, T::zero(), T::zero(), &r_w)?, None)
                    }
                    LambdaMode::Fixed(v) => {
                        (solve_projected_sd(&h, beta, config.gamma * v, v, &r_w)?, None)
                    }
                    LambdaMode::Dp => {
                        if dp_target > T::zero() {
                            let sel = discrepancy_pair(
                                &h,
                                beta,
                                &r_w,
                                problem.noise_norm,
                                config.eta,
                                config.gamma,
                            )?;
                            (
                                solve_projected_sd(&h, beta, sel.alpha, sel.lambda, &r_w)?,
                                Some(sel.outcome),
                            )
                        } else {
                            (solve_projected_sd(&h, beta, T::zero(), T::zero(), &r_w)?, None)
                        }
                    }
                }
            }
        };

        let z_vec = state.combine_z(&sol.y);
        let (x, xi, s) = match stepper {
            Stepper::Fggk { q, .. } => {
                let xi = q.apply(&state.combine_v(&sol.y));
                let x: Vec<T> = xi.iter().zip(&z_vec).map(|(a, b)| *a + *b).collect();
                (x, Some(xi), Some(z_vec.clone()))
            }
            _ => (psi.inverse(&z_vec), None, None),
        };

        let ax = a.apply(&x);
        let mut resid = problem.b.clone();
        for (r, v) in resid.iter_mut().zip(&ax) {
            *r -= *v;
        }
        let record = IterRecord {
            k,
            lambda: sol.lambda,
            alpha: sol.alpha,
            dp,
            projected_residual: sol.projected_residual_norm,
            full_residual: norm2(&resid),
            rel_error: relative_error(&x, &problem.x_true).ok(),
            group_norm: group_norm(&config.groups, &z_vec),
        };
        trace.records.push(record);

        prev_z = Some(match &s {
            Some(sv) => sv.clone(),
            None => z_vec,
        });
        let snap = Snapshot { x, xi, s };
        if config.snapshot_every > 0 && k % config.snapshot_every == 0 {
            trace.snapshots.insert(k, snap.clone());
        }
        last = Some((k, snap));

        if let Some(b) = state.breakdown() {
            trace.breakdown = Some(b);
            break;
        }
    }

    if let Some((k, snap)) = last {
        trace.final_x = snap.x.clone();
        trace.final_xi = snap.xi.clone();
        trace.final_s = snap.s.clone();
        trace.snapshots.entry(k).or_insert(snap);
    }
    Ok(trace)
}
