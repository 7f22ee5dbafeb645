//! Flexible Krylov solvers for group-sparsity regularized inverse problems.
//!
//! The crate solves large linear inverse problems
//!
//! ```text
//!   min_x ‖A x − b‖₂² + λ ‖Ψ x‖₂,₁
//! ```
//!
//! where the mixed norm ‖z‖₂,₁ = Σᵢ ‖z_gᵢ‖₂ promotes sparsity across a
//! (possibly overlapping) collection of index groups gᵢ. The group term is
//! handled by iteratively reweighted quadratic majorization: at each outer
//! step a diagonal weight matrix turns the penalty into ‖W z‖₂², and the
//! weighted problem is attacked with a flexible Krylov method whose
//! right preconditioner W_k⁻¹ changes from one iteration to the next.
//!
//! Module map:
//!
//! * [`linops`] — matrix-free linear operators (blurs, Kronecker products,
//!   dense matrices, covariance operators).
//! * [`transforms`] — orthogonal sparsifying transforms (2-D Haar wavelets).
//! * [`groups`] — group structures, mixed norms, and reweighting.
//! * [`krylov`] — flexible Arnoldi / Golub–Kahan / generalized Golub–Kahan
//!   recurrences plus the projected regularized solves and discrepancy
//!   principle parameter selection.
//! * [`solvers`] — the outer solver drivers and their iteration traces.
//! * [`problems`] — synthetic test problem generators.
//! * [`pgm`] — plain-text PGM image input/output.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases at the crate root pin the common double-precision choices.

pub mod dense;
pub mod groups;
pub mod krylov;
pub mod linops;
pub mod pgm;
pub mod problems;
pub mod scalar;
pub mod solvers;
pub mod transforms;

pub use scalar::Scalar;

/// Errors reported by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A geometric or numerical configuration admits no valid result
    /// (e.g. a covariance matrix that is not positive definite).
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    /// A reconstruction was requested at an iteration with no stored snapshot.
    #[error("no snapshot stored at iteration {0}")]
    MissingSnapshot(usize),
    /// A text artifact (PGM, group file, metadata) failed to parse.
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub type Mat64 = dense::Mat<f64>;
pub type WeightVector64 = groups::WeightVector<f64>;
pub type KrylovState64 = krylov::KrylovState<f64>;
pub type SolverConfig64 = solvers::SolverConfig<f64>;
pub type SolverTrace64 = solvers::SolverTrace<f64>;
pub type TestProblem64 = problems::TestProblem<f64>;
