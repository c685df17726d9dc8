//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Sl0Error>;

#[derive(Debug, Error)]
pub enum Sl0Error {
    /// The raw matrix rows are numerically rank-deficient: the smallest
    /// singular value fell below `RANK_TOL` times the largest.
    #[error("rank-deficient rows: sigma_min/sigma_max = {ratio:.3e} below cutoff {cutoff:.0e}")]
    RankDeficient { ratio: f64, cutoff: f64 },

    /// A matrix that was required to have orthonormal rows does not.
    #[error("rows not orthonormal: max |A·Aᵀ - I| = {max_dev:.3e}")]
    NotOrthonormal { max_dev: f64 },

    /// An enumeration would exceed the configured resource cap.
    #[error("{what} needs {required} units, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        required: u128,
        cap: u128,
    },

    /// The sparsity budget k violates the convergence hypothesis
    /// k < n₀/(2(1+γ)).
    #[error("sparsity budget {k} not below n0/(2(1+gamma)) = {bound:.6}")]
    SparsityTooHigh { k: f64, bound: f64 },

    /// The requested accuracy δ is too small for the given noise level.
    #[error("target accuracy delta = {delta:.3e} must exceed {required:.3e}")]
    DeltaTooSmall { delta: f64, required: f64 },

    /// Degenerate input for a schedule derivation (zero measurement,
    /// already-solved regime, noise dominating the signal, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// k′ must satisfy k < k′ < n₀/(2+2γ).
    #[error("invalid k': need k = {k} < k' = {k_prime:.6} < {bound:.6}")]
    InvalidKPrime { k: f64, k_prime: f64, bound: f64 },

    /// An iterate picked up a non-finite value; the schedule is mis-derived
    /// or the step size unstable.
    #[error("non-finite iterate at stage {stage}, inner step {step}")]
    NonFinite { stage: usize, step: usize },

    /// A documented operation precondition does not hold.
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    /// Brute-force search found no support of size ≤ k_max fitting the
    /// measurement.
    #[error("no support of size <= {k_max} fits (best residual {best_residual:.3e})")]
    NoSparseSolution { k_max: usize, best_residual: f64 },

    /// Parameter outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Malformed matrix text or instance file.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
