//! Sparse recovery of underdetermined linear systems by smoothed-ℓ⁰ (SL0)
//! minimization.
//!
//! The crate is organized around the two-loop SL0 solver: an outer loop that
//! anneals the smoothing scale σ of a quadratic-spline surrogate for the ℓ⁰
//! norm, and an inner loop of fixed-step projected gradient ascent on the
//! affine feasible set {s : A·s = x}. Alongside the solver it provides
//!
//! - [`dictionary`]: row-orthonormalized measurement matrices and the
//!   null-space / feasible-set projectors every other module works through,
//! - [`objective`]: the spline surrogate family, its derivatives, and the
//!   clipped ℓ⁰ norm,
//! - [`constants`]: exact small-scale computation of the energy-ratio
//!   constant γ(n₀) and asymmetric restricted isometry constants, their
//!   analytic bounds, and Gaussian-ensemble asymptotics,
//! - [`solver`]: schedule derivations (guaranteed, Gaussian, noisy, and
//!   heuristic modes) and the two-loop iteration with full tracing,
//! - [`msl0`]: the batched multiple-measurement-vector variant,
//! - [`oracle`]: brute-force ℓ⁰ ground truth for tests and verification,
//! - [`harness`]: instance generation, sweeps, scaling studies, and the
//!   property-verification suite.

// parameter guards use `!(x > 0.0)` so NaN fails validation too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod dictionary;
pub mod error;
pub mod harness;
pub mod msl0;
pub mod objective;
pub mod oracle;
pub mod solver;
pub mod subsets;

pub use dictionary::Dictionary;
pub use error::{Result, Sl0Error};
pub use objective::SplineFamily;
pub use solver::{Sl0Schedule, SolveTrace};

/// Tolerance for orthogonality checks (A·Aᵀ = I and friends). Double
/// precision leaves roughly five digits of headroom at m ≤ 4096.
pub const ORTHO_TOL: f64 = 1e-10;

/// Relative singular-value cutoff below which a raw matrix is treated as
/// rank-deficient and refused.
pub const RANK_TOL: f64 = 1e-10;

/// Resource limits for the exhaustive-enumeration operations. Past the caps
/// the operations refuse rather than silently approximate.
#[derive(Debug, Clone, Copy)]
pub struct Limits {
    /// Maximum number of index subsets an enumeration may visit.
    pub enumeration_cap: u64,
    /// Maximum m for which an explicit null-space basis may be materialized.
    pub basis_cap: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            enumeration_cap: 2_000_000,
            basis_cap: 64,
        }
    }
}

pub(crate) mod util {
    /// Pairwise (tree) summation; keeps accumulated rounding near 1e-13·len
    /// for the vector sums the objective takes at m up to 4096.
    pub fn pairwise_sum(values: &[f64]) -> f64 {
        if values.len() <= 32 {
            return values.iter().sum();
        }
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}
