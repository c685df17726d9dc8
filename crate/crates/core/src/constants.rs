//! Recovery-gating constants: the worst-case null-space energy ratio γ(n₀),
//! asymmetric restricted isometry constants, their analytic bounds, and
//! Gaussian-ensemble asymptotics.
//!
//! γ(n₀) is the maximum, over index sets |I| ≤ n₀ and nonzero null-space
//! vectors s, of ‖π_I(s)‖²/‖π_{I^c}(s)‖². With B = Dᵀ an orthonormal basis
//! of null(A) stored as columns, BᵀB = I turns the inner maximization into a
//! single symmetric eigenproblem per subset: the ratio maximum equals
//! λ/(1−λ) where λ = σ²_max(B_I) and B_I keeps the rows of B indexed by I.
//! Enumerating only |I| = n₀ suffices because enlarging I can only grow the
//! ratio. λ ≥ 1 − 1e-9 at some support is reported as a unique-representation
//! failure (γ infinite) rather than a huge finite number.

use crate::dictionary::Dictionary;
use crate::error::{Result, Sl0Error};
use crate::harness::rng::{derive_rng, gaussian_matrix};
use crate::subsets::{binomial, enumerate_subsets};
use crate::Limits;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Eigenvalues this close to 1 mean some null-space vector concentrates
/// entirely on the subset: a unique-representation failure.
const URP_FAILURE_TOL: f64 = 1e-9;

/// Subsets per enumeration chunk; fixed so reductions are independent of
/// worker count.
const CHUNK: u128 = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMethod {
    ExactEnumeration,
    BoundAric,
    BoundSubset,
    GaussianAsymptotic,
}

/// γ(n₀) with provenance. `value = None` is the infinity flag (URP failure
/// at that support size, or a vacuous analytic bound).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaReport {
    pub n0: usize,
    /// Finite value, or `None` for the +infinity flag.
    pub value: Option<f64>,
    pub infinite: bool,
    pub method: GammaMethod,
    /// Index set achieving the maximum (exact method only).
    pub argmax_subset: Option<Vec<usize>>,
}

impl GammaReport {
    pub fn finite(&self) -> Option<f64> {
        self.value
    }
}

/// Tightest constants with (1−δ_min)‖s‖² ≤ ‖As‖² ≤ (1+δ_max)‖s‖² over
/// k-sparse s, with the supports attaining each side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AricReport {
    pub k: usize,
    pub delta_min: f64,
    pub delta_max: f64,
    pub worst_min_subset: Vec<usize>,
    pub worst_max_subset: Vec<usize>,
}

fn check_enumeration_cap(m: usize, k: usize, limits: &Limits) -> Result<u128> {
    let total = binomial(m as u64, k as u64);
    if total > limits.enumeration_cap as u128 {
        return Err(Sl0Error::CapExceeded {
            what: "subset enumeration",
            required: total,
            cap: limits.enumeration_cap as u128,
        });
    }
    Ok(total)
}

/// Largest eigenvalue of Mᵀ·M where M is the `rows`-indexed row submatrix of
/// `b`; computed on the smaller Gram side.
fn submatrix_lambda_max(b: &DMatrix<f64>, rows: &[usize]) -> f64 {
    let d = b.ncols();
    let k = rows.len();
    if k == 0 {
        return 0.0;
    }
    let gram = if k <= d {
        // k×k Gram of the selected rows
        let mut g = DMatrix::zeros(k, k);
        for (gi, &ri) in rows.iter().enumerate() {
            for (gj, &rj) in rows.iter().enumerate().take(gi + 1) {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += b[(ri, c)] * b[(rj, c)];
                }
                g[(gi, gj)] = acc;
                g[(gj, gi)] = acc;
            }
        }
        g
    } else {
        let mut g = DMatrix::zeros(d, d);
        for &ri in rows {
            for ci in 0..d {
                for cj in 0..=ci {
                    g[(ci, cj)] += b[(ri, ci)] * b[(ri, cj)];
                }
            }
        }
        for ci in 0..d {
            for cj in 0..ci {
                g[(cj, ci)] = g[(ci, cj)];
            }
        }
        g
    };
    gram.symmetric_eigen().eigenvalues.max()
}

#[derive(Clone, Copy)]
struct BestSubset {
    score: f64,
    rank: u128,
    infinite: bool,
}

impl BestSubset {
    fn empty() -> Self {
        BestSubset {
            score: f64::NEG_INFINITY,
            rank: u128::MAX,
            infinite: false,
        }
    }

    /// Deterministic preference: infinity beats finite, larger score beats
    /// smaller, ties go to the earlier colex rank.
    fn better_than(&self, other: &BestSubset) -> bool {
        match (self.infinite, other.infinite) {
            (true, false) => true,
            (false, true) => false,
            _ => {
                if self.score != other.score {
                    self.score > other.score
                } else {
                    self.rank < other.rank
                }
            }
        }
    }
}

fn parallel_subset_max<F>(m: usize, k: usize, total: u128, score: F) -> BestSubset
where
    F: Fn(&[usize]) -> (f64, bool) + Sync,
{
    let chunks = total.div_ceil(CHUNK).max(1) as usize;
    let partials: Vec<BestSubset> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut best = BestSubset::empty();
            enumerate_subsets(m, k, chunk as u128 * CHUNK, CHUNK, |rank, subset| {
                let (s, infinite) = score(subset);
                let cand = BestSubset {
                    score: s,
                    rank,
                    infinite,
                };
                if cand.better_than(&best) {
                    best = cand;
                }
            });
            best
        })
        .collect();
    let mut best = BestSubset::empty();
    for cand in partials {
        if cand.better_than(&best) {
            best = cand;
        }
    }
    best
}

/// Exact γ(n₀) by subset enumeration over the null-space basis.
pub fn gamma_exact(d: &Dictionary, n0: usize, limits: &Limits) -> Result<GammaReport> {
    let (n, m) = (d.rows(), d.cols());
    if n0 > n {
        return Err(Sl0Error::InvalidParameter(format!(
            "gamma support size n0 = {n0} exceeds n = {n}"
        )));
    }
    if n0 == 0 {
        return Ok(GammaReport {
            n0,
            value: Some(0.0),
            infinite: false,
            method: GammaMethod::ExactEnumeration,
            argmax_subset: Some(Vec::new()),
        });
    }
    let total = check_enumeration_cap(m, n0, limits)?;
    let basis = d.nullspace_basis(limits)?.transpose(); // m×(m−n), orthonormal columns

    let best = parallel_subset_max(m, n0, total, |subset| {
        let lambda = submatrix_lambda_max(&basis, subset);
        if lambda >= 1.0 - URP_FAILURE_TOL {
            (f64::INFINITY, true)
        } else {
            (lambda / (1.0 - lambda), false)
        }
    });

    let argmax = crate::subsets::colex_unrank(m, n0, best.rank);
    Ok(GammaReport {
        n0,
        value: if best.infinite { None } else { Some(best.score) },
        infinite: best.infinite,
        method: GammaMethod::ExactEnumeration,
        argmax_subset: Some(argmax),
    })
}

/// Upper bound ‖A‖₂² / min_{|I|=n₀} σ²_min(A_I) − 1 ≥ γ(n₀), by enumeration
/// of column submatrices. Infinite iff some A_I is singular.
pub fn gamma_bound_subset(d: &Dictionary, n0: usize, limits: &Limits) -> Result<GammaReport> {
    let (n, m) = (d.rows(), d.cols());
    if n0 == 0 || n0 > n {
        return Err(Sl0Error::InvalidParameter(format!(
            "bound support size n0 = {n0} out of range 1..={n}"
        )));
    }
    let total = check_enumeration_cap(m, n0, limits)?;
    let a_cols = d.matrix().transpose(); // m×n, row i = column i of A

    // max over subsets of -sigma_min^2, so the shared reducer applies
    let best = parallel_subset_max(m, n0, total, |subset| {
        let smin = column_submatrix_sigma_sq(&a_cols, subset).0;
        (-smin, smin <= 1e-20)
    });

    let spec_sq = d.spectral_norm() * d.spectral_norm();
    let (value, infinite) = if best.infinite {
        (None, true)
    } else {
        (Some(spec_sq / (-best.score) - 1.0), false)
    };
    Ok(GammaReport {
        n0,
        value,
        infinite,
        method: GammaMethod::BoundSubset,
        argmax_subset: None,
    })
}

/// Upper bound ‖A‖₂²/(1 − δ_min(n₀)) − 1 ≥ γ(n₀) through the lower
/// restricted-isometry constant.
pub fn gamma_bound_aric(d: &Dictionary, n0: usize, limits: &Limits) -> Result<GammaReport> {
    let aric = aric_exact(d.matrix(), n0, limits)?;
    let spec_sq = d.spectral_norm() * d.spectral_norm();
    let denom = 1.0 - aric.delta_min;
    let (value, infinite) = if denom <= 1e-12 {
        (None, true)
    } else {
        (Some(spec_sq / denom - 1.0), false)
    };
    Ok(GammaReport {
        n0,
        value,
        infinite,
        method: GammaMethod::BoundAric,
        argmax_subset: None,
    })
}

/// (σ²_min, σ²_max) of the column submatrix with the given column indices;
/// `a_cols` holds the matrix transposed so columns are contiguous rows.
fn column_submatrix_sigma_sq(a_cols: &DMatrix<f64>, cols: &[usize]) -> (f64, f64) {
    let k = cols.len();
    let n = a_cols.ncols();
    let mut gram = DMatrix::zeros(k, k);
    for (gi, &ci) in cols.iter().enumerate() {
        for (gj, &cj) in cols.iter().enumerate().take(gi + 1) {
            let mut acc = 0.0;
            for r in 0..n {
                acc += a_cols[(ci, r)] * a_cols[(cj, r)];
            }
            gram[(gi, gj)] = acc;
            gram[(gj, gi)] = acc;
        }
    }
    let eig = gram.symmetric_eigen();
    (eig.eigenvalues.min().max(0.0), eig.eigenvalues.max())
}

/// Exact asymmetric restricted isometry constants at sparsity k for an
/// arbitrary (not necessarily orthonormalized) matrix.
pub fn aric_exact(a: &DMatrix<f64>, k: usize, limits: &Limits) -> Result<AricReport> {
    let m = a.ncols();
    if k == 0 || k > m {
        return Err(Sl0Error::InvalidParameter(format!(
            "isometry support size k = {k} out of range 1..={m}"
        )));
    }
    let total = check_enumeration_cap(m, k, limits)?;
    let a_cols = a.transpose();

    let worst_min = parallel_subset_max(m, k, total, |subset| {
        (-column_submatrix_sigma_sq(&a_cols, subset).0, false)
    });
    let worst_max = parallel_subset_max(m, k, total, |subset| {
        (column_submatrix_sigma_sq(&a_cols, subset).1, false)
    });

    Ok(AricReport {
        k,
        delta_min: (1.0 - (-worst_min.score)).max(0.0),
        delta_max: (worst_max.score - 1.0).max(0.0),
        worst_min_subset: crate::subsets::colex_unrank(m, k, worst_min.rank),
        worst_max_subset: crate::subsets::colex_unrank(m, k, worst_max.rank),
    })
}

/// Sufficient condition for convergence of the asymptotic solver:
/// α·δ_min(⌈2kα⌉) + ‖A‖₂ ≤ α for some α > 1.
pub fn check_sufficient_condition(
    aric: &AricReport,
    spec_norm: f64,
    k: usize,
    alpha: f64,
) -> Result<bool> {
    if !(alpha > 1.0) {
        return Err(Sl0Error::InvalidParameter(format!(
            "sufficient-condition alpha must exceed 1, got {alpha}"
        )));
    }
    let expected = (2.0 * k as f64 * alpha).ceil() as usize;
    if aric.k != expected {
        return Err(Sl0Error::InvalidParameter(format!(
            "isometry report is for support {}, need ceil(2*k*alpha) = {expected}",
            aric.k
        )));
    }
    Ok(alpha * aric.delta_min + spec_norm <= alpha)
}

/// Deviation floor r₀(α, β) = √(2·(β/α)·ln(e/β)) above which singular-value
/// concentration gives a nontrivial bound.
pub fn r0(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha > 0.0) || !(beta > 0.0) || beta > std::f64::consts::E {
        return Err(Sl0Error::InvalidParameter(format!(
            "need alpha > 0 and 0 < beta <= e, got alpha = {alpha}, beta = {beta}"
        )));
    }
    Ok((2.0 * (beta / alpha) * (std::f64::consts::E / beta).ln()).sqrt())
}

/// Almost-sure asymptotic bound γ(α, β) for Gaussian ensembles with
/// n/m → α and n₀/m → β; `None` is the +infinity flag when the denominator
/// base 1 − √(β/α) − r₀ is not positive.
pub fn gaussian_gamma(alpha: f64, beta: f64) -> Result<Option<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(beta > 0.0 && beta <= alpha) {
        return Err(Sl0Error::InvalidParameter(format!(
            "need 0 < beta <= alpha <= 1, got alpha = {alpha}, beta = {beta}"
        )));
    }
    let base = 1.0 - (beta / alpha).sqrt() - r0(alpha, beta)?;
    if base <= 0.0 {
        return Ok(None);
    }
    let num = (1.0 + (1.0 / alpha).sqrt()).powi(2);
    Ok(Some(num / (base * base)))
}

/// Asymptotic sparsity threshold ρ(α) and its maximizer β*.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhoReport {
    pub alpha: f64,
    pub rho: f64,
    pub beta_star: f64,
}

fn rho_objective(alpha: f64, beta: f64) -> f64 {
    match gaussian_gamma(alpha, beta) {
        Ok(Some(g)) => beta / (2.0 + 2.0 * g),
        _ => 0.0,
    }
}

/// ρ(α) = max over β ∈ (0, α] of β/(2 + 2γ(α, β)), by a 10⁴-point grid
/// refined with golden-section search to 1e-8 in β.
pub fn rho(alpha: f64) -> Result<RhoReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Sl0Error::InvalidParameter(format!(
            "rho is defined for 0 < alpha <= 1, got {alpha}"
        )));
    }
    const GRID: usize = 10_000;
    let mut best_i = 1;
    let mut best = f64::NEG_INFINITY;
    for i in 1..=GRID {
        let beta = alpha * i as f64 / GRID as f64;
        let v = rho_objective(alpha, beta);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = alpha * (best_i.saturating_sub(1)).max(1) as f64 / GRID as f64;
    let hi = alpha * (best_i + 1).min(GRID) as f64 / GRID as f64;

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut dd = a + inv_phi * (b - a);
    let mut fc = rho_objective(alpha, c);
    let mut fd = rho_objective(alpha, dd);
    while (b - a).abs() > 1e-8 {
        if fc > fd {
            b = dd;
            dd = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = rho_objective(alpha, c);
        } else {
            a = c;
            c = dd;
            fc = fd;
            dd = a + inv_phi * (b - a);
            fd = rho_objective(alpha, dd);
        }
    }
    let beta_star = 0.5 * (a + b);
    Ok(RhoReport {
        alpha,
        rho: rho_objective(alpha, beta_star),
        beta_star,
    })
}

/// Parameters of the Gaussian-ensemble probability bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnsembleParams {
    /// n/m.
    pub alpha: f64,
    /// n₀/m.
    pub beta: f64,
    /// Deviation slack; the bound is nontrivial only for r > r₀(α, β).
    pub r: f64,
    /// Slack for the spectral-norm term.
    pub eps_conc: f64,
}

impl EnsembleParams {
    pub fn r0(&self) -> Result<f64> {
        r0(self.alpha, self.beta)
    }
}

/// exp(−n·r²/2 + n·r₀²/2) + exp(−n·ε²/2); the raw value is returned even
/// when vacuous (≥ 1).
pub fn gamma_tail_bound(p: &EnsembleParams, n: usize) -> Result<f64> {
    let r0 = p.r0()?;
    let n = n as f64;
    Ok((-n * p.r * p.r / 2.0 + n * r0 * r0 / 2.0).exp() + (-n * p.eps_conc * p.eps_conc / 2.0).exp())
}

/// Empirical exceedance rates of the singular-value concentration bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub l: usize,
    pub n: usize,
    pub r: f64,
    pub trials: usize,
    pub seed: u64,
    /// Fraction of draws with σ_max > 1 + √(l/n) + r.
    pub sigma_max_exceed_rate: f64,
    /// Fraction of draws with σ_min < 1 − √(l/n) − r.
    pub sigma_min_exceed_rate: f64,
    /// exp(−n·r²/2).
    pub analytic_bound: f64,
    /// Binomial standard error at the analytic bound.
    pub standard_error: f64,
}

impl ConcentrationReport {
    /// Largest empirically acceptable rate: bound + 3·SE.
    pub fn tolerance(&self) -> f64 {
        self.analytic_bound + 3.0 * self.standard_error
    }

    pub fn within_bound(&self) -> bool {
        self.sigma_max_exceed_rate <= self.tolerance()
            && self.sigma_min_exceed_rate <= self.tolerance()
    }
}

/// Monte Carlo check of the σ_max/σ_min tail bounds for l×n matrices with
/// i.i.d. N(0, 1/n) entries. Trials are keyed individually by
/// (seed, trial index), so the result is independent of worker count.
pub fn singular_value_concentration_trial(
    l: usize,
    n: usize,
    r: f64,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    if trials == 0 || l == 0 || n == 0 {
        return Err(Sl0Error::InvalidParameter(
            "concentration trial needs l, n, trials >= 1".into(),
        ));
    }
    let ratio = (l as f64 / n as f64).sqrt();
    let hi = 1.0 + ratio + r;
    let lo = 1.0 - ratio - r;
    let counts: (u64, u64) = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = derive_rng(seed, 0x53_56, t as u64);
            let g = gaussian_matrix(l, n, 1.0 / n as f64, &mut rng);
            let sv = g.singular_values();
            let max_exceed = (sv.max() > hi) as u64;
            let min_exceed = (sv.min() < lo) as u64;
            (max_exceed, min_exceed)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let bound = (-(n as f64) * r * r / 2.0).exp();
    let p = bound.min(1.0);
    Ok(ConcentrationReport {
        l,
        n,
        r,
        trials,
        seed,
        sigma_max_exceed_rate: counts.0 as f64 / trials as f64,
        sigma_min_exceed_rate: counts.1 as f64 / trials as f64,
        analytic_bound: bound,
        standard_error: (p * (1.0 - p) / trials as f64).sqrt(),
    })
}
