//! Recovery-rate sweeps over a parameter grid, with CSV output.

use crate::error::{Result, Sl0Error};
use crate::harness::instance::{generate, GenerateConfig, DEFAULT_SIGMA_FLOOR};
use crate::harness::rng::derive_seed;
use crate::solver;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

pub const DEFAULT_SUCCESS_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// Tuned practical schedule (no guarantee).
    Heuristic,
    /// Guaranteed schedule with γ(n₀) computed exactly per instance;
    /// desk-scale only.
    GuaranteedExact,
}

impl std::fmt::Display for SweepMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepMode::Heuristic => write!(f, "heuristic"),
            SweepMode::GuaranteedExact => write!(f, "guaranteed"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub ms: Vec<usize>,
    pub ks: Vec<usize>,
    pub epss: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub mode: SweepMode,
    /// Success means ‖ŝ − s₀‖ ≤ success_tol·‖s₀‖ (absolute at k = 0).
    pub success_tol: f64,
    /// Guaranteed mode: support-size parameter n₀ for the exact γ.
    pub n0: Option<usize>,
    /// Guaranteed mode: accuracy target δ.
    pub delta: f64,
}

impl SweepConfig {
    pub fn heuristic(
        alphas: Vec<f64>,
        ms: Vec<usize>,
        ks: Vec<usize>,
        epss: Vec<f64>,
        trials: usize,
        seed: u64,
    ) -> Self {
        SweepConfig {
            alphas,
            ms,
            ks,
            epss,
            trials,
            seed,
            mode: SweepMode::Heuristic,
            success_tol: DEFAULT_SUCCESS_TOL,
            n0: None,
            delta: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub eps: f64,
    pub mode: String,
    pub trials: usize,
    pub recovery_rate: f64,
    pub mean_err: f64,
    pub mean_ms: f64,
    pub rho_alpha: f64,
    pub inside_rho_region: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub seed: u64,
    pub code_version: String,
    /// Echo of the full configuration; together with the seed this is the
    /// exact reproduction recipe.
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

struct TrialOutcome {
    success: bool,
    err: f64,
    ms: f64,
}

fn run_trial(cfg: &SweepConfig, n: usize, m: usize, k: usize, eps: f64, seed: u64) -> Result<TrialOutcome> {
    let gen_cfg = GenerateConfig {
        inline_matrix: true,
        sigma_floor: DEFAULT_SIGMA_FLOOR,
        ..GenerateConfig::new(n, m, k, eps, seed)
    };
    let inst = generate(&gen_cfg)?;
    let (dict, x) = inst.orthonormalized()?;
    let s0 = inst.planted();

    let started = Instant::now();
    let s_out: DVector<f64> = if x.norm() <= 1e-14 {
        DVector::zeros(m)
    } else {
        let sched = match cfg.mode {
            SweepMode::Heuristic => solver::heuristic_for_instance(&dict, &x)?,
            SweepMode::GuaranteedExact => {
                let n0 = cfg.n0.ok_or_else(|| {
                    Sl0Error::InvalidParameter("guaranteed sweep needs n0".into())
                })?;
                let gamma = crate::constants::gamma_exact(&dict, n0, &crate::Limits::default())?
                    .finite()
                    .ok_or_else(|| {
                        Sl0Error::DegenerateInput("gamma infinite for sweep instance".into())
                    })?;
                solver::derive_schedule_known_gamma(&dict, n0, gamma, k, cfg.delta, eps, &x)?
            }
        };
        solver::solve(&dict, &x, &sched, false)?.s_out
    };
    let ms = started.elapsed().as_secs_f64() * 1e3;

    let err = (&s_out - &s0).norm();
    let success = if k == 0 {
        err <= cfg.success_tol
    } else {
        err <= cfg.success_tol * s0.norm()
    };
    Ok(TrialOutcome { success, err, ms })
}

/// Run every grid cell; trials are keyed by (seed, cell, trial) and reduced
/// in trial order, so results are exactly reproducible under any thread
/// count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.alphas.is_empty() || cfg.ms.is_empty() || cfg.ks.is_empty() || cfg.epss.is_empty() {
        return Err(Sl0Error::InvalidParameter("sweep grid is empty".into()));
    }
    if cfg.trials == 0 {
        return Err(Sl0Error::InvalidParameter("sweep needs trials >= 1".into()));
    }
    let mut rho_cache: HashMap<u64, f64> = HashMap::new();
    let mut rows = Vec::new();
    let mut cell_index: u64 = 0;
    for &alpha in &cfg.alphas {
        let rho_alpha = *rho_cache
            .entry(alpha.to_bits())
            .or_insert(crate::constants::rho(alpha)?.rho);
        for &m in &cfg.ms {
            let n = ((alpha * m as f64).round() as usize).clamp(1, m.saturating_sub(1));
            for &k in &cfg.ks {
                for &eps in &cfg.epss {
                    let cell = cell_index;
                    cell_index += 1;
                    if k >= m {
                        return Err(Sl0Error::InvalidParameter(format!(
                            "cell k = {k} >= m = {m}"
                        )));
                    }
                    let outcomes: Vec<Result<TrialOutcome>> = (0..cfg.trials)
                        .into_par_iter()
                        .map(|trial| {
                            run_trial(cfg, n, m, k, eps, derive_seed(cfg.seed, cell, trial as u64))
                        })
                        .collect();
                    let mut successes = 0usize;
                    let mut err_sum = 0.0;
                    let mut ms_sum = 0.0;
                    for outcome in outcomes {
                        let o = outcome?;
                        successes += o.success as usize;
                        err_sum += o.err;
                        ms_sum += o.ms;
                    }
                    rows.push(SweepRow {
                        alpha,
                        m,
                        n,
                        k,
                        eps,
                        mode: cfg.mode.to_string(),
                        trials: cfg.trials,
                        recovery_rate: successes as f64 / cfg.trials as f64,
                        mean_err: err_sum / cfg.trials as f64,
                        mean_ms: ms_sum / cfg.trials as f64,
                        rho_alpha,
                        inside_rho_region: (k as f64 / m as f64) < rho_alpha,
                    });
                }
            }
        }
    }
    Ok(SweepResult {
        seed: cfg.seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        rows,
    })
}

pub const CSV_HEADER: &str =
    "alpha,m,n,k,eps,mode,trials,recovery_rate,mean_err,mean_ms,rho_alpha,inside_rho_region";

pub fn write_csv<W: Write>(result: &SweepResult, out: &mut W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in &result.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.alpha,
            r.m,
            r.n,
            r.k,
            r.eps,
            r.mode,
            r.trials,
            r.recovery_rate,
            r.mean_err,
            r.mean_ms,
            r.rho_alpha,
            r.inside_rho_region
        )?;
    }
    Ok(())
}

/// Two-proportion z statistic for (s1/n1) vs (s2/n2) under the pooled null.
pub fn two_proportion_z(s1: usize, n1: usize, s2: usize, n2: usize) -> f64 {
    let p1 = s1 as f64 / n1 as f64;
    let p2 = s2 as f64 / n2 as f64;
    let pooled = (s1 + s2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (p1 - p2) / se
    }
}
