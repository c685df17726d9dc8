//! Wall-time scaling study: solve-time exponent in m at fixed aspect ratio.
//!
//! The schedule (J, L, μ, σ sequence) is held fixed across sizes so the
//! measured growth isolates the per-iteration cost; the aspect ratio α is
//! part of the config because the study is only meaningful with n/m fixed.

use crate::dictionary::Dictionary;
use crate::error::{Result, Sl0Error};
use crate::harness::instance::{generate, GenerateConfig};
use crate::harness::rng::derive_seed;
use crate::solver;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub m_list: Vec<usize>,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
    /// Planted sparsity fraction of the timed instances.
    pub k_ratio: f64,
}

impl ScalingConfig {
    pub fn new(m_list: Vec<usize>, alpha: f64, reps: usize, seed: u64) -> Self {
        ScalingConfig {
            m_list,
            alpha,
            reps,
            seed,
            k_ratio: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalePoint {
    pub m: usize,
    pub n: usize,
    /// Fastest repetition; scheduler interference only ever inflates a
    /// measurement, so the minimum estimates the uncontended cost.
    pub min_seconds: f64,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub code_version: String,
    pub config: ScalingConfig,
    pub points: Vec<ScalePoint>,
    /// Least-squares slope of ln(min time) against ln(m).
    pub slope: f64,
    pub slope_stderr: f64,
    /// slope ± 2·stderr.
    pub ci_low: f64,
    pub ci_high: f64,
    pub reps: usize,
}

pub fn scaling_study(cfg: &ScalingConfig) -> Result<ScalingReport> {
    if cfg.m_list.len() < 3 {
        return Err(Sl0Error::InvalidParameter(
            "scaling study needs at least 3 sizes".into(),
        ));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Sl0Error::InvalidParameter(format!(
            "aspect ratio must satisfy 0 < alpha < 1 (n/m is fixed by design), got {}",
            cfg.alpha
        )));
    }
    if cfg.reps == 0 {
        return Err(Sl0Error::InvalidParameter("need reps >= 1".into()));
    }
    // fixed-policy schedule: same J, L, mu at every size
    let sched = solver::derive_schedule_heuristic(
        1.0,
        solver::HEURISTIC_C,
        solver::HEURISTIC_INNER_STEPS,
        solver::HEURISTIC_MU,
        1e-3,
    )?;

    let mut points = Vec::new();
    for (idx, &m) in cfg.m_list.iter().enumerate() {
        let n = ((cfg.alpha * m as f64).round() as usize).clamp(1, m - 1);
        let k = ((cfg.k_ratio * m as f64).round() as usize).clamp(1, n / 2);
        let gen_cfg = GenerateConfig {
            inline_matrix: true,
            ..GenerateConfig::new(n, m, k, 0.0, derive_seed(cfg.seed, 0x5354, idx as u64))
        };
        let inst = generate(&gen_cfg)?;
        let raw = inst.raw_matrix()?;
        let (dict, x) = Dictionary::orthonormalize(&raw, &inst.measurement())?;

        solver::solve(&dict, &x, &sched, false)?; // warmup
        let mut min_s = f64::INFINITY;
        let mut sum_s = 0.0;
        for _ in 0..cfg.reps {
            let start = Instant::now();
            solver::solve(&dict, &x, &sched, false)?;
            let elapsed = start.elapsed().as_secs_f64();
            min_s = min_s.min(elapsed);
            sum_s += elapsed;
        }
        points.push(ScalePoint {
            m,
            n,
            min_seconds: min_s,
            mean_seconds: sum_s / cfg.reps as f64,
        });
    }

    let xs: Vec<f64> = points.iter().map(|p| (p.m as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.min_seconds.ln()).collect();
    let (slope, stderr) = least_squares_slope(&xs, &ys);
    Ok(ScalingReport {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        points,
        slope,
        slope_stderr: stderr,
        ci_low: slope - 2.0 * stderr,
        ci_high: slope + 2.0 * stderr,
        reps: cfg.reps,
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let dof = (xs.len().saturating_sub(2)).max(1) as f64;
    let stderr = (ss_res / dof / sxx).sqrt();
    (slope, stderr)
}
