//! Batched multiple-measurement-vector solving.
//!
//! Given an n×T block of measurements X, the batched iteration
//! S ← S + μσ²·P(∇F_σ(S)) applies the entrywise gradient and the D-free
//! null-space projector to the whole m×T state at once. Batching is an
//! optimization, never a semantic change: column t of the output equals the
//! single-vector solve of column t under the same schedule, and a T=1 batch
//! takes the identical code path bit for bit.

use crate::dictionary::Dictionary;
use crate::error::{Result, Sl0Error};
use crate::solver::{run_two_loop, Sl0Schedule};
use crate::SplineFamily;
use nalgebra::DMatrix;
use serde::Serialize;
use std::time::{Duration, Instant};

/// A block of T measurement columns, optionally with the planted solutions
/// that produced them and the per-column noise radius.
#[derive(Debug, Clone)]
pub struct MultiInstance {
    pub measurements: DMatrix<f64>,
    pub planted: Option<DMatrix<f64>>,
    pub eps: f64,
}

impl MultiInstance {
    pub fn new(measurements: DMatrix<f64>, planted: Option<DMatrix<f64>>, eps: f64) -> Result<Self> {
        if measurements.ncols() < 1 {
            return Err(Sl0Error::InvalidParameter(
                "need at least one measurement column".into(),
            ));
        }
        if let Some(p) = &planted {
            if p.ncols() != measurements.ncols() {
                return Err(Sl0Error::InvalidParameter(format!(
                    "planted column count {} does not match measurements {}",
                    p.ncols(),
                    measurements.ncols()
                )));
            }
        }
        if eps < 0.0 {
            return Err(Sl0Error::InvalidParameter(format!("eps = {eps} negative")));
        }
        Ok(MultiInstance {
            measurements,
            planted,
            eps,
        })
    }

    pub fn columns(&self) -> usize {
        self.measurements.ncols()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiTrace {
    /// Entrywise max |A·S − X|.
    pub max_residual: f64,
    /// Final objective value per column at the last stage's σ.
    pub f_final: Vec<f64>,
    #[serde(skip)]
    pub wall_time: Duration,
    pub wall_time_ms: f64,
}

/// Solve all columns at once with a shared schedule.
pub fn msolve(
    d: &Dictionary,
    mi: &MultiInstance,
    sched: &Sl0Schedule,
) -> Result<(DMatrix<f64>, MultiTrace)> {
    let started = Instant::now();
    let out = run_two_loop(d, &mi.measurements, sched, |_, _, _| Ok(()))?;
    let wall = started.elapsed();

    let residual = d.matrix() * &out - &mi.measurements;
    let max_residual = residual.amax();
    let spline = SplineFamily::new(
        sched.gamma_objective,
        *sched.sigma.last().expect("schedule has at least one stage"),
    )?;
    let f_final = out
        .column_iter()
        .map(|c| {
            let values: Vec<f64> = c.iter().map(|&v| spline.f(v)).collect();
            crate::util::pairwise_sum(&values)
        })
        .collect();
    Ok((
        out,
        MultiTrace {
            max_residual,
            f_final,
            wall_time: wall,
            wall_time_ms: wall.as_secs_f64() * 1e3,
        },
    ))
}

/// Guaranteed schedule for a batch: identical to the single-vector
/// derivation except that σ₁ is computed from the worst (largest) column of
/// ‖Aᵀx_t‖, which preserves the per-column objective floor a shared σ₁
/// needs. The choice is flagged in the schedule.
pub fn derive_schedule_known_gamma_multi(
    d: &Dictionary,
    n0: usize,
    gamma: f64,
    k: usize,
    delta_target: f64,
    eps: f64,
    measurements: &DMatrix<f64>,
) -> Result<Sl0Schedule> {
    if measurements.nrows() != d.rows() {
        return Err(Sl0Error::InvalidParameter(format!(
            "measurement rows {} do not match n = {}",
            measurements.nrows(),
            d.rows()
        )));
    }
    let projected = d.matrix().transpose() * measurements;
    let atx_norm = projected
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    crate::solver::derive_known_gamma_with_norm(d, n0, gamma, k, delta_target, eps, atx_norm, true)
}

#[derive(Debug, Clone, Serialize)]
pub struct ThroughputRow {
    pub m: usize,
    pub n: usize,
    pub t: usize,
    pub batched_ms_per_column: f64,
    pub columnwise_ms_per_column: f64,
    pub speedup: f64,
}

/// Wall-time comparison of one batched solve against T column-by-column
/// solves of the same schedule (both through the minimal driver, so only
/// batching differs). Dictionaries are Gaussian with n = m/2, seeded.
pub fn throughput_benchmark(
    m_list: &[usize],
    t_list: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<ThroughputRow>> {
    if reps == 0 {
        return Err(Sl0Error::InvalidParameter("need reps >= 1".into()));
    }
    let sched = crate::solver::derive_schedule_heuristic(1.0, 0.7, 6, 2.0, 1e-2)?;
    let mut rows = Vec::new();
    for (mi, &m) in m_list.iter().enumerate() {
        let n = m / 2;
        let mut rng = crate::harness::rng::derive_rng(seed, 0x7470, mi as u64);
        let raw = crate::harness::rng::gaussian_matrix(n, m, 1.0 / n as f64, &mut rng);
        let (d, _) = Dictionary::orthonormalize(&raw, &nalgebra::DVector::zeros(n))?;
        for (ti, &t) in t_list.iter().enumerate() {
            let mut xr = crate::harness::rng::derive_rng(seed, 0x7478, (mi * 64 + ti) as u64);
            let x = crate::harness::rng::gaussian_matrix(n, t, 1.0, &mut xr);

            // warmup both paths once
            run_two_loop(&d, &x, &sched, |_, _, _| Ok(()))?;
            let col0 = DMatrix::from_column_slice(n, 1, x.column(0).as_slice());
            run_two_loop(&d, &col0, &sched, |_, _, _| Ok(()))?;

            let start = Instant::now();
            for _ in 0..reps {
                run_two_loop(&d, &x, &sched, |_, _, _| Ok(()))?;
            }
            let batched = start.elapsed().as_secs_f64() / (reps * t) as f64;

            let start = Instant::now();
            for _ in 0..reps {
                for c in 0..t {
                    let col = DMatrix::from_column_slice(n, 1, x.column(c).as_slice());
                    run_two_loop(&d, &col, &sched, |_, _, _| Ok(()))?;
                }
            }
            let columnwise = start.elapsed().as_secs_f64() / (reps * t) as f64;

            rows.push(ThroughputRow {
                m,
                n,
                t,
                batched_ms_per_column: batched * 1e3,
                columnwise_ms_per_column: columnwise * 1e3,
                speedup: columnwise / batched,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rng::{derive_rng, gaussian_matrix};
    use crate::solver::{derive_schedule_heuristic, solve};
    use nalgebra::DVector;

    fn random_system(n: usize, m: usize, t: usize, seed: u64) -> (Dictionary, DMatrix<f64>) {
        let mut rng = derive_rng(seed, 0, 0);
        let raw = gaussian_matrix(n, m, 1.0 / n as f64, &mut rng);
        let (d, _) = Dictionary::orthonormalize(&raw, &DVector::zeros(n)).unwrap();
        let mut xr = derive_rng(seed, 1, 0);
        let x = gaussian_matrix(n, t, 1.0, &mut xr);
        (d, x)
    }

    #[test]
    fn single_column_batch_is_bit_identical_to_solve() {
        let (d, x) = random_system(6, 12, 1, 41);
        let sched = derive_schedule_heuristic(1.5, 0.6, 4, 2.0, 0.01).unwrap();
        let mi = MultiInstance::new(x.clone(), None, 0.0).unwrap();
        let (s, _) = msolve(&d, &mi, &sched).unwrap();
        let xv = DVector::from_column_slice(x.column(0).as_slice());
        let trace = solve(&d, &xv, &sched, false).unwrap();
        for i in 0..12 {
            assert_eq!(s[(i, 0)], trace.s_out[i], "entry {i} differs");
        }
    }

    #[test]
    fn batched_matches_columnwise_within_tolerance() {
        let (d, x) = random_system(8, 16, 5, 43);
        let sched = derive_schedule_heuristic(2.0, 0.6, 5, 2.0, 0.02).unwrap();
        let mi = MultiInstance::new(x.clone(), None, 0.0).unwrap();
        let (s, trace) = msolve(&d, &mi, &sched).unwrap();
        assert!(trace.max_residual <= 1e-9 * x.amax().max(1.0));
        for c in 0..5 {
            let xv = DVector::from_column_slice(x.column(c).as_slice());
            let single = solve(&d, &xv, &sched, false).unwrap();
            for i in 0..16 {
                assert!(
                    (s[(i, c)] - single.s_out[i]).abs() <= 1e-9,
                    "column {c} entry {i}: batched {} vs single {}",
                    s[(i, c)],
                    single.s_out[i]
                );
            }
        }
    }

    #[test]
    fn shared_sigma1_dominates_every_column() {
        let d = crate::harness::instance::equiangular_dictionary(24).unwrap();
        let gamma = crate::constants::gamma_exact(&d, 6, &crate::Limits::default())
            .unwrap()
            .finite()
            .unwrap();
        let mut rng = derive_rng(51, 0, 0);
        let x = gaussian_matrix(22, 4, 1.0, &mut rng);
        let multi =
            derive_schedule_known_gamma_multi(&d, 6, gamma, 1, 1e-6, 0.0, &x).unwrap();
        assert!(multi.theory.as_ref().unwrap().sigma_from_max_column);
        for c in 0..4 {
            let xv = DVector::from_column_slice(x.column(c).as_slice());
            let single =
                crate::solver::derive_schedule_known_gamma(&d, 6, gamma, 1, 1e-6, 0.0, &xv)
                    .unwrap();
            assert!(
                multi.sigma[0] >= single.sigma[0] - 1e-12,
                "column {c} needs a larger starting scale than the batch got"
            );
        }
    }

    #[test]
    fn zero_measurements_solve_to_zero() {
        let (d, _) = random_system(6, 12, 1, 47);
        let sched = derive_schedule_heuristic(1.0, 0.5, 3, 2.0, 0.1).unwrap();
        let x = DMatrix::zeros(6, 3);
        let mi = MultiInstance::new(x, None, 0.0).unwrap();
        let (s, _) = msolve(&d, &mi, &sched).unwrap();
        assert_eq!(s, DMatrix::zeros(12, 3));
    }
}
