//! Acceptance suite: one pass/fail line per criterion, run sequentially so
//! the timing-sensitive criteria are not co-scheduled.
//!
//! Run with: cargo test -p sl0 --test acceptance -- --nocapture

use nalgebra::DVector;
use rayon::prelude::*;
use sl0::harness::instance::equiangular_dictionary;
use sl0::harness::rng::{derive_rng, gaussian_matrix, sample_support, sphere_point, standard_normal};
use sl0::harness::scaling::{scaling_study, ScalingConfig};
use sl0::harness::verify::{self, VerifyLevel};
use sl0::{constants, oracle, solver, Dictionary, Limits};
use std::time::Instant;

struct Criterion {
    name: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
}

fn run_criterion<F>(name: &'static str, f: F) -> Criterion
where
    F: FnOnce() -> Result<(bool, String), sl0::Sl0Error>,
{
    let start = Instant::now();
    let (pass, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Criterion {
        name,
        pass,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn from_check(name: &'static str, c: verify::CheckResult) -> Criterion {
    Criterion {
        name,
        pass: c.pass,
        detail: format!("{} ({})", c.detail, c.name),
        seconds: 0.0,
    }
}

/// Certified test systems: equiangular-null-space designs where the exact
/// energy ratio γ(6) stays below 2, certifying the k = 1 hypothesis
/// k < n₀/(2(1+γ)). A documented search over 10⁴ Gaussian seeds at
/// n = 12, m = 16 (n₀ ∈ {4, 6}) found no qualifying random system: the
/// smallest observed γ(4) was 3.95 (needs < 1) and γ(6) was 11.67
/// (needs < 2), so constructed near-orthogonal dictionaries are used, as the
/// criterion's fallback provides.
fn certified_systems() -> Result<Vec<(Dictionary, f64)>, sl0::Sl0Error> {
    let limits = Limits::default();
    let mut out = Vec::new();
    for m in [24usize, 28, 32] {
        let d = equiangular_dictionary(m)?;
        let gamma = constants::gamma_exact(&d, 6, &limits)?
            .finite()
            .expect("equiangular design satisfies the unique representation property");
        assert!(
            1.0 < 6.0 / (2.0 * (1.0 + gamma)),
            "design at m = {m} no longer certifies k = 1"
        );
        out.push((d, gamma));
    }
    Ok(out)
}

fn plant_one(d: &Dictionary, seed: u64) -> (DVector<f64>, DVector<f64>) {
    let m = d.cols();
    let mut rng = derive_rng(seed, 0xACC, 0);
    let support = sample_support(m, 1, &mut rng);
    let mut s0 = DVector::zeros(m);
    let mut v = standard_normal(&mut rng);
    while v.abs() < 0.3 {
        v = standard_normal(&mut rng);
    }
    s0[support[0]] = v;
    let x = d.matrix() * &s0;
    (s0, x)
}

fn criterion_1() -> Result<(bool, String), sl0::Sl0Error> {
    // smoke re-run of the documented random search (100 of the 10^4 seeds)
    let limits = Limits::default();
    let mut qualifying = 0;
    for seed in 0..100u64 {
        let mut rng = derive_rng(seed, 0x5EA, 0);
        let raw = gaussian_matrix(12, 16, 1.0 / 12.0, &mut rng);
        let (d, _) = Dictionary::orthonormalize(&raw, &DVector::zeros(12))?;
        for n0 in [4usize, 6] {
            if let Some(g) = constants::gamma_exact(&d, n0, &limits)?.finite() {
                if 1.0 < n0 as f64 / (2.0 * (1.0 + g)) {
                    qualifying += 1;
                }
            }
        }
    }
    if qualifying > 0 {
        return Ok((
            false,
            "random search unexpectedly found qualifying systems; revisit the constructed designs"
                .into(),
        ));
    }

    let systems = certified_systems()?;
    let mut worst_err: f64 = 0.0;
    let mut gammas = Vec::new();
    for (sys_idx, (d, gamma)) in systems.iter().enumerate() {
        gammas.push(format!("γ(6)={gamma:.3} @ m={}", d.cols()));
        let errs: Vec<Result<f64, sl0::Sl0Error>> = (0..100u64)
            .into_par_iter()
            .map(|trial| {
                let (s0, x) = plant_one(d, 1_000 * (sys_idx as u64 + 1) + trial);
                let sched =
                    solver::derive_schedule_known_gamma(d, 6, *gamma, 1, 1e-6, 0.0, &x)?;
                let trace = solver::solve(d, &x, &sched, false)?;
                if trace.max_residual() > 1e-9 * x.norm().max(1.0) {
                    return Err(sl0::Sl0Error::PreconditionViolated(
                        "iterate left the feasible set".into(),
                    ));
                }
                Ok((&trace.s_out - &s0).norm())
            })
            .collect();
        for e in errs {
            let err = e?;
            worst_err = worst_err.max(err);
            if err > 1e-6 {
                return Ok((
                    false,
                    format!("recovery error {err:.3e} > 1e-6 on system {sys_idx}"),
                ));
            }
        }
    }
    Ok((
        true,
        format!(
            "0/200 random systems qualified (smoke of the documented 10^4-seed search); \
             3 constructed systems [{}], 300/300 recoveries, worst error {worst_err:.2e}",
            gammas.join(", ")
        ),
    ))
}

fn criterion_2() -> Result<(bool, String), sl0::Sl0Error> {
    let systems = certified_systems()?;
    let mut worst_margin: f64 = 0.0;
    for &eps in &[1e-4f64, 1e-3] {
        let outcomes: Vec<Result<f64, sl0::Sl0Error>> = (0..100u64)
            .into_par_iter()
            .map(|trial| {
                let (d, gamma) = &systems[(trial % 3) as usize];
                let (s0, clean) = plant_one(d, 20_000 + trial);
                let mut rng = derive_rng(30_000 + trial, 0, 0);
                let x = &clean + sphere_point(d.rows(), eps * (1.0 - 1e-12), &mut rng);
                let atx = d.min_norm_solution(&x).norm();
                let sched = solver::derive_schedule_noisy(d, 6, *gamma, 1, None, eps, atx)?;
                let c = sched.theory.as_ref().unwrap().error_constant.unwrap();
                let trace = solver::solve(d, &x, &sched, false)?;
                let err = (&trace.s_out - &s0).norm();
                Ok(err / (c * eps))
            })
            .collect();
        for o in outcomes {
            let ratio = o?;
            worst_margin = worst_margin.max(ratio);
            if ratio > 1.0 {
                return Ok((
                    false,
                    format!("error exceeded C·ε by factor {ratio:.3} at ε = {eps:.0e}"),
                ));
            }
        }
    }
    Ok((
        true,
        format!("200/200 noisy recoveries within C·ε; worst error/(C·ε) = {worst_margin:.3}"),
    ))
}

fn criterion_3() -> Result<(bool, String), sl0::Sl0Error> {
    let (violations, max_ratio, cr, non_monotone) = verify::contraction_battery(1000, 4242)?;
    let pass = violations == 0 && non_monotone == 0;
    Ok((
        pass,
        format!(
            "1000 qualifying starts: {violations} contraction violations, \
             {non_monotone} ascent violations, max observed ratio {max_ratio:.6} vs CR' {cr:.6}"
        ),
    ))
}

fn criterion_10() -> Result<(bool, String), sl0::Sl0Error> {
    let cfg = ScalingConfig::new(vec![256, 512, 1024, 2048], 0.5, 10, 77);
    let report = scaling_study(&cfg)?;
    let pass = report.slope >= 1.7 && report.slope <= 2.5;
    Ok((
        pass,
        format!(
            "log-log slope {:.3} (CI [{:.3}, {:.3}]), required [1.7, 2.5]",
            report.slope, report.ci_low, report.ci_high
        ),
    ))
}

fn criterion_11() -> Result<(bool, String), sl0::Sl0Error> {
    // Pinned from the calibration run (rates 0.92-0.95 across master seeds);
    // the acceptance floor 0.90 is the pinned 0.92 minus the allowed
    // 2-point regression.
    let limits = Limits::default();
    let trials = 500u64;
    let outcomes: Vec<Result<bool, sl0::Sl0Error>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = derive_rng(5150, 0x0B, trial);
            let raw = gaussian_matrix(10, 20, 0.1, &mut rng);
            let (d, _) = Dictionary::orthonormalize(&raw, &DVector::zeros(10))?;
            let mut prng = derive_rng(5151, 0x0B, trial);
            let support = sample_support(20, 2, &mut prng);
            let mut s0 = DVector::zeros(20);
            for &i in &support {
                let mut v = standard_normal(&mut prng);
                while v.abs() < 0.3 {
                    v = standard_normal(&mut prng);
                }
                s0[i] = v;
            }
            let x = d.matrix() * &s0;
            // ground truth from the brute-force oracle
            let truth = oracle::l0_brute_force(&d, &x, 2, 1e-8, &limits)?;
            let mut reference = DVector::zeros(20);
            for (&i, &c) in truth.support.iter().zip(truth.coefficients.iter()) {
                reference[i] = c;
            }
            let sched = solver::heuristic_for_instance(&d, &x)?;
            let trace = solver::solve(&d, &x, &sched, false)?;
            Ok((&trace.s_out - &reference).norm() <= 1e-3 * reference.norm())
        })
        .collect();
    let mut successes = 0usize;
    for o in outcomes {
        successes += o? as usize;
    }
    let rate = successes as f64 / trials as f64;
    Ok((
        rate >= 0.90,
        format!("heuristic-vs-oracle recovery rate {rate:.3} (floor 0.90, pinned 0.92)"),
    ))
}

#[test]
fn acceptance_criteria() {
    let t0 = Instant::now();
    let mut results: Vec<Criterion> = Vec::new();

    results.push(run_criterion("1 guaranteed exact recovery", criterion_1));
    results.push(run_criterion("2 noisy error bound", criterion_2));
    results.push(run_criterion("3 inner-loop theory", criterion_3));

    let t = Instant::now();
    let mut c4a = from_check("4 objective calculus", verify::check_objective_gradient_fd(VerifyLevel::Full));
    let c4b = verify::check_objective_bounds(VerifyLevel::Full);
    c4a.pass &= c4b.pass;
    c4a.detail = format!("{}; {}", c4a.detail, c4b.detail);
    c4a.seconds = t.elapsed().as_secs_f64();
    results.push(c4a);

    let t = Instant::now();
    let mut c5 = from_check("5 concavity and narrowness", verify::check_concavity(VerifyLevel::Full));
    let c5b = verify::check_narrow_variation(VerifyLevel::Full);
    c5.pass &= c5b.pass;
    c5.detail = format!("{}; {}", c5.detail, c5b.detail);
    c5.seconds = t.elapsed().as_secs_f64();
    results.push(c5);

    let t = Instant::now();
    let mut c6 = from_check("6 sigma-step rule", verify::check_sigma_step_rule(VerifyLevel::Full));
    c6.seconds = t.elapsed().as_secs_f64();
    results.push(c6);

    let t = Instant::now();
    let mut c7 = from_check("7 constants cross-checks", verify::check_gamma_oracle(VerifyLevel::Full));
    let c7b = verify::check_gamma_invariance_and_chain(VerifyLevel::Full);
    c7.pass &= c7b.pass;
    c7.detail = format!("{}; {}", c7.detail, c7b.detail);
    c7.seconds = t.elapsed().as_secs_f64();
    results.push(c7);

    let t = Instant::now();
    let mut c8 = from_check("8 gaussian asymptotics", verify::check_rho(VerifyLevel::Full));
    let c8b = verify::check_concentration(VerifyLevel::Full);
    c8.pass &= c8b.pass;
    c8.detail = format!("{}; {}", c8.detail, c8b.detail);
    c8.seconds = t.elapsed().as_secs_f64();
    results.push(c8);

    let t = Instant::now();
    let mut c9 = from_check("9 batched equivalence", verify::check_msl0_equivalence(VerifyLevel::Full));
    c9.seconds = t.elapsed().as_secs_f64();
    results.push(c9);

    results.push(run_criterion("10 complexity scaling", criterion_10));
    results.push(run_criterion("11 oracle agreement (heuristic)", criterion_11));

    let mut failures = 0;
    for c in &results {
        println!(
            "ACCEPTANCE {:35} {} [{:6.1}s] {}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.seconds,
            c.detail
        );
        failures += (!c.pass) as usize;
    }
    println!("ACCEPTANCE total wall time {:.1}s", t0.elapsed().as_secs_f64());
    assert_eq!(failures, 0, "{failures} acceptance criteria failed");
}
