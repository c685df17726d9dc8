//! Property-verification suite: every module invariant checked against an
//! independent route (hand values, finite differences, direct eigenproblems,
//! Monte Carlo bounds), with fixed seeds and one pass/fail line per check.

use crate::constants;
use crate::dictionary::Dictionary;
use crate::error::{Result, Sl0Error};
use crate::harness::instance::equiangular_dictionary;
use crate::harness::rng::{derive_rng, gaussian_matrix, sample_support, standard_normal};
use crate::objective::{clipped_l0, projected_hessian_check, ClippedNormSpec, SplineFamily};
use crate::oracle;
use crate::solver;
use crate::subsets::enumerate_subsets;
use crate::Limits;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyLevel {
    /// Reduced trial counts, ~30 s.
    Quick,
    /// Specification-level trial counts, ~10 min budget.
    Full,
}

impl VerifyLevel {
    fn pick(&self, quick: usize, full: usize) -> usize {
        match self {
            VerifyLevel::Quick => quick,
            VerifyLevel::Full => full,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub level: String,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn check<F>(name: &str, f: F) -> CheckResult
where
    F: FnOnce() -> Result<(bool, String)>,
{
    match f() {
        Ok((pass, detail)) => CheckResult {
            name: name.to_string(),
            pass,
            detail,
        },
        Err(e) => CheckResult {
            name: name.to_string(),
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

fn random_dictionary(n: usize, m: usize, seed: u64) -> Result<Dictionary> {
    let mut rng = derive_rng(seed, 0xD1C7, 0);
    let raw = gaussian_matrix(n, m, 1.0 / n as f64, &mut rng);
    Ok(Dictionary::orthonormalize(&raw, &DVector::zeros(n))?.0)
}

/// Plant a k-sparse point directly on an orthonormalized dictionary.
fn plant(d: &Dictionary, k: usize, seed: u64) -> (DVector<f64>, DVector<f64>) {
    let m = d.cols();
    let mut rng = derive_rng(seed, 0x9A37, 0);
    let support = sample_support(m, k, &mut rng);
    let mut s0 = DVector::zeros(m);
    for &i in &support {
        let mut v = standard_normal(&mut rng);
        while v.abs() < 0.3 {
            v = standard_normal(&mut rng);
        }
        s0[i] = v;
    }
    let x = d.matrix() * &s0;
    (s0, x)
}

/// Random null-space direction of the requested Euclidean norm.
fn null_direction<R: Rng>(d: &Dictionary, norm: f64, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(d.cols(), |_, _| standard_normal(rng));
        let p = d.project_nullspace(&g);
        let len = p.norm();
        if len > 1e-9 {
            return p * (norm / len);
        }
    }
}

/// Direct independent oracle for the energy ratio: enumerates all support
/// sizes up to n₀ and solves the generalized eigenproblem
/// B_Iᵀ B_I v = λ B_{I^c}ᵀ B_{I^c} v through a Cholesky factorization of the
/// complement Gram matrix — no use of the BᵀB = I reduction.
pub fn gamma_direct_oracle(d: &Dictionary, n0: usize, limits: &Limits) -> Result<f64> {
    let basis = d.nullspace_basis(limits)?.transpose(); // m×(m−n) columns
    let m = d.cols();
    let dim = basis.ncols();
    let mut best: f64 = 0.0;
    for size in 1..=n0 {
        enumerate_subsets(m, size, 0, u128::MAX, |_, subset| {
            if best.is_infinite() {
                return;
            }
            let mut in_set = vec![false; m];
            for &i in subset {
                in_set[i] = true;
            }
            let mut gram_in = DMatrix::zeros(dim, dim);
            let mut gram_out = DMatrix::zeros(dim, dim);
            for row in 0..m {
                let target = if in_set[row] {
                    &mut gram_in
                } else {
                    &mut gram_out
                };
                for a in 0..dim {
                    for b in 0..=a {
                        target[(a, b)] += basis[(row, a)] * basis[(row, b)];
                    }
                }
            }
            for a in 0..dim {
                for b in 0..a {
                    gram_in[(b, a)] = gram_in[(a, b)];
                    gram_out[(b, a)] = gram_out[(a, b)];
                }
            }
            match gram_out.cholesky() {
                None => best = f64::INFINITY,
                Some(ch) => {
                    let li = ch.l().solve_lower_triangular(&gram_in).unwrap();
                    let c = ch.l().solve_lower_triangular(&li.transpose()).unwrap();
                    let sym: DMatrix<f64> = 0.5 * (&c + c.transpose());
                    let lam = sym.symmetric_eigen().eigenvalues.max();
                    best = best.max(lam);
                }
            }
        });
    }
    Ok(best)
}

pub fn check_dictionary_identities(level: VerifyLevel) -> CheckResult {
    check("dictionary-identities", || {
        let systems = level.pick(6, 30);
        let limits = Limits::default();
        let mut worst: f64 = 0.0;
        for seed in 0..systems as u64 {
            let d = random_dictionary(5, 11, 1000 + seed)?;
            let a = d.matrix();
            let gram_dev = (a * a.transpose() - DMatrix::identity(5, 5)).amax();
            worst = worst.max(gram_dev);
            if gram_dev > 1e-10 {
                return Ok((false, format!("A·Aᵀ deviation {gram_dev:.2e}")));
            }
            let basis = d.nullspace_basis(&limits)?;
            let completion =
                (a.transpose() * a + basis.transpose() * &basis - DMatrix::identity(11, 11)).amax();
            worst = worst.max(completion);
            if completion > 1e-9 {
                return Ok((false, format!("completion deviation {completion:.2e}")));
            }
            let mut rng = derive_rng(2000 + seed, 1, 0);
            for _ in 0..20 {
                let g = DVector::from_fn(11, |_, _| standard_normal(&mut rng));
                let p = d.project_nullspace(&g);
                let img = (a * &p).norm();
                let idem = (d.project_nullspace(&p) - &p).norm();
                if img > 1e-10 * g.norm().max(1.0) || idem > 1e-10 * g.norm().max(1.0) {
                    return Ok((false, format!("projector identity failed: {img:.2e}/{idem:.2e}")));
                }
                let norm_formula = ((&basis * &p).norm() - p.norm()).abs();
                if norm_formula > 1e-10 * p.norm().max(1.0) {
                    return Ok((false, format!("norm formula off by {norm_formula:.2e}")));
                }
            }
        }
        Ok((true, format!("{systems} systems, worst deviation {worst:.2e}")))
    })
}

pub fn check_objective_gradient_fd(_level: VerifyLevel) -> CheckResult {
    check("objective-gradient-fd", || {
        let m = 8;
        let mut rng = derive_rng(7, 0xFD, 0);
        let mut checked = 0;
        let mut worst: f64 = 0.0;
        while checked < 200 {
            let gamma = 0.5 + 2.0 * rng.gen::<f64>();
            let sigma = 0.2 + rng.gen::<f64>();
            let sp = SplineFamily::new(gamma, sigma)?;
            let s = DVector::from_fn(m, |_, _| 3.0 * sigma * (rng.gen::<f64>() - 0.5));
            let i = rng.gen_range(0..m);
            let u = (s[i] / sigma).abs();
            // keep away from the knots and from the zero-derivative regions
            let near_knot = (u - 1.0).abs() < 1e-4 || (u - (1.0 + gamma)).abs() < 1e-4;
            if near_knot || u < 0.01 || u > 1.0 + gamma - 0.01 {
                continue;
            }
            let h = 1e-6 * sigma;
            let mut hi = s.clone();
            hi[i] += h;
            let mut lo = s.clone();
            lo[i] -= h;
            let fd = (sp.objective(&hi) - sp.objective(&lo)) / (2.0 * h);
            let an = sp.gradient(&s)[i];
            let rel = (fd - an).abs() / an.abs().max(1e-12);
            worst = worst.max(rel);
            if rel > 1e-6 {
                return Ok((
                    false,
                    format!("relative error {rel:.2e} at u = {u:.4}, gamma = {gamma:.3}"),
                ));
            }
            checked += 1;
        }
        Ok((true, format!("200 non-knot points, worst rel err {worst:.2e}")))
    })
}

pub fn check_objective_bounds(level: VerifyLevel) -> CheckResult {
    check("objective-bounds", || {
        let draws = level.pick(1_000, 10_000);
        let m = 12;
        let mut rng = derive_rng(11, 0xB0, 0);
        let mut worst_slack: f64 = 0.0;
        for _ in 0..draws {
            let gamma = 0.3 + 3.0 * rng.gen::<f64>();
            let sigma = 0.1 + 2.0 * rng.gen::<f64>();
            let sp = SplineFamily::new(gamma, sigma)?;
            let s1 = DVector::from_fn(m, |_, _| 4.0 * sigma * (rng.gen::<f64>() - 0.5));
            let s2 = DVector::from_fn(m, |_, _| 4.0 * sigma * (rng.gen::<f64>() - 0.5));
            // Lipschitz deviation bound
            let lhs = (sp.objective(&s1) - sp.objective(&s2)).abs();
            let rhs = sp.gradient_norm_bound(m) * (&s1 - &s2).norm();
            if lhs > rhs + 1e-12 {
                return Ok((false, format!("Lipschitz violated: {lhs:.6} > {rhs:.6}")));
            }
            worst_slack = worst_slack.max(lhs - rhs);
            // objective floor
            let floor = m as f64 - s1.norm_squared() / ((1.0 + gamma) * sigma * sigma);
            if sp.objective(&s1) < floor - 1e-12 {
                return Ok((false, "objective fell below its quadratic floor".into()));
            }
            // gradient norm bound
            if sp.gradient(&s1).norm() > sp.gradient_norm_bound(m) + 1e-12 {
                return Ok((false, "gradient norm bound violated".into()));
            }
        }
        Ok((true, format!("{draws} draws, no violations")))
    })
}

pub fn check_scale_covariance(_level: VerifyLevel) -> CheckResult {
    check("objective-scale-covariance", || {
        for &gamma in &[0.4, 1.0, 2.0, 5.5] {
            for &sigma in &[0.05, 1.0, 40.0] {
                let scaled = SplineFamily::new(gamma, sigma)?;
                let unit = SplineFamily::new(gamma, 1.0)?;
                for i in -30..=30 {
                    let s = i as f64 / 9.0;
                    if scaled.f(s) != unit.f(s / sigma) {
                        return Ok((false, format!("covariance broken at s = {s}")));
                    }
                }
            }
        }
        Ok((true, "exact over the (γ, σ, s) grid".into()))
    })
}

pub fn check_concavity(level: VerifyLevel) -> CheckResult {
    check("concavity-projected-hessian", || {
        let points = level.pick(50, 500);
        let limits = Limits::default();
        let n0 = 2;
        let k = 2;
        let sigma = 0.1;
        let mut done = 0;
        let mut system = 0u64;
        while done < points {
            let d = random_dictionary(6, 12, 3000 + system)?;
            let gamma = constants::gamma_exact(&d, n0, &limits)?
                .finite()
                .ok_or_else(|| Sl0Error::DegenerateInput("gamma infinite".into()))?;
            let sp = SplineFamily::new(gamma.max(1e-6), sigma)?;
            let (s0, _) = plant(&d, k, 4000 + system);
            let mut rng = derive_rng(5000 + system, 2, 0);
            for _ in 0..(points / 10).max(1) {
                if done >= points {
                    break;
                }
                // keep zero coordinates below sigma so the clipped norm stays k
                let s = &s0 + null_direction(&d, 0.4 * sigma, &mut rng);
                let spec = ClippedNormSpec::new(sigma)?;
                if clipped_l0(&spec, &s) > n0 {
                    continue;
                }
                if !projected_hessian_check(&sp, &d, &s, n0, &limits)? {
                    return Ok((false, format!("positive curvature found (system {system})")));
                }
                done += 1;
            }
            system += 1;
        }
        Ok((true, format!("{points} qualifying points concave")))
    })
}

pub fn check_narrow_variation(level: VerifyLevel) -> CheckResult {
    check("narrow-variation", || {
        let pairs = level.pick(100, 1000);
        let limits = Limits::default();
        let d = equiangular_dictionary(24)?;
        let n0 = 6;
        let gamma = constants::gamma_exact(&d, n0, &limits)?
            .finite()
            .expect("equiangular design has finite gamma");
        let m = d.cols() as f64;
        let threshold_gap = n0 as f64 / (2.0 + 2.0 * gamma);
        let (s0, _) = plant(&d, 1, 77);
        let mut rng = derive_rng(78, 3, 0);
        let mut made = 0;
        let mut attempts = 0;
        while made < pairs {
            attempts += 1;
            if attempts > pairs * 200 {
                return Ok((false, "could not sample qualifying pairs".into()));
            }
            let sigma = 0.05 + 0.3 * rng.gen::<f64>();
            let sp = SplineFamily::new(gamma, sigma)?;
            let bound_pair = 2.0 * (m * (gamma + 1.0)).sqrt() * sigma;
            let bound_planted = (m * (gamma + 1.0)).sqrt() * sigma;
            let scale = sigma * rng.gen::<f64>();
            let s1 = &s0 + null_direction(&d, scale, &mut rng);
            let s2 = &s0 + null_direction(&d, scale * rng.gen::<f64>(), &mut rng);
            let floor = m - threshold_gap;
            if sp.objective(&s1) < floor || sp.objective(&s2) < floor {
                continue;
            }
            if (&s1 - &s2).norm() > bound_pair {
                return Ok((false, format!("pair distance exceeded 2√(m(γ+1))σ at σ = {sigma:.3}")));
            }
            if sp.objective(&s0) >= floor && (&s1 - &s0).norm() > bound_planted {
                return Ok((false, format!("planted distance exceeded √(m(γ+1))σ at σ = {sigma:.3}")));
            }
            made += 1;
        }
        Ok((true, format!("{pairs} qualifying pairs inside both bounds")))
    })
}

pub fn check_sigma_step_rule(level: VerifyLevel) -> CheckResult {
    check("sigma-step-rule", || {
        let draws = level.pick(1_000, 10_000);
        let m = 10usize;
        let mut rng = derive_rng(13, 0x5A, 0);
        for _ in 0..draws {
            let gamma = 0.3 + 3.0 * rng.gen::<f64>();
            let sigma = 0.1 + 2.0 * rng.gen::<f64>();
            let sp = SplineFamily::new(gamma, sigma)?;
            let s = DVector::from_fn(m, |_, _| 3.0 * sigma * (rng.gen::<f64>() - 0.5));
            let f_now = sp.objective(&s);
            // tightest admissible hypothesis, then a random looser target
            let a = (m as f64 - f_now) + 0.5 * rng.gen::<f64>();
            let b = a + 2.0 * rng.gen::<f64>();
            let c = 2.0 * m as f64 / (2.0 * m as f64 + b - a);
            let shrunk = sp.with_sigma(c * sigma)?;
            if shrunk.objective(&s) < m as f64 - b - 1e-12 {
                return Ok((
                    false,
                    format!("F_cσ fell below m − B (A = {a:.3}, B = {b:.3}, σ = {sigma:.3})"),
                ));
            }
        }
        Ok((true, format!("{draws} draws, zero violations")))
    })
}

pub fn check_gamma_oracle(level: VerifyLevel) -> CheckResult {
    check("gamma-oracle-agreement", || {
        let systems = level.pick(8, 50);
        let limits = Limits::default();
        let mut worst: f64 = 0.0;
        for seed in 0..systems as u64 {
            let d = random_dictionary(4, 8, 6000 + seed)?;
            let mut prev = 0.0;
            for n0 in 1..=3usize {
                let fast = constants::gamma_exact(&d, n0, &limits)?;
                let direct = gamma_direct_oracle(&d, n0, &limits)?;
                match fast.finite() {
                    Some(v) => {
                        let diff = (v - direct).abs() / direct.abs().max(1.0);
                        worst = worst.max(diff);
                        if diff > 1e-8 {
                            return Ok((
                                false,
                                format!("disagreement {diff:.2e} at seed {seed}, n0 = {n0}"),
                            ));
                        }
                        if v < prev - 1e-12 {
                            return Ok((
                                false,
                                format!("monotonicity broken at seed {seed}, n0 = {n0}"),
                            ));
                        }
                        prev = v;
                    }
                    None => {
                        if direct.is_finite() {
                            return Ok((false, "fast route infinite, direct finite".into()));
                        }
                    }
                }
            }
        }
        Ok((true, format!("{systems} systems agree to {worst:.2e}, monotone in n0")))
    })
}

pub fn check_gamma_invariance_and_chain(level: VerifyLevel) -> CheckResult {
    check("gamma-invariance-chain", || {
        let systems = level.pick(3, 10);
        let limits = Limits::default();
        for seed in 0..systems as u64 {
            let mut rng = derive_rng(7000 + seed, 0, 0);
            let raw = gaussian_matrix(4, 8, 0.25, &mut rng);
            let (d, _) = Dictionary::orthonormalize(&raw, &DVector::zeros(4))?;
            // left-multiplication by a well-conditioned nonsingular matrix
            let q = DMatrix::identity(4, 4) + gaussian_matrix(4, 4, 0.01, &mut rng);
            let (d2, _) = Dictionary::orthonormalize(&(q * &raw), &DVector::zeros(4))?;
            for n0 in 1..=3usize {
                let g1 = constants::gamma_exact(&d, n0, &limits)?.finite();
                let g2 = constants::gamma_exact(&d2, n0, &limits)?.finite();
                match (g1, g2) {
                    (Some(a), Some(b)) => {
                        if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                            return Ok((
                                false,
                                format!("left-multiply changed gamma: {a} vs {b} (n0 = {n0})"),
                            ));
                        }
                        let subset =
                            constants::gamma_bound_subset(&d, n0, &limits)?.finite();
                        let aric = constants::gamma_bound_aric(&d, n0, &limits)?.finite();
                        if let (Some(sb), Some(ab)) = (subset, aric) {
                            // relative slack: gamma = λ/(1−λ) amplifies
                            // eigenvalue rounding by 1/(1−λ)² near λ = 1
                            let tol = |v: f64| 1e-9 * v.abs().max(1.0);
                            if !(a <= sb + tol(sb) && sb <= ab + tol(ab)) {
                                return Ok((
                                    false,
                                    format!("bound chain broken: exact {a}, subset {sb}, lower-isometry {ab}"),
                                ));
                            }
                        }
                    }
                    _ => return Ok((false, "unexpected infinite gamma".into())),
                }
            }
        }
        Ok((true, format!("{systems} systems invariant, chain ordered")))
    })
}

pub fn check_aric_definitional(level: VerifyLevel) -> CheckResult {
    check("aric-definitional", || {
        let draws = level.pick(10_000, 100_000);
        let limits = Limits::default();
        // raw ensemble matrix: both isometry constants sit strictly inside
        // (0, 1) here, so attainment is meaningful on each side
        let mut rng = derive_rng(8123, 0xDA, 0);
        let raw = gaussian_matrix(5, 10, 0.2, &mut rng);
        let k = 3;
        let rep = constants::aric_exact(&raw, k, &limits)?;
        if rep.delta_min <= 0.0 || rep.delta_max <= 0.0 {
            return Ok((false, "expected unclamped constants on a raw ensemble".into()));
        }
        let a = &raw;
        let mut rng = derive_rng(8124, 0, 0);
        for _ in 0..draws {
            let support = sample_support(10, k, &mut rng);
            let mut s = DVector::zeros(10);
            for &i in &support {
                s[i] = standard_normal(&mut rng);
            }
            let lhs = (a * &s).norm_squared();
            let nn = s.norm_squared();
            if lhs < (1.0 - rep.delta_min) * nn - 1e-10 || lhs > (1.0 + rep.delta_max) * nn + 1e-10
            {
                return Ok((false, "isometry constants violated by a sparse draw".into()));
            }
        }
        // attainment by the worst subsets' extreme singular vectors
        let attained = |subset: &[usize], take_min: bool| -> f64 {
            let mut sub = DMatrix::zeros(5, k);
            for (j, &c) in subset.iter().enumerate() {
                for i in 0..5 {
                    sub[(i, j)] = a[(i, c)];
                }
            }
            let gram = sub.transpose() * &sub;
            let eig = gram.symmetric_eigen();
            let (mut best_val, mut best_idx) = if take_min {
                (f64::INFINITY, 0)
            } else {
                (f64::NEG_INFINITY, 0)
            };
            for i in 0..k {
                let v = eig.eigenvalues[i];
                if (take_min && v < best_val) || (!take_min && v > best_val) {
                    best_val = v;
                    best_idx = i;
                }
            }
            let mut s = DVector::zeros(10);
            for (j, &c) in subset.iter().enumerate() {
                s[c] = eig.eigenvectors[(j, best_idx)];
            }
            (a * &s).norm_squared() / s.norm_squared()
        };
        let lo = attained(&rep.worst_min_subset, true);
        let hi = attained(&rep.worst_max_subset, false);
        if (lo - (1.0 - rep.delta_min)).abs() > 1e-8 || (hi - (1.0 + rep.delta_max)).abs() > 1e-8 {
            return Ok((false, format!("bounds not attained: {lo:.9} / {hi:.9}")));
        }
        Ok((true, format!("{draws} draws inside, both bounds attained")))
    })
}

/// Qualifying contraction starts on an equiangular system; shared with the
/// acceptance suite.
pub fn contraction_battery(
    starts: usize,
    seed: u64,
) -> Result<(usize, f64, f64, usize)> {
    let d = equiangular_dictionary(24)?;
    let limits = Limits::default();
    let n0 = 6;
    let gamma = constants::gamma_exact(&d, n0, &limits)?
        .finite()
        .expect("finite gamma");
    let (s0, x) = plant(&d, 1, seed);
    let sched = solver::derive_schedule_known_gamma(&d, n0, gamma, 1, 1e-6, 0.0, &x)?;
    let theory = sched.theory.as_ref().unwrap();
    let m = d.cols() as f64;
    let floor = m - n0 as f64 / (2.0 + 2.0 * gamma);
    let stages = sched.stages();
    let probe_stages = [0, stages / 4, stages / 2, 3 * stages / 4, stages - 1];

    let mut rng = derive_rng(seed, 0xC0, 1);
    let mut done = 0;
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    let mut non_monotone = 0;
    while done < starts {
        let stage = probe_stages[done % probe_stages.len()];
        let sigma = sched.sigma[stage];
        let sp = SplineFamily::new(sched.gamma_objective, sigma)?;
        let s_start = &s0 + null_direction(&d, sigma * rng.gen::<f64>(), &mut rng);
        if sp.objective(&s_start) < floor {
            continue;
        }
        let rep = solver::inner_loop_contraction_check(&d, &sched, stage, &s_start)?;
        max_ratio = max_ratio.max(rep.max_ratio);
        violations += rep.violations;
        non_monotone += (!rep.monotone_ascent) as usize;
        done += 1;
    }
    Ok((violations, max_ratio, theory.contraction_ratio, non_monotone))
}

pub fn check_inner_contraction(level: VerifyLevel) -> CheckResult {
    check("inner-loop-contraction", || {
        let starts = level.pick(100, 1000);
        let (violations, max_ratio, cr, non_monotone) = contraction_battery(starts, 90)?;
        if violations > 0 || non_monotone > 0 {
            return Ok((
                false,
                format!("{violations} ratio violations, {non_monotone} non-monotone runs"),
            ));
        }
        Ok((
            true,
            format!("{starts} starts, max ratio {max_ratio:.6} vs CR' {cr:.6}"),
        ))
    })
}

pub fn check_schedule_consistency(_level: VerifyLevel) -> CheckResult {
    check("schedule-self-consistency", || {
        let d = equiangular_dictionary(20)?;
        let gamma = constants::gamma_exact(&d, 6, &Limits::default())?
            .finite()
            .unwrap();
        let (_, x) = plant(&d, 1, 91);
        let sched = solver::derive_schedule_known_gamma(&d, 6, gamma, 1, 1e-6, 0.0, &x)?;
        let t = sched.theory.as_ref().unwrap();
        let m = d.cols() as f64;
        let sigma_last_direct = t.delta_prime / (2.0 * (m * (t.gamma_prime + 1.0)).sqrt());
        let last = *sched.sigma.last().unwrap();
        let rel = (last - sigma_last_direct).abs() / sigma_last_direct;
        if rel > 1e-12 {
            return Ok((false, format!("σ_J off by {rel:.2e}")));
        }
        let recomputed = sched.sigma[0] * sched.c.powi(sched.stages() as i32 - 1);
        if ((recomputed - last) / last).abs() > 1e-12 {
            return Ok((false, "geometric endpoint mismatch".into()));
        }
        if sched.mu != 2.0 / (t.lambda_min_prime + t.lambda_max_prime) {
            return Ok((false, "step size is not exactly 2/(λ'min+λ'max)".into()));
        }
        if !(t.delta > 0.0 && sched.c > 0.0 && sched.c < 1.0) {
            return Ok((false, "Δ or c outside its domain".into()));
        }
        if !(t.contraction_ratio > 0.0 && t.contraction_ratio < 1.0 && t.gamma < t.gamma_prime) {
            return Ok((false, "CR' or γ' outside its domain".into()));
        }
        Ok((true, format!("J = {}, L = {}", sched.stages(), sched.inner_steps)))
    })
}

pub fn check_induction_invariant(_level: VerifyLevel) -> CheckResult {
    check("stagewise-objective-floor", || {
        let d = equiangular_dictionary(24)?;
        let limits = Limits::default();
        let gamma = constants::gamma_exact(&d, 6, &limits)?.finite().unwrap();
        let (_, x) = plant(&d, 1, 92);
        let sched = solver::derive_schedule_known_gamma(&d, 6, gamma, 1, 1e-6, 0.0, &x)?;
        let t = sched.theory.clone().unwrap();
        let trace = solver::solve(&d, &x, &sched, false)?;
        let floor = d.cols() as f64 - t.k_double_prime;
        for (j, f) in trace.stage_final_f().iter().enumerate() {
            if *f < floor {
                return Ok((false, format!("stage {j} ended at F = {f:.6} < m − k'' = {floor:.6}")));
            }
        }
        Ok((true, format!("all {} stages ended above m − k''", sched.stages())))
    })
}

pub fn check_guaranteed_recovery(level: VerifyLevel) -> CheckResult {
    check("guaranteed-recovery-spot", || {
        let trials = level.pick(2, 5);
        let d = equiangular_dictionary(24)?;
        let limits = Limits::default();
        let gamma = constants::gamma_exact(&d, 6, &limits)?.finite().unwrap();
        for trial in 0..trials as u64 {
            let (s0, x) = plant(&d, 1, 9300 + trial);
            // the brute-force engine must confirm the plant is the unique
            // sparsest point before the recovery claim means anything
            let truth = oracle::l0_brute_force(&d, &x, 1, 1e-8, &limits)?;
            let plant_support: Vec<usize> = (0..d.cols()).filter(|&i| s0[i] != 0.0).collect();
            if truth.support != plant_support || !truth.unique {
                return Ok((false, "plant is not the unique sparsest solution".into()));
            }
            let sched = solver::derive_schedule_known_gamma(&d, 6, gamma, 1, 1e-6, 0.0, &x)?;
            let trace = solver::solve(&d, &x, &sched, false)?;
            let err = (&trace.s_out - &s0).norm();
            if err > 1e-6 {
                return Ok((false, format!("trial {trial}: error {err:.3e} > 1e-6")));
            }
            if trace.max_residual() > 1e-9 * x.norm().max(1.0) {
                return Ok((false, "iterate left the feasible set".into()));
            }
            if trace.ascent_violations(d.cols(), 1e-12) != Some(0) {
                return Ok((false, "inner ascent not monotone".into()));
            }
        }
        Ok((true, format!("{trials} planted recoveries within 1e-6, plants oracle-confirmed unique")))
    })
}

pub fn check_noisy_error_bound(level: VerifyLevel) -> CheckResult {
    check("noisy-error-bound-spot", || {
        let trials = level.pick(2, 5);
        let d = equiangular_dictionary(24)?;
        let limits = Limits::default();
        let gamma = constants::gamma_exact(&d, 6, &limits)?.finite().unwrap();
        let eps = 1e-3;
        for trial in 0..trials as u64 {
            let (s0, clean_x) = plant(&d, 1, 9400 + trial);
            let mut rng = derive_rng(9500 + trial, 0, 0);
            let x = &clean_x
                + crate::harness::rng::sphere_point(d.rows(), eps * (1.0 - 1e-12), &mut rng);
            let atx = d.min_norm_solution(&x).norm();
            let sched = solver::derive_schedule_noisy(&d, 6, gamma, 1, None, eps, atx)?;
            let c = sched.theory.as_ref().unwrap().error_constant.unwrap();
            let trace = solver::solve(&d, &x, &sched, false)?;
            let err = (&trace.s_out - &s0).norm();
            if err > c * eps {
                return Ok((false, format!("trial {trial}: error {err:.3e} > C·ε = {:.3e}", c * eps)));
            }
        }
        Ok((true, format!("{trials} noisy recoveries within C·ε")))
    })
}

pub fn check_msl0_equivalence(level: VerifyLevel) -> CheckResult {
    check("msl0-column-equivalence", || {
        let (m, t) = match level {
            VerifyLevel::Quick => (32, 4),
            VerifyLevel::Full => (64, 8),
        };
        let n = m / 2;
        let d = random_dictionary(n, m, 9600)?;
        let mut rng = derive_rng(9601, 0, 0);
        let x = gaussian_matrix(n, t, 1.0, &mut rng);
        let sched = solver::derive_schedule_heuristic(2.0, 0.6, 5, 2.0, 0.02)?;
        let mi = crate::msl0::MultiInstance::new(x.clone(), None, 0.0)?;
        let (batch, trace) = crate::msl0::msolve(&d, &mi, &sched)?;
        if trace.max_residual > 1e-9 * x.amax().max(1.0) {
            return Ok((false, "batched output infeasible".into()));
        }
        let mut worst: f64 = 0.0;
        for c in 0..t {
            let xv = DVector::from_column_slice(x.column(c).as_slice());
            let single = solver::solve(&d, &xv, &sched, false)?;
            for i in 0..m {
                worst = worst.max((batch[(i, c)] - single.s_out[i]).abs());
            }
        }
        if worst > 1e-9 {
            return Ok((false, format!("max-abs deviation {worst:.2e} > 1e-9")));
        }
        Ok((true, format!("T = {t}, m = {m}, max-abs deviation {worst:.2e}")))
    })
}

pub fn check_concentration(level: VerifyLevel) -> CheckResult {
    check("singular-value-concentration", || {
        let trials = level.pick(300, 2000);
        let tall = constants::singular_value_concentration_trial(100, 200, 0.2, trials, 31)?;
        if !tall.within_bound() {
            return Ok((
                false,
                format!(
                    "l <= n case exceeded: {:.4}/{:.4} vs {:.4}",
                    tall.sigma_max_exceed_rate,
                    tall.sigma_min_exceed_rate,
                    tall.tolerance()
                ),
            ));
        }
        // transposed case l > n
        let wide = constants::singular_value_concentration_trial(200, 100, 0.3, trials, 32)?;
        if !wide.within_bound() {
            return Ok((false, "l > n case exceeded its bound".into()));
        }
        Ok((
            true,
            format!(
                "{trials} trials; rates {:.4}/{:.4} within {:.4}",
                tall.sigma_max_exceed_rate,
                tall.sigma_min_exceed_rate,
                tall.tolerance()
            ),
        ))
    })
}

pub fn check_rho(_level: VerifyLevel) -> CheckResult {
    check("rho-positive-regression", || {
        for i in 1..=10 {
            let alpha = i as f64 / 10.0;
            let rep = constants::rho(alpha)?;
            if !(rep.rho > 0.0) {
                return Ok((false, format!("rho({alpha}) not positive")));
            }
        }
        let rep = constants::rho(0.5)?;
        let expect = 1.297623248144e-4;
        if ((rep.rho - expect) / expect).abs() > 1e-9 {
            return Ok((false, format!("rho(0.5) drifted to {:.12e}", rep.rho)));
        }
        Ok((true, format!("rho(0.5) = {:.6e} at beta* = {:.6e}", rep.rho, rep.beta_star)))
    })
}

pub fn check_oracle_planted(level: VerifyLevel) -> CheckResult {
    check("oracle-planted-recovery", || {
        let instances = level.pick(5, 20);
        let limits = Limits::default();
        for seed in 0..instances as u64 {
            let d = random_dictionary(6, 12, 9700 + seed)?;
            if !oracle::urp_check(&d, &limits)? {
                return Ok((false, "random system failed the URP check".into()));
            }
            let (s0, x) = plant(&d, 2, 9800 + seed);
            let res = oracle::l0_brute_force(&d, &x, 3, 1e-8, &limits)?;
            let support: Vec<usize> = (0..12).filter(|&i| s0[i] != 0.0).collect();
            if res.support != support || !res.unique {
                return Ok((false, format!("seed {seed}: wrong or non-unique support")));
            }
        }
        Ok((true, format!("{instances} planted supports recovered uniquely")))
    })
}

pub fn check_fault_injection_mu(_level: VerifyLevel) -> CheckResult {
    check("fault-injection-step-size", || {
        let d = equiangular_dictionary(24)?;
        let limits = Limits::default();
        let gamma = constants::gamma_exact(&d, 6, &limits)?.finite().unwrap();
        let (s0, x) = plant(&d, 1, 95);
        let mut sched = solver::derive_schedule_known_gamma(&d, 6, gamma, 1, 1e-6, 0.0, &x)?;
        sched.mu *= 10.0;
        let mut rng = derive_rng(96, 0, 0);
        let sigma = sched.sigma[0];
        let sp = SplineFamily::new(sched.gamma_objective, sigma)?;
        let floor = d.cols() as f64 - 6.0 / (2.0 + 2.0 * gamma);
        for _ in 0..50 {
            let s_start = &s0 + null_direction(&d, 0.5 * sigma, &mut rng);
            if sp.objective(&s_start) < floor {
                continue;
            }
            return match solver::inner_loop_contraction_check(&d, &sched, 0, &s_start) {
                Ok(rep) => Ok((
                    rep.violations > 0,
                    format!("mutated μ produced {} ratio violations", rep.violations),
                )),
                // divergence of the mutated loop is also a detection
                Err(e) => Ok((true, format!("mutated μ diverged: {e}"))),
            };
        }
        Ok((false, "no qualifying start found".into()))
    })
}

pub fn check_fault_injection_delta(_level: VerifyLevel) -> CheckResult {
    check("fault-injection-sparsity-slack", || {
        let d = equiangular_dictionary(20)?;
        let gamma = constants::gamma_exact(&d, 6, &Limits::default())?
            .finite()
            .unwrap();
        let (_, x) = plant(&d, 1, 97);
        // k at the bound flips the interpolation slack negative: must refuse
        let bound = 6.0 / (2.0 * (1.0 + gamma));
        let k_bad = bound.ceil() as usize;
        match solver::derive_schedule_known_gamma(&d, 6, gamma, k_bad, 1e-6, 0.0, &x) {
            Err(Sl0Error::SparsityTooHigh { .. }) => {
                Ok((true, "negative-slack derivation refused".into()))
            }
            other => Ok((false, format!("expected refusal, got {other:?}"))),
        }
    })
}

/// Run the whole battery at the given level.
pub fn run(level: VerifyLevel) -> VerifyReport {
    let checks = vec![
        check_dictionary_identities(level),
        check_objective_gradient_fd(level),
        check_objective_bounds(level),
        check_scale_covariance(level),
        check_concavity(level),
        check_narrow_variation(level),
        check_sigma_step_rule(level),
        check_gamma_oracle(level),
        check_gamma_invariance_and_chain(level),
        check_aric_definitional(level),
        check_inner_contraction(level),
        check_schedule_consistency(level),
        check_induction_invariant(level),
        check_guaranteed_recovery(level),
        check_noisy_error_bound(level),
        check_msl0_equivalence(level),
        check_concentration(level),
        check_rho(level),
        check_oracle_planted(level),
        check_fault_injection_mu(level),
        check_fault_injection_delta(level),
    ];
    VerifyReport {
        level: match level {
            VerifyLevel::Quick => "quick".to_string(),
            VerifyLevel::Full => "full".to_string(),
        },
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_direct_oracle_hand_value() {
        let a = DMatrix::from_row_slice(1, 2, &[0.5, 3f64.sqrt() / 2.0]);
        let d = Dictionary::from_orthonormal(a).unwrap();
        let g = gamma_direct_oracle(&d, 1, &Limits::default()).unwrap();
        assert!((g - 3.0).abs() <= 1e-9);
    }
}
