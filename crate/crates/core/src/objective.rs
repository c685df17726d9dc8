//! The quadratic-spline smoothed-ℓ⁰ objective family.
//!
//! `f` is an even quadratic spline with knots at ±σ and ±(1+γ)σ that equals
//! 1 at the origin and vanishes outside [−(1+γ)σ, (1+γ)σ]; F(s) = Σᵢ f(sᵢ)
//! approximates m − ‖s‖₀ from below as σ → 0. The scaled member satisfies
//! f_{γ,σ}(s) = f_γ(s/σ) exactly, so all shape questions reduce to σ = 1.

use crate::dictionary::Dictionary;
use crate::error::{Result, Sl0Error};
use crate::util::pairwise_sum;
use crate::Limits;
use nalgebra::DVector;

/// One member of the (γ, σ) spline family.
#[derive(Debug, Clone, Copy)]
pub struct SplineFamily {
    gamma: f64,
    sigma: f64,
}

impl SplineFamily {
    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Sl0Error::InvalidParameter(format!(
                "spline shape gamma must be positive and finite, got {gamma}"
            )));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Sl0Error::InvalidParameter(format!(
                "spline scale sigma must be positive and finite, got {sigma}"
            )));
        }
        Ok(SplineFamily { gamma, sigma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Same shape at a different scale.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        SplineFamily::new(self.gamma, sigma)
    }

    /// f_{γ,σ}(s) = f_γ(s/σ) ∈ [0, 1].
    pub fn f(&self, s: f64) -> f64 {
        let g = self.gamma;
        let u = (s / self.sigma).abs();
        if u <= 1.0 {
            1.0 - u * u / (1.0 + g)
        } else if u <= 1.0 + g {
            let t = u - g - 1.0;
            t * t / (g * g + g)
        } else {
            0.0
        }
    }

    /// Derivative of f_{γ,σ}; odd, continuous, zero outside the support,
    /// with |f′| ≤ 2/((1+γ)σ) attained only at |s| = σ.
    pub fn f_prime(&self, s: f64) -> f64 {
        let g = self.gamma;
        let u = s / self.sigma;
        let au = u.abs();
        let value = if au <= 1.0 {
            -2.0 * u / (1.0 + g)
        } else if au <= 1.0 + g {
            2.0 * u / (g * g + g) - u.signum() * 2.0 / g
        } else {
            0.0
        };
        value / self.sigma
    }

    /// Piecewise-constant second derivative of f_{γ,σ}. At the knots the
    /// first matching closed branch wins: |s| = σ reports the inner value,
    /// |s| = (1+γ)σ the shoulder value.
    pub fn f_second(&self, s: f64) -> f64 {
        let g = self.gamma;
        let u = (s / self.sigma).abs();
        let value = if u <= 1.0 {
            -2.0 / (g + 1.0)
        } else if u <= 1.0 + g {
            2.0 / (g * g + g)
        } else {
            0.0
        };
        value / (self.sigma * self.sigma)
    }

    /// F(s) = Σᵢ f(sᵢ) ∈ [0, m], accumulated pairwise. Satisfies the lower
    /// bound F(s) ≥ m − ‖s‖²/((1+γ)σ²).
    pub fn objective(&self, s: &DVector<f64>) -> f64 {
        let values: Vec<f64> = s.iter().map(|&v| self.f(v)).collect();
        pairwise_sum(&values)
    }

    /// Component-wise f′; ‖∇F‖ ≤ 2√m/((1+γ)σ).
    pub fn gradient(&self, s: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(s.len(), s.iter().map(|&v| self.f_prime(v)))
    }

    /// Upper bound 2√m/((1+γ)σ) on the gradient norm at dimension m.
    pub fn gradient_norm_bound(&self, m: usize) -> f64 {
        2.0 * (m as f64).sqrt() / ((1.0 + self.gamma) * self.sigma)
    }
}

/// Threshold spec for the clipped ℓ⁰ norm ‖·‖₀,σ.
#[derive(Debug, Clone, Copy)]
pub struct ClippedNormSpec {
    threshold: f64,
}

impl ClippedNormSpec {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold >= 0.0) {
            return Err(Sl0Error::InvalidParameter(format!(
                "clipped-norm threshold must be nonnegative, got {threshold}"
            )));
        }
        Ok(ClippedNormSpec { threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Number of entries with |sᵢ| strictly greater than the threshold.
/// Threshold 0 gives the exact ℓ⁰ norm.
pub fn clipped_l0(spec: &ClippedNormSpec, s: &DVector<f64>) -> usize {
    s.iter().filter(|v| v.abs() > spec.threshold).count()
}

/// Test oracle for local concavity on the feasible set: forms the projected
/// Hessian D·H_F(s)·Dᵀ explicitly (H_F diagonal of f″ values) and reports
/// whether its largest eigenvalue is ≤ 1e-9.
///
/// Preconditions: ‖s‖₀,σ ≤ n₀ (refused otherwise, not `false`) and the
/// caller must supply a spline with γ ≥ γ(n₀) of the dictionary for the
/// result to be meaningful.
pub fn projected_hessian_check(
    sp: &SplineFamily,
    d: &Dictionary,
    s: &DVector<f64>,
    n0: usize,
    limits: &Limits,
) -> Result<bool> {
    let spec = ClippedNormSpec::new(sp.sigma())?;
    let active = clipped_l0(&spec, s);
    if active > n0 {
        return Err(Sl0Error::PreconditionViolated(format!(
            "point has {active} entries above sigma, clipped-norm budget is n0 = {n0}"
        )));
    }
    let basis = d.nullspace_basis(limits)?;
    let m = d.cols();
    let mut scaled = basis.clone();
    for j in 0..m {
        let h = sp.f_second(s[j]);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= h;
        }
    }
    let projected = &scaled * basis.transpose();
    let sym = 0.5 * (&projected + projected.transpose());
    let eig = sym.symmetric_eigen();
    Ok(eig.eigenvalues.max() <= 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_spline() -> SplineFamily {
        SplineFamily::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn spline_values_at_reference_points() {
        let sp = unit_spline();
        assert_eq!(sp.f(0.0), 1.0);
        assert_relative_eq!(sp.f(0.5), 0.875);
        assert_relative_eq!(sp.f(1.5), 0.125);
        assert_eq!(sp.f(2.5), 0.0);
        // both branches meet at the inner knot
        assert_relative_eq!(sp.f(1.0), 0.5);
    }

    #[test]
    fn derivative_reference_points_and_oddness() {
        let sp = unit_spline();
        assert_eq!(sp.f_prime(0.0), 0.0);
        assert_relative_eq!(sp.f_prime(0.5), -0.5);
        for &s in &[0.3, 0.99, 1.2, 1.97, 5.0] {
            assert_relative_eq!(sp.f_prime(-s), -sp.f_prime(s), epsilon = 1e-15);
        }
    }

    #[test]
    fn second_derivative_branches_and_knot_tie_break() {
        let sp = unit_spline();
        assert_relative_eq!(sp.f_second(0.0), -1.0);
        assert_relative_eq!(sp.f_second(1.5), 1.0);
        assert_eq!(sp.f_second(3.0), 0.0);
        // knots: inner value at |s| = sigma, shoulder value at the outer knot
        assert_relative_eq!(sp.f_second(1.0), -1.0);
        assert_relative_eq!(sp.f_second(2.0), 1.0);
    }

    #[test]
    fn objective_and_gradient_reference_values() {
        let sp = unit_spline();
        let s = DVector::from_vec(vec![0.5, 3.0]);
        assert_relative_eq!(sp.objective(&s), 0.875);
        let zero = DVector::zeros(5);
        assert_relative_eq!(sp.objective(&zero), 5.0);
        assert_eq!(sp.gradient(&zero), DVector::zeros(5));
    }

    #[test]
    fn clipped_norm_reference_values() {
        let s = DVector::from_vec(vec![3.0, 0.1, -0.5]);
        assert_eq!(clipped_l0(&ClippedNormSpec::new(0.5).unwrap(), &s), 1);
        assert_eq!(clipped_l0(&ClippedNormSpec::new(0.0).unwrap(), &s), 3);
        assert_eq!(clipped_l0(&ClippedNormSpec::new(0.5).unwrap(), &DVector::zeros(4)), 0);
    }

    #[test]
    fn scale_covariance_is_exact() {
        let shapes = [0.5, 1.0, 2.0, 7.3];
        let scales = [0.1, 1.0, 3.7];
        let points = [-3.0, -1.0, -0.2, 0.0, 0.4, 1.0, 2.2, 9.0];
        for &g in &shapes {
            for &sig in &scales {
                let scaled = SplineFamily::new(g, sig).unwrap();
                let unit = SplineFamily::new(g, 1.0).unwrap();
                for &s in &points {
                    assert_eq!(scaled.f(s), unit.f(s / sig));
                }
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SplineFamily::new(0.0, 1.0).is_err());
        assert!(SplineFamily::new(1.0, 0.0).is_err());
        assert!(SplineFamily::new(f64::NAN, 1.0).is_err());
        assert!(ClippedNormSpec::new(-0.1).is_err());
    }

    #[test]
    fn hessian_check_refuses_precondition_violation() {
        let a = nalgebra::DMatrix::from_row_slice(1, 2, &[std::f64::consts::FRAC_1_SQRT_2; 2]);
        let d = Dictionary::from_orthonormal(a).unwrap();
        let sp = SplineFamily::new(1.0, 0.1).unwrap();
        let s = DVector::from_vec(vec![5.0, -5.0]);
        match projected_hessian_check(&sp, &d, &s, 1, &Limits::default()) {
            Err(Sl0Error::PreconditionViolated(_)) => {}
            other => panic!("expected precondition error, got {other:?}"),
        }
    }

    #[test]
    fn hessian_check_true_for_fully_inner_point() {
        let a = nalgebra::DMatrix::from_row_slice(1, 2, &[std::f64::consts::FRAC_1_SQRT_2; 2]);
        let d = Dictionary::from_orthonormal(a).unwrap();
        // all entries below sigma: diagonal Hessian is negative everywhere
        let sp = SplineFamily::new(1.0, 10.0).unwrap();
        let s = DVector::from_vec(vec![1.0, 1.0]);
        assert!(projected_hessian_check(&sp, &d, &s, 0, &Limits::default()).unwrap());
    }
}
