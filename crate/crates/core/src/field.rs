//! The cutoff field `V(s, ξ) = ψ_δ(s) φ_δ(ξ)` that defines the direction of
//! the jump-size perturbation.

use crate::error::{Error, Result};
use crate::levy_model::LevyCoordinateModel;
use crate::truncation::Truncation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldParams {
    pub delta: f64,
    pub kappa: f64,
}

impl FieldParams {
    pub fn new(delta: f64, kappa: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::param("delta", format!("must be positive, got {delta}")));
        }
        if !(kappa > 1.0 && kappa.is_finite()) {
            return Err(Error::param("kappa", format!("must exceed 1, got {kappa}")));
        }
        Ok(FieldParams { delta, kappa })
    }
}

#[inline]
fn h(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 on `x ≤ 0`, 1 on `x ≥ 1`.
#[inline]
fn step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let (a, b) = (h(x), h(1.0 - x));
        a / (a + b)
    }
}

#[inline]
fn step_prime(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let (a, b) = (h(x), h(1.0 - x));
    let s = a + b;
    a * b * (1.0 / (x * x) + 1.0 / ((1.0 - x) * (1.0 - x))) / (s * s)
}

/// `ψ_δ(r)`: 1 on `|r| ≤ δ/2`, 0 on `|r| ≥ δ`, smooth and even.
#[inline]
pub fn psi(r: f64, p: FieldParams) -> f64 {
    step((p.delta - r.abs()) / (0.5 * p.delta))
}

#[inline]
pub fn psi_prime(r: f64, p: FieldParams) -> f64 {
    let d = step_prime((p.delta - r.abs()) / (0.5 * p.delta));
    if d == 0.0 {
        0.0
    } else {
        -r.signum() * d / (0.5 * p.delta)
    }
}

/// `φ_δ(r) = |r|^κ ψ_δ(r)`.
#[inline]
pub fn phi(r: f64, p: FieldParams) -> f64 {
    let a = r.abs();
    if a == 0.0 || a >= p.delta {
        0.0
    } else {
        a.powf(p.kappa) * psi(r, p)
    }
}

/// `φ_δ'(r)`. At `r = 0` this is the two-sided limit 0, since `κ > 1`.
#[inline]
pub fn phi_prime(r: f64, p: FieldParams) -> f64 {
    let a = r.abs();
    if a == 0.0 || a >= p.delta {
        return 0.0;
    }
    let pow = a.powf(p.kappa - 1.0);
    r.signum() * p.kappa * pow * psi(r, p) + a * pow * psi_prime(r, p)
}

/// `V(s, ξ) = ψ_δ(s) φ_δ(ξ)`.
#[inline]
pub fn v_weight(s: f64, xi: f64, p: FieldParams) -> f64 {
    psi(s, p) * phi(xi, p)
}

/// `g(ξ) = φ'(ξ) + φ(ξ) ρ'(ξ)/ρ(ξ) = (φρ)'/ρ`, for `0 < |ξ| < δ`.
pub fn ibp_integrand(m: &LevyCoordinateModel, xi: f64, p: FieldParams) -> Result<f64> {
    if xi == 0.0 || xi.abs() >= p.delta {
        return Err(Error::Domain { what: "xi", value: xi, domain: format!("(-{d}, {d}) \\ {{0}}", d = p.delta) });
    }
    Ok(phi_prime(xi, p) + phi(xi, p) * m.log_density_derivative(xi)?)
}

/// `(φ ρ χ)'/(ρ χ)` for the simulated density `ρ χ`, where `χ` is the
/// acceptance profile of the truncation. Zero outside `(-δ, δ)`.
#[inline]
pub fn ibp_integrand_truncated(m: &LevyCoordinateModel, trunc: &Truncation, xi: f64, p: FieldParams) -> f64 {
    let f = phi(xi, p);
    if f == 0.0 {
        return phi_prime(xi, p);
    }
    phi_prime(xi, p) + f * (m.log_density_derivative_unchecked(xi) + trunc.log_acceptance_derivative(xi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::LevyCoordinateModel;
    use crate::quadrature::integrate_geometric;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(kappa: f64) -> FieldParams {
        FieldParams::new(0.5, kappa).unwrap()
    }

    #[test]
    fn psi_plateaus() {
        let p = params(2.0);
        assert_eq!(psi(p.delta / 4.0, p), 1.0);
        assert_eq!(psi(p.delta / 2.0, p), 1.0);
        assert_eq!(psi(p.delta, p), 0.0);
        let v = psi(0.75 * p.delta, p);
        assert!(v > 0.0 && v < 1.0);
        assert_eq!(v, psi(-0.75 * p.delta, p));
    }

    #[test]
    fn phi_values() {
        let p = params(2.0);
        let d = p.delta;
        assert_relative_eq!(phi(d / 2.0, p), d * d / 4.0, max_relative = 1e-15);
        assert_relative_eq!(phi(-d / 2.0, p), d * d / 4.0, max_relative = 1e-15);
        assert_relative_eq!(phi_prime(-d / 2.0, p), -d, max_relative = 1e-15);
        assert_eq!(phi(d, p), 0.0);
        assert_eq!(phi(0.0, p), 0.0);
    }

    #[test]
    fn phi_prime_matches_central_difference() {
        let p = params(1.0 + 0.75 * 1.5);
        let hstep = 1e-6 * p.delta;
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            // avoid the exact plateau edges where φ' has tiny magnitude
            let r = -0.99 * p.delta + 1.98 * p.delta * (i as f64 + 0.5) / 200.0;
            let fd = (phi(r + hstep, p) - phi(r - hstep, p)) / (2.0 * hstep);
            let exact = phi_prime(r, p);
            if exact.abs() > 1e-6 {
                worst = worst.max(((fd - exact) / exact).abs());
            }
        }
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn v_weight_values() {
        let p = params(2.0);
        let d = p.delta;
        assert_relative_eq!(v_weight(d / 4.0, d / 4.0, p), d * d / 16.0, max_relative = 1e-15);
        assert_eq!(v_weight(2.0 * d, 0.1, p), 0.0);
        let s = 0.6 * d;
        assert_eq!(v_weight(s, s, p), psi(s, p) * phi(s, p));
    }

    #[test]
    fn ibp_integrand_stable_plateau() {
        let (alpha, kappa) = (1.5, 1.9);
        let p = params(kappa);
        let m = LevyCoordinateModel::stable(alpha, 1.0, 0.5).unwrap();
        for i in 1..=50 {
            let x = 0.25 * i as f64 / 50.0;
            for xi in [x, -x] {
                let expect = (kappa - 1.0 - alpha) * xi.abs().powf(kappa - 1.0) * xi.signum();
                assert_relative_eq!(ibp_integrand(&m, xi, p).unwrap(), expect, max_relative = 1e-12);
            }
        }
        assert!(ibp_integrand(&m, 0.5, p).is_err());
        assert!(ibp_integrand(&m, 0.0, p).is_err());
    }

    #[test]
    fn ibp_integrand_is_odd_and_centered() {
        let p = params(1.9);
        let m = LevyCoordinateModel::stable(1.5, 1.0, 0.5).unwrap();
        for i in 1..=100 {
            let x = 0.499 * i as f64 / 100.0;
            let (a, b) = (ibp_integrand(&m, x, p).unwrap(), ibp_integrand(&m, -x, p).unwrap());
            assert!((a + b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
        for eps in [1e-6, 1e-3, 0.1] {
            let g = |x: f64| ibp_integrand(&m, x, p).unwrap() * m.density(x).unwrap();
            let pos = integrate_geometric(g, eps, 0.5 - 1e-15, 1e-13, 1e-13).unwrap().value;
            let neg = integrate_geometric(|x| g(-x), eps, 0.5 - 1e-15, 1e-13, 1e-13).unwrap().value;
            assert!((pos + neg).abs() <= 1e-10, "{eps}: {}", pos + neg);
        }
    }

    proptest! {
        #[test]
        fn symmetry_and_bounds(r in -2.0f64..2.0, kappa in 1.01f64..3.0) {
            let p = params(kappa);
            let v = psi(r, p);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, psi(-r, p));
            prop_assert_eq!(phi(r, p), phi(-r, p));
            prop_assert!(phi(r, p) >= 0.0);
            prop_assert_eq!(phi_prime(r, p), -phi_prime(-r, p));
        }

        #[test]
        fn psi_monotone_on_transition(a in 0.25f64..0.5, b in 0.25f64..0.5) {
            let p = params(2.0);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(psi(lo, p) >= psi(hi, p));
        }
    }
}
