//! Drift fields `b: ℝ^d → ℝ^d` with their first and second derivatives.

use crate::error::{Error, Result};

/// A `C²` drift with bounded derivatives.
///
/// Matrices are row-major: `jacobian[i*d + j] = ∂b_i/∂x_j` and
/// `hessian[(i*d + j)*d + k] = ∂²b_i/∂x_j∂x_k`.
pub trait Drift: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
    fn jacobian(&self, x: &[f64], out: &mut [f64]);
    fn hessian(&self, x: &[f64], out: &mut [f64]);
    /// `b ≡ 0`, which lets the flow skip the ODE entirely.
    fn is_zero(&self) -> bool {
        false
    }
    /// `∇²b ≡ 0`.
    fn is_affine(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroDrift {
    pub d: usize,
}

impl Drift for ZeroDrift {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn jacobian(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn hessian(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn is_zero(&self) -> bool {
        true
    }
    fn is_affine(&self) -> bool {
        true
    }
}

fn square(name: &'static str, b: &[f64]) -> Result<usize> {
    let d = (b.len() as f64).sqrt().round() as usize;
    if d == 0 || d * d != b.len() || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::param(name, format!("need a finite square matrix, got {} entries", b.len())));
    }
    Ok(d)
}

/// `b(x) = B x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDrift {
    d: usize,
    b: Vec<f64>,
}

impl LinearDrift {
    /// `b` is row-major `d × d`.
    pub fn new(b: Vec<f64>) -> Result<Self> {
        Ok(LinearDrift { d: square("linear drift", &b)?, b })
    }
}

impl Drift for LinearDrift {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            out[i] = (0..d).map(|j| self.b[i * d + j] * x[j]).sum();
        }
    }
    fn jacobian(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b);
    }
    fn hessian(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn is_affine(&self) -> bool {
        true
    }
}

/// `b_i(x) = Σ_j B_ij tanh(x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TanhDrift {
    d: usize,
    b: Vec<f64>,
}

impl TanhDrift {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        Ok(TanhDrift { d: square("tanh drift", &b)?, b })
    }

    /// The test drift: `B_ii = -0.6`, `B_{i,i+1} = 0.2`, `B_{i+1,i} = 0.1`.
    pub fn shipped(d: usize) -> Self {
        let mut b = vec![0.0; d * d];
        for i in 0..d {
            b[i * d + i] = -0.6;
            if i + 1 < d {
                b[i * d + i + 1] = 0.2;
                b[(i + 1) * d + i] = 0.1;
            }
        }
        TanhDrift { d, b }
    }

    pub fn matrix(&self) -> &[f64] {
        &self.b
    }
}

impl Drift for TanhDrift {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            out[i] = (0..d).map(|j| self.b[i * d + j] * x[j].tanh()).sum();
        }
    }
    fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        for j in 0..d {
            let t = x[j].tanh();
            let sech2 = 1.0 - t * t;
            for i in 0..d {
                out[i * d + j] = self.b[i * d + j] * sech2;
            }
        }
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        out.fill(0.0);
        for j in 0..d {
            let t = x[j].tanh();
            let second = -2.0 * t * (1.0 - t * t);
            for i in 0..d {
                out[(i * d + j) * d + j] = self.b[i * d + j] * second;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn check_derivatives(drift: &dyn Drift, x: &[f64]) -> std::result::Result<(), TestCaseError> {
        let d = drift.dim();
        let h = 1e-6;
        let (mut jac, mut hess) = (vec![0.0; d * d], vec![0.0; d * d * d]);
        drift.jacobian(x, &mut jac);
        drift.hessian(x, &mut hess);
        let (mut plus, mut minus) = (vec![0.0; d], vec![0.0; d]);
        let (mut jp, mut jm) = (vec![0.0; d * d], vec![0.0; d * d]);
        for k in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            drift.eval(&xp, &mut plus);
            drift.eval(&xm, &mut minus);
            drift.jacobian(&xp, &mut jp);
            drift.jacobian(&xm, &mut jm);
            for i in 0..d {
                let fd = (plus[i] - minus[i]) / (2.0 * h);
                let exact = jac[i * d + k];
                prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1e-3), "jac {i}{k}: {fd} vs {exact}");
                for j in 0..d {
                    let fd = (jp[i * d + j] - jm[i * d + j]) / (2.0 * h);
                    let exact = hess[(i * d + j) * d + k];
                    prop_assert!((fd - exact).abs() <= 1e-5 * exact.abs().max(1e-3), "hess {i}{j}{k}: {fd} vs {exact}");
                }
            }
        }
        Ok(())
    }

    proptest! {
        #[test]
        fn tanh_derivatives_match_differences(x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, x2 in -3.0f64..3.0) {
            check_derivatives(&TanhDrift::shipped(3), &[x0, x1, x2])?;
            check_derivatives(&LinearDrift::new(vec![-1.0, 0.5, 0.2, -0.3]).unwrap(), &[x0, x1])?;
        }
    }
}
