//! Bounded test functions with bounded first derivatives.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Payoff {
    /// `f ≡ 1`.
    One,
    /// `sin⟨k, x⟩`.
    Sin { k: Vec<f64> },
    /// `exp(−|x|²)`.
    Gaussian,
    /// `tanh(x_i)`.
    Tanh { i: usize },
}

impl Payoff {
    /// `sin(x_1 + … + x_d)`.
    pub fn sin_sum(d: usize) -> Self {
        Payoff::Sin { k: vec![1.0; d] }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self {
            Payoff::Sin { k } if k.len() != d => {
                Err(Error::param("payoff", format!("sin needs {d} frequencies, got {}", k.len())))
            }
            Payoff::Tanh { i } if *i >= d => Err(Error::param("payoff", format!("tanh coordinate {i} out of range"))),
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Payoff::One => 1.0,
            Payoff::Sin { k } => dot(k, x).sin(),
            Payoff::Gaussian => (-x.iter().map(|v| v * v).sum::<f64>()).exp(),
            Payoff::Tanh { i } => x[*i].tanh(),
        }
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Payoff::One => out.fill(0.0),
            Payoff::Sin { k } => {
                let c = dot(k, x).cos();
                for (o, kj) in out.iter_mut().zip(k) {
                    *o = kj * c;
                }
            }
            Payoff::Gaussian => {
                let e = self.value(x);
                for (o, xj) in out.iter_mut().zip(x) {
                    *o = -2.0 * xj * e;
                }
            }
            Payoff::Tanh { i } => {
                out.fill(0.0);
                let t = x[*i].tanh();
                out[*i] = 1.0 - t * t;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}
