//! Gradient weights `Y(t)` (pure jump noise) and `Y(t, x)` (with drift).

use nalgebra::{DMatrix, DVector};

use crate::flow::FlowState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WeightFailure {
    /// Some `Z^V_jj(t) = 0`.
    NoSmallJumps,
    /// `‖Q(t, x)‖ > c_q`.
    QBoundViolated,
    SingularM,
}

impl WeightFailure {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightFailure::NoSmallJumps => "no_small_jumps",
            WeightFailure::QBoundViolated => "q_bound_violated",
            WeightFailure::SingularM => "singular_M",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub y_levy: DVector<f64>,
    pub y_general: DVector<f64>,
    /// `A = M^{-1}`.
    pub a: DMatrix<f64>,
    /// `‖(M − diag Z^V) diag(Z^V)^{-1}‖₂`.
    pub q_norm: f64,
    pub failure: Option<WeightFailure>,
}

impl WeightBundle {
    pub fn valid(&self) -> bool {
        self.failure.is_none()
    }

    fn invalid(d: usize, q_norm: f64, failure: WeightFailure) -> Self {
        WeightBundle {
            y_levy: DVector::from_element(d, f64::NAN),
            y_general: DVector::from_element(d, f64::NAN),
            a: DMatrix::from_element(d, d, f64::NAN),
            q_norm,
            failure: Some(failure),
        }
    }
}

/// `Y_j(t) = D_j^*1 / Z^V_jj + D_j Z^V_jj / (Z^V_jj)²`.
pub fn y_levy(state: &FlowState) -> Result<DVector<f64>, WeightFailure> {
    if state.zv.iter().any(|&z| !(z > 0.0)) {
        return Err(WeightFailure::NoSmallJumps);
    }
    Ok(DVector::from_iterator(
        state.zv.len(),
        (0..state.zv.len()).map(|j| {
            let z = state.zv[j];
            state.dstar1[j] / z + state.dzv[j] / (z * z)
        }),
    ))
}

/// Default bound on `‖Q‖` below which `M` is a safe Neumann perturbation of
/// `diag Z^V`.
pub const DEFAULT_Q_BOUND: f64 = 0.5;

/// `Y_j(t, x) = Σ_k [A_kj D_k^*1 + (A D_kM A)_kj]` with `A = M^{-1}`.
pub fn y_general(state: &FlowState, c_q: f64) -> WeightBundle {
    let d = state.zv.len();
    let levy = match y_levy(state) {
        Ok(y) => y,
        Err(f) => return WeightBundle::invalid(d, f64::NAN, f),
    };
    let inv_diag = DMatrix::from_diagonal(&state.zv.map(|z| 1.0 / z));
    let q = (&state.m - DMatrix::from_diagonal(&state.zv)) * &inv_diag;
    let q_norm = if d == 1 { q[(0, 0)].abs() } else { q.singular_values().max() };
    if !(q_norm <= c_q) {
        let mut b = WeightBundle::invalid(d, q_norm, WeightFailure::QBoundViolated);
        b.y_levy = levy;
        return b;
    }
    let a = match state.m.clone().lu().try_inverse() {
        Some(a) if a.iter().all(|v| v.is_finite()) => a,
        _ => {
            let mut b = WeightBundle::invalid(d, q_norm, WeightFailure::SingularM);
            b.y_levy = levy;
            return b;
        }
    };
    let mut y = a.tr_mul(&state.dstar1);
    for k in 0..d {
        let adma = &a * &state.dm[k] * &a;
        for j in 0..d {
            y[j] += adma[(k, j)];
        }
    }
    WeightBundle { y_levy: levy, y_general: y, a, q_norm, failure: None }
}

/// `Y(t) − Y(t, x)` for two states computed on the same jump path.
pub fn weight_difference(state_levy: &FlowState, state_drift: &FlowState) -> Result<DVector<f64>, WeightFailure> {
    let levy = y_levy(state_levy)?;
    let general = y_general(state_drift, DEFAULT_Q_BOUND);
    match general.failure {
        Some(f) => Err(f),
        None => Ok(levy - general.y_general),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{LinearDrift, TanhDrift, ZeroDrift};
    use crate::field::{ibp_integrand, phi, phi_prime, FieldParams};
    use crate::flow::{evolve, OdeOptions};
    use crate::jump_engine::{simulate_path, JumpEvent, JumpPath};
    use crate::levy_model::LevyCoordinateModel;
    use crate::rng::{tags, RngSpec};
    use crate::truncation::Truncation;
    use approx::assert_relative_eq;

    fn one_jump(s: f64, xi: f64) -> JumpPath {
        JumpPath::from_events(0.5, Truncation::hard(1e-3).unwrap(), 1, vec![JumpEvent { time: s, coord: 0, size: xi }]).unwrap()
    }

    #[test]
    fn one_jump_closed_form() {
        let m = LevyCoordinateModel::stable(1.5, 1.0, 0.5).unwrap();
        let p = FieldParams::new(0.5, 2.125).unwrap();
        let xi = 0.1;
        let st =
            evolve(&ZeroDrift { d: 1 }, &[0.0], &one_jump(0.1, xi), &[0.5], p, std::slice::from_ref(&m), &OdeOptions::default())
                .unwrap()
                .remove(0);
        let g = ibp_integrand(&m, xi, p).unwrap();
        let expect = -g / phi(xi, p) + phi_prime(xi, p) / phi(xi, p);
        assert_relative_eq!(y_levy(&st).unwrap()[0], expect, max_relative = 1e-14);
    }

    #[test]
    fn empty_path_fails() {
        let m = LevyCoordinateModel::stable(1.5, 1.0, 0.5).unwrap();
        let p = FieldParams::new(0.5, 2.125).unwrap();
        let path = JumpPath::from_events(0.5, Truncation::hard(1e-3).unwrap(), 1, vec![]).unwrap();
        let st = evolve(&ZeroDrift { d: 1 }, &[0.0], &path, &[0.5], p, &[m], &OdeOptions::default()).unwrap().remove(0);
        assert_eq!(y_levy(&st), Err(WeightFailure::NoSmallJumps));
        assert_eq!(y_general(&st, 0.5).failure, Some(WeightFailure::NoSmallJumps));
    }

    #[test]
    fn linear_drift_one_jump() {
        let m = LevyCoordinateModel::stable(1.5, 1.0, 0.5).unwrap();
        let p = FieldParams::new(0.5, 2.125).unwrap();
        let (s, xi) = (0.2, 0.1);
        let drift = LinearDrift::new(vec![-1.0]).unwrap();
        let opts = OdeOptions { max_step_fraction: 1.0 / 1024.0, ..OdeOptions::default() };
        let st = evolve(&drift, &[0.3], &one_jump(s, xi), &[0.5], p, &[m], &opts).unwrap().remove(0);
        let w = phi(xi, p);
        assert_relative_eq!(st.m[(0, 0)], s.exp() * w, max_relative = 1e-10);
        let b = y_general(&st, 0.5);
        assert!(b.valid());
        assert_relative_eq!(b.a[(0, 0)], (-s).exp() / w, max_relative = 1e-10);
        // Hessian vanishes, so D M = Jinv(s) w' and Y = A D*1 + A² DM
        let wp = w * phi_prime(xi, p);
        let a = (-s).exp() / w;
        let expect = a * st.dstar1[0] + a * a * s.exp() * wp;
        assert_relative_eq!(b.y_general[0], expect, max_relative = 1e-10);
        assert_relative_eq!(b.q_norm, s.exp() - 1.0, max_relative = 1e-10);
    }

    #[test]
    fn reduction_without_drift() {
        let models = vec![LevyCoordinateModel::stable(1.2, 1.0, 0.5).unwrap(); 2];
        let p = FieldParams::new(0.5, 1.9).unwrap();
        for i in 0..200 {
            let path = simulate_path(&models, 0.3, &Truncation::smooth(0.01).unwrap(), RngSpec::new(2, i, tags::JUMPS)).unwrap();
            let st =
                evolve(&ZeroDrift { d: 2 }, &[0.0, 0.0], &path, &[0.3], p, &models, &OdeOptions::default()).unwrap().remove(0);
            let b = y_general(&st, 0.5);
            if let Some(f) = b.failure {
                assert_eq!(f, WeightFailure::NoSmallJumps);
                continue;
            }
            for j in 0..2 {
                assert!((b.y_general[j] - b.y_levy[j]).abs() <= 1e-12 * b.y_levy[j].abs().max(1.0));
            }
            assert_eq!(b.q_norm, 0.0);
            assert!(weight_difference(&st, &st).unwrap().norm() <= 1e-12 * b.y_levy.norm().max(1.0));
        }
    }

    #[test]
    fn a_inverts_m() {
        let models = vec![LevyCoordinateModel::stable(1.5, 1.0, 0.5).unwrap(); 2];
        let p = FieldParams::new(0.5, 2.125).unwrap();
        let drift = TanhDrift::shipped(2);
        for i in 0..100 {
            let path =
                simulate_path(&models, 0.25, &Truncation::smooth(0.005).unwrap(), RngSpec::new(3, i, tags::JUMPS)).unwrap();
            let st = evolve(&drift, &[0.3, -0.2], &path, &[0.25], p, &models, &OdeOptions::default()).unwrap().remove(0);
            let b = y_general(&st, 0.5);
            if b.valid() {
                assert!((&b.a * &st.m - DMatrix::identity(2, 2)).norm() < 1e-9);
                assert!(b.q_norm <= 0.5);
            }
        }
    }
}
