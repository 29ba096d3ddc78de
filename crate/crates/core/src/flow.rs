//! Pathwise integration of the state, its Jacobian flow, and the Malliavin
//! accumulators along one jump path.
//!
//! Between jumps the coupled system
//!
//! ```text
//! X'     = b(X)
//! J'     = G J              G = ∇b(X)
//! Jinv'  = -Jinv G
//! DX'    = G DX
//! DJ_k'  = H_k J + G DJ_k   H_k = Σ_i DX[i,k] ∂_i G
//! ```
//!
//! is integrated by RK4 (or adaptive Dormand–Prince). At a jump `(s, j, ξ)`
//! the state moves by `ξ e_j` and the accumulators are updated from the
//! left-limit state with `w = ψ(s)φ(ξ)` and `w' = ψ(s)²φ(ξ)φ'(ξ)`.

use nalgebra::{DMatrix, DVector};

use crate::drift::Drift;
use crate::error::{Error, Result};
use crate::field::{ibp_integrand_truncated, phi, phi_prime, psi, FieldParams};
use crate::jump_engine::{perturb_path, JumpPath};
use crate::levy_model::LevyCoordinateModel;
use crate::quadrature::integrate;
use crate::truncation::TruncationProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeMethod {
    Rk4,
    /// Dormand–Prince 5(4) with local error control.
    Rk45,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub method: OdeMethod,
    /// Largest step as a fraction of the path horizon.
    pub max_step_fraction: f64,
    /// Fewest RK4 steps per gap between consecutive jumps or output times.
    pub min_substeps: usize,
    /// Local error target of the adaptive method.
    pub tolerance: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { method: OdeMethod::Rk4, max_step_fraction: 1.0 / 64.0, min_substeps: 1, tolerance: 1e-10 }
    }
}

impl OdeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_step_fraction > 0.0 && self.max_step_fraction <= 1.0) {
            return Err(Error::param("max_step_fraction", format!("must lie in (0, 1], got {}", self.max_step_fraction)));
        }
        if self.min_substeps == 0 {
            return Err(Error::param("min_substeps", "must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance", format!("must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowDiagnostics {
    /// `Σ ψ(s)² φ'(ξ)²` over the coordinate-`j` jumps.
    pub score_sum: Vec<f64>,
    /// Number of jumps with `V(s, ξ) > 0` per coordinate.
    pub field_jumps: Vec<u64>,
    /// Largest `max_k ‖D_k R(s)‖_F / s²` seen at a jump.
    pub max_dr_over_s2: f64,
    pub ode_steps: u64,
}

/// The joint pathwise state at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub x: DVector<f64>,
    /// `∇X(t)`.
    pub jac: DMatrix<f64>,
    /// `(∇X(t))^{-1}`, integrated directly.
    pub jac_inv: DMatrix<f64>,
    /// `𝔻X(t)`, column `k` is `D_k X(t)`.
    pub malliavin: DMatrix<f64>,
    /// `D_k ∇X(t)` for each `k`.
    pub d_jac: Vec<DMatrix<f64>>,
    /// Diagonal of `Z^V(t)`.
    pub zv: DVector<f64>,
    /// `D_k Z^V_kk(t)`.
    pub dzv: DVector<f64>,
    /// `D_k^* 1(t)`.
    pub dstar1: DVector<f64>,
    /// `M(t) = ∫ (∇X(s-))^{-1} dZ^V(s)`.
    pub m: DMatrix<f64>,
    /// `D_k M(t)` for each `k`.
    pub dm: Vec<DMatrix<f64>>,
    pub diagnostics: FlowDiagnostics,
}

impl FlowState {
    /// `‖J Jinv − I‖_F`.
    pub fn inverse_defect(&self) -> f64 {
        let d = self.x.len();
        (&self.jac * &self.jac_inv - DMatrix::identity(d, d)).norm()
    }
}

/// `c[d×d] (+)= a · b` on row-major slices.
#[inline]
fn matmul(a: &[f64], b: &[f64], c: &mut [f64], d: usize, accumulate: bool) {
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for l in 0..d {
                s += a[i * d + l] * b[l * d + j];
            }
            if accumulate {
                c[i * d + j] += s;
            } else {
                c[i * d + j] = s;
            }
        }
    }
}

struct System<'a> {
    drift: &'a dyn Drift,
    d: usize,
    full: bool,
    constant: &'a [f64],
    g: Vec<f64>,
    hess: Vec<f64>,
    hk: Vec<f64>,
}

impl System<'_> {
    fn len(&self) -> usize {
        let d = self.d;
        if self.full {
            d + 3 * d * d + d * d * d
        } else {
            d
        }
    }

    fn rhs(&mut self, y: &[f64], out: &mut [f64]) {
        let d = self.d;
        let dd = d * d;
        let (x, rest) = y.split_at(d);
        self.drift.eval(x, &mut out[..d]);
        for (o, c) in out[..d].iter_mut().zip(self.constant) {
            *o += c;
        }
        if !self.full {
            return;
        }
        self.drift.jacobian(x, &mut self.g);
        let (jac, rest) = rest.split_at(dd);
        let (jinv, rest) = rest.split_at(dd);
        let (dx, dj) = rest.split_at(dd);
        let (_, orest) = out.split_at_mut(d);
        let (o_jac, orest) = orest.split_at_mut(dd);
        let (o_jinv, orest) = orest.split_at_mut(dd);
        let (o_dx, o_dj) = orest.split_at_mut(dd);
        matmul(&self.g, jac, o_jac, d, false);
        matmul(jinv, &self.g, o_jinv, d, false);
        o_jinv.iter_mut().for_each(|v| *v = -*v);
        matmul(&self.g, dx, o_dx, d, false);
        let affine = self.drift.is_affine();
        if !affine {
            self.drift.hessian(x, &mut self.hess);
        }
        for k in 0..d {
            let (djk, o_djk) = (&dj[k * dd..(k + 1) * dd], &mut o_dj[k * dd..(k + 1) * dd]);
            matmul(&self.g, djk, o_djk, d, false);
            if affine {
                continue;
            }
            for i in 0..d {
                for l in 0..d {
                    self.hk[i * d + l] = (0..d).map(|m| dx[m * d + k] * self.hess[(i * d + l) * d + m]).sum();
                }
            }
            matmul(&self.hk, jac, o_djk, d, true);
        }
    }
}

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes are unused
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

struct Integrator<'a> {
    sys: System<'a>,
    opts: OdeOptions,
    max_step: f64,
    stages: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    steps: u64,
}

impl<'a> Integrator<'a> {
    fn new(sys: System<'a>, opts: OdeOptions, horizon: f64) -> Self {
        let n = sys.len();
        Integrator {
            sys,
            opts,
            max_step: opts.max_step_fraction * horizon,
            stages: vec![vec![0.0; n]; 7],
            tmp: vec![0.0; n],
            steps: 0,
        }
    }

    fn advance(&mut self, y: &mut [f64], t0: f64, t1: f64) -> Result<()> {
        if t1 <= t0 {
            return Ok(());
        }
        match self.opts.method {
            OdeMethod::Rk4 => {
                let n = (((t1 - t0) / self.max_step).ceil() as usize).max(self.opts.min_substeps);
                let h = (t1 - t0) / n as f64;
                for _ in 0..n {
                    self.rk4_step(y, h);
                }
                Ok(())
            }
            OdeMethod::Rk45 => self.adaptive(y, t0, t1),
        }
    }

    fn rk4_step(&mut self, y: &mut [f64], h: f64) {
        let n = y.len();
        let [k1, k2, k3, k4, ..] = &mut self.stages[..] else { unreachable!() };
        self.sys.rhs(y, k1);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        self.sys.rhs(&self.tmp, k2);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        self.sys.rhs(&self.tmp, k3);
        for i in 0..n {
            self.tmp[i] = y[i] + h * k3[i];
        }
        self.sys.rhs(&self.tmp, k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        self.steps += 1;
    }

    fn adaptive(&mut self, y: &mut [f64], t0: f64, t1: f64) -> Result<()> {
        let n = y.len();
        let mut t = t0;
        let mut h = self.max_step.min(t1 - t0);
        let mut y_new = vec![0.0; n];
        while t < t1 {
            if t + h > t1 {
                h = t1 - t;
            }
            if h <= 1e-14 * (1.0 + t.abs()) {
                return Err(Error::Integration { t, reason: "adaptive step size underflow".into() });
            }
            for s in 0..7 {
                for i in 0..n {
                    self.tmp[i] = y[i] + h * (0..s).map(|l| DP_A[s][l] * self.stages[l][i]).sum::<f64>();
                }
                let (tmp, stage) = (&self.tmp, &mut self.stages[s]);
                self.sys.rhs(tmp, stage);
            }
            let mut err: f64 = 0.0;
            for i in 0..n {
                let (mut hi, mut lo) = (0.0, 0.0);
                for s in 0..7 {
                    hi += DP_B5[s] * self.stages[s][i];
                    lo += DP_B4[s] * self.stages[s][i];
                }
                y_new[i] = y[i] + h * hi;
                let scale = self.opts.tolerance * (1.0 + y[i].abs().max(y_new[i].abs()));
                err = err.max((h * (hi - lo)).abs() / scale);
            }
            if !err.is_finite() {
                return Err(Error::NonFinite { t });
            }
            if err <= 1.0 {
                y.copy_from_slice(&y_new);
                t += h;
                self.steps += 1;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * factor).min(self.max_step);
        }
        Ok(())
    }
}

/// Per-coordinate compensator rate `∫_{ε≤|ξ|<δ} g ρ dξ`; nonzero only for
/// an asymmetric measure under the hard truncation profile.
fn compensator_rates(path: &JumpPath, models: &[LevyCoordinateModel], p: FieldParams) -> Vec<f64> {
    models
        .iter()
        .map(|m| {
            let eps = path.truncation.level;
            if m.is_symmetric() || path.truncation.profile == TruncationProfile::Smooth || eps >= p.delta {
                0.0
            } else {
                // (φρ)' integrates to the boundary values at ±ε
                phi(eps, p) * (m.density_unchecked(-eps) - m.density_unchecked(eps))
            }
        })
        .collect()
}

fn check_finite(y: &[f64], t: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { t })
    }
}

fn check_inputs(drift: &dyn Drift, x0: &[f64], path: &JumpPath, t_out: &[f64]) -> Result<()> {
    if drift.dim() != x0.len() || path.dim != x0.len() {
        return Err(Error::param("dimension", format!("drift {}, x0 {}, path {} disagree", drift.dim(), x0.len(), path.dim)));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("x0", "must be finite"));
    }
    if t_out.windows(2).any(|w| w[1] < w[0]) || t_out.iter().any(|&t| !(0.0..=path.horizon).contains(&t)) {
        return Err(Error::param("t_out", format!("must be sorted within [0, {}]", path.horizon)));
    }
    Ok(())
}

/// Integrates the full pathwise system and returns the state at each output
/// time.
pub fn evolve(
    drift: &dyn Drift,
    x0: &[f64],
    path: &JumpPath,
    t_out: &[f64],
    p: FieldParams,
    models: &[LevyCoordinateModel],
    opts: &OdeOptions,
) -> Result<Vec<FlowState>> {
    check_inputs(drift, x0, path, t_out)?;
    opts.validate()?;
    if models.len() != x0.len() {
        return Err(Error::param("models", format!("need {} coordinate models, got {}", x0.len(), models.len())));
    }
    let d = x0.len();
    let dd = d * d;
    let skip_ode = drift.is_zero();
    let sys = System {
        drift,
        d,
        full: !skip_ode,
        constant: &path.drift_correction,
        g: vec![0.0; dd],
        hess: vec![0.0; dd * d],
        hk: vec![0.0; dd],
    };
    let mut integ = Integrator::new(sys, *opts, path.horizon);

    // y = [X, J, Jinv, DX, DJ_0..DJ_{d-1}]
    let mut y = vec![0.0; d + 3 * dd + dd * d];
    y[..d].copy_from_slice(x0);
    for i in 0..d {
        y[d + i * d + i] = 1.0;
        y[d + dd + i * d + i] = 1.0;
    }
    let (o_jac, o_jinv, o_dx, o_dj) = (d, d + dd, d + 2 * dd, d + 3 * dd);

    let mut zv = vec![0.0; d];
    let mut dzv = vec![0.0; d];
    let mut dstar1 = vec![0.0; d];
    let mut m = vec![0.0; dd];
    let mut dm = vec![0.0; dd * d];
    let mut score_sum = vec![0.0; d];
    let mut field_jumps = vec![0u64; d];
    let mut max_dr_over_s2: f64 = 0.0;
    let mut col = vec![0.0; d];
    let mut dr_col = vec![0.0; d];

    let rates = compensator_rates(path, models, p);
    let mut out = Vec::with_capacity(t_out.len());
    let mut t = 0.0;
    let mut next = 0;

    for &target in t_out {
        while next < path.events.len() && path.events[next].time <= target {
            let e = path.events[next];
            next += 1;
            if skip_ode {
                for (xi, c) in y[..d].iter_mut().zip(&path.drift_correction) {
                    *xi += c * (e.time - t);
                }
            } else {
                integ.advance(&mut y, t, e.time)?;
            }
            t = e.time;
            let j = e.coord;
            let ps = psi(e.time, p);
            let w = ps * phi(e.size, p);
            if w > 0.0 {
                let fp = phi_prime(e.size, p);
                let wp = ps * ps * phi(e.size, p) * fp;
                // column j of Jinv(s-)
                for i in 0..d {
                    col[i] = y[o_jinv + i * d + j];
                }
                for k in 0..d {
                    // D_k R(s-) e_j = -Jinv DJ_k Jinv e_j
                    let djk = &y[o_dj + k * dd..o_dj + (k + 1) * dd];
                    let mut dr_norm2 = 0.0;
                    for i in 0..d {
                        let mut s = 0.0;
                        for l in 0..d {
                            let inner: f64 = (0..d).map(|q| djk[l * d + q] * col[q]).sum();
                            s += y[o_jinv + i * d + l] * inner;
                        }
                        dr_col[i] = -s;
                        dr_norm2 += s * s;
                    }
                    if !skip_ode && e.time > 0.0 {
                        max_dr_over_s2 = max_dr_over_s2.max(dr_norm2.sqrt() / (e.time * e.time));
                    }
                    for i in 0..d {
                        dm[k * dd + i * d + j] += dr_col[i] * w;
                    }
                }
                for i in 0..d {
                    m[i * d + j] += col[i] * w;
                    dm[j * dd + i * d + j] += col[i] * wp;
                }
                y[o_dx + j * d + j] += w;
                zv[j] += w;
                dzv[j] += wp;
                dstar1[j] -= ps * ibp_integrand_truncated(&models[j], &path.truncation, e.size, p);
                score_sum[j] += ps * ps * fp * fp;
                field_jumps[j] += 1;
            }
            y[j] += e.size;
            check_finite(&y[..d], t)?;
        }
        if skip_ode {
            for (xi, c) in y[..d].iter_mut().zip(&path.drift_correction) {
                *xi += c * (target - t);
            }
        } else {
            integ.advance(&mut y, t, target)?;
        }
        t = target;
        check_finite(&y, t)?;

        let mut dstar = dstar1.clone();
        if rates.iter().any(|&r| r != 0.0) {
            let upper = target.min(p.delta);
            let psi_integral = integrate(|s| psi(s, p), 0.0, upper, 1e-13, 1e-12)?.value;
            for (v, r) in dstar.iter_mut().zip(&rates) {
                *v += psi_integral * r;
            }
        }
        let mat = |off: usize| DMatrix::from_row_slice(d, d, &y[off..off + dd]);
        out.push(FlowState {
            t: target,
            x: DVector::from_column_slice(&y[..d]),
            jac: mat(o_jac),
            jac_inv: mat(o_jinv),
            malliavin: mat(o_dx),
            d_jac: (0..d).map(|k| mat(o_dj + k * dd)).collect(),
            zv: DVector::from_column_slice(&zv),
            dzv: DVector::from_column_slice(&dzv),
            dstar1: DVector::from_vec(dstar),
            m: DMatrix::from_row_slice(d, d, &m),
            dm: (0..d).map(|k| DMatrix::from_row_slice(d, d, &dm[k * dd..(k + 1) * dd])).collect(),
            diagnostics: FlowDiagnostics {
                score_sum: score_sum.clone(),
                field_jumps: field_jumps.clone(),
                max_dr_over_s2,
                ode_steps: integ.steps,
            },
        });
    }
    Ok(out)
}

/// Integrates only `X`, on the same step grid that [`evolve`] uses for the
/// same path and output times.
pub fn evolve_state(
    drift: &dyn Drift,
    x0: &[f64],
    path: &JumpPath,
    t_out: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<DVector<f64>>> {
    check_inputs(drift, x0, path, t_out)?;
    opts.validate()?;
    let d = x0.len();
    let skip_ode = drift.is_zero();
    let sys = System { drift, d, full: false, constant: &path.drift_correction, g: Vec::new(), hess: Vec::new(), hk: Vec::new() };
    let mut integ = Integrator::new(sys, *opts, path.horizon);
    let mut y = x0.to_vec();
    let mut out = Vec::with_capacity(t_out.len());
    let (mut t, mut next) = (0.0, 0);
    for &target in t_out {
        while next < path.events.len() && path.events[next].time <= target {
            let e = path.events[next];
            next += 1;
            if skip_ode {
                for (xi, c) in y.iter_mut().zip(&path.drift_correction) {
                    *xi += c * (e.time - t);
                }
            } else {
                integ.advance(&mut y, t, e.time)?;
            }
            t = e.time;
            y[e.coord] += e.size;
        }
        if skip_ode {
            for (xi, c) in y.iter_mut().zip(&path.drift_correction) {
                *xi += c * (target - t);
            }
        } else {
            integ.advance(&mut y, t, target)?;
        }
        t = target;
        check_finite(&y, t)?;
        out.push(DVector::from_column_slice(&y));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathwiseResidual {
    /// `|X^ε(t) − X(t) − ε D_k X(t)|`.
    pub absolute: f64,
    /// The absolute residual divided by `ε²`.
    pub normalized: f64,
}

/// Compares the Malliavin column `D_k X(t)` with the response of `X(t)` to
/// the jump-size perturbation of coordinate `k`.
#[allow(clippy::too_many_arguments)]
pub fn pathwise_derivative_residual(
    drift: &dyn Drift,
    x0: &[f64],
    path: &JumpPath,
    t: f64,
    k: usize,
    eps: f64,
    p: FieldParams,
    models: &[LevyCoordinateModel],
    opts: &OdeOptions,
) -> Result<PathwiseResidual> {
    if eps == 0.0 || !eps.is_finite() {
        return Err(Error::param("eps", format!("must be finite and nonzero, got {eps}")));
    }
    if k >= x0.len() {
        return Err(Error::param("k", format!("coordinate {k} out of range")));
    }
    let base = evolve(drift, x0, path, &[t], p, models, opts)?.remove(0);
    let shifted = evolve_state(drift, x0, &perturb_path(path, k, eps, p), &[t], opts)?.remove(0);
    let predicted = &base.x + base.malliavin.column(k) * eps;
    let absolute = (shifted - predicted).norm();
    Ok(PathwiseResidual { absolute, normalized: absolute / (eps * eps) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{LinearDrift, TanhDrift, ZeroDrift};
    use crate::jump_engine::{simulate_path, JumpEvent};
    use crate::rng::{tags, RngSpec};
    use crate::truncation::Truncation;
    use approx::assert_relative_eq;

    fn setup(d: usize, alpha: f64) -> (Vec<LevyCoordinateModel>, FieldParams) {
        let models = vec![LevyCoordinateModel::stable(alpha, 1.0, 0.5).unwrap(); d];
        (models, FieldParams::new(0.5, 1.0 + 0.75 * alpha).unwrap())
    }

    fn path(models: &[LevyCoordinateModel], t: f64, index: u64) -> JumpPath {
        let tr = Truncation::smooth(0.02 * t.powf(1.0 / 1.5)).unwrap();
        simulate_path(models, t, &tr, RngSpec::new(17, index, tags::JUMPS)).unwrap()
    }

    #[test]
    fn zero_drift_is_exact() {
        let (models, p) = setup(2, 1.5);
        let pth = path(&models, 0.3, 1);
        let s = evolve(&ZeroDrift { d: 2 }, &[0.1, -0.2], &pth, &[0.3], p, &models, &OdeOptions::default()).unwrap().remove(0);
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(s.jac, id);
        assert_eq!(s.jac_inv, id);
        assert_eq!(s.m, DMatrix::from_diagonal(&s.zv));
        assert_eq!(s.malliavin, DMatrix::from_diagonal(&s.zv));
        for k in 0..2 {
            let mut expect = DMatrix::zeros(2, 2);
            expect[(k, k)] = s.dzv[k];
            assert_eq!(s.dm[k], expect);
        }
        for j in 0..2 {
            let z = crate::jump_engine::increment(&pth, 0.3, j);
            assert_relative_eq!(s.x[j], [0.1, -0.2][j] + z, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_drift_matches_matrix_exponential() {
        let b = vec![-0.7, 0.3, 0.2, -0.4];
        let drift = LinearDrift::new(b.clone()).unwrap();
        let (models, p) = setup(2, 1.5);
        let empty = JumpPath::from_events(1.0, Truncation::hard(0.1).unwrap(), 2, vec![]).unwrap();
        let opts = OdeOptions { max_step_fraction: 1.0 / 256.0, ..OdeOptions::default() };
        let s = evolve(&drift, &[1.0, 2.0], &empty, &[1.0], p, &models, &opts).unwrap().remove(0);
        let expm = DMatrix::from_row_slice(2, 2, &b).exp();
        assert!((&s.jac - &expm).norm() < 1e-10);
        assert!(s.inverse_defect() < 1e-9);
        assert!(s.d_jac.iter().all(|m| m.norm() == 0.0));
    }

    #[test]
    fn jacobian_matches_finite_differences_in_x0() {
        let drift = TanhDrift::shipped(2);
        let (models, p) = setup(2, 1.2);
        let pth = path(&models, 0.5, 3);
        let opts = OdeOptions::default();
        let x0 = [0.3, -0.2];
        let s = evolve(&drift, &x0, &pth, &[0.5], p, &models, &opts).unwrap().remove(0);
        let h = 1e-6;
        for k in 0..2 {
            let (mut xp, mut xm) = (x0, x0);
            xp[k] += h;
            xm[k] -= h;
            let a = evolve_state(&drift, &xp, &pth, &[0.5], &opts).unwrap().remove(0);
            let b = evolve_state(&drift, &xm, &pth, &[0.5], &opts).unwrap().remove(0);
            let fd = (a - b) / (2.0 * h);
            for i in 0..2 {
                assert_relative_eq!(fd[i], s.jac[(i, k)], max_relative = 1e-5, epsilon = 1e-9);
            }
        }
        assert!(s.inverse_defect() < 1e-9);
    }

    #[test]
    fn d_jac_matches_perturbed_jacobian() {
        let drift = TanhDrift::shipped(2);
        let (models, p) = setup(2, 1.5);
        let pth = path(&models, 0.4, 5);
        let opts = OdeOptions::default();
        let s = evolve(&drift, &[0.2, 0.4], &pth, &[0.4], p, &models, &opts).unwrap().remove(0);
        let eps = 1e-6;
        for k in 0..2 {
            let plus = evolve(&drift, &[0.2, 0.4], &perturb_path(&pth, k, eps, p), &[0.4], p, &models, &opts).unwrap().remove(0);
            let minus =
                evolve(&drift, &[0.2, 0.4], &perturb_path(&pth, k, -eps, p), &[0.4], p, &models, &opts).unwrap().remove(0);
            let fd = (&plus.jac - &minus.jac) / (2.0 * eps);
            assert!((&fd - &s.d_jac[k]).norm() <= 1e-6 * (1.0 + s.d_jac[k].norm()), "{fd} vs {}", s.d_jac[k]);
            let fd_m = (&plus.m - &minus.m) / (2.0 * eps);
            assert!((&fd_m - &s.dm[k]).norm() <= 1e-5 * (1.0 + s.dm[k].norm()), "{fd_m} vs {}", s.dm[k]);
            let fd_zv = (plus.zv[k] - minus.zv[k]) / (2.0 * eps);
            assert_relative_eq!(fd_zv, s.dzv[k], max_relative = 1e-6);
        }
    }

    #[test]
    fn events_outside_the_field_change_nothing_malliavin() {
        let (models, p) = setup(1, 1.5);
        let drift = TanhDrift::shipped(1);
        let base =
            JumpPath::from_events(1.0, Truncation::hard(1e-3).unwrap(), 1, vec![JumpEvent { time: 0.1, coord: 0, size: 0.05 }])
                .unwrap();
        let mut extra = base.clone();
        extra.events.push(JumpEvent { time: 0.2, coord: 0, size: 0.7 });
        extra.events.push(JumpEvent { time: 0.6, coord: 0, size: 0.01 });
        let opts = OdeOptions::default();
        let a = evolve(&drift, &[0.0], &base, &[1.0], p, &models, &opts).unwrap().remove(0);
        let b = evolve(&drift, &[0.0], &extra, &[1.0], p, &models, &opts).unwrap().remove(0);
        assert_eq!(a.zv, b.zv);
        assert_eq!(a.dzv, b.dzv);
        assert_eq!(a.dstar1, b.dstar1);
        // M and DM see only the jump at 0.1, where the left-limit states agree
        assert_eq!(a.m, b.m);
        assert_eq!(a.dm, b.dm);
    }

    #[test]
    fn score_inequality_holds_pathwise() {
        let (models, p) = setup(2, 1.2);
        for i in 0..50 {
            let pth = path(&models, 0.25, 100 + i);
            let s =
                evolve(&ZeroDrift { d: 2 }, &[0.0, 0.0], &pth, &[0.25], p, &models, &OdeOptions::default()).unwrap().remove(0);
            for j in 0..2 {
                let bound = s.zv[j] * s.diagnostics.score_sum[j].sqrt();
                assert!(s.dzv[j].abs() <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn zv_is_nondecreasing_and_frozen_after_delta() {
        let (models, p) = setup(1, 1.5);
        let pth = path(&models, 1.0, 9);
        let times: Vec<f64> = (1..=20).map(|i| i as f64 * 0.05).collect();
        let states = evolve(&ZeroDrift { d: 1 }, &[0.0], &pth, &times, p, &models, &OdeOptions::default()).unwrap();
        for w in states.windows(2) {
            assert!(w[1].zv[0] >= w[0].zv[0]);
            if w[0].t >= p.delta {
                assert_eq!(w[1].zv[0], w[0].zv[0]);
            }
        }
    }

    #[test]
    fn adaptive_agrees_with_rk4() {
        let drift = TanhDrift::shipped(2);
        let (models, p) = setup(2, 1.5);
        let pth = path(&models, 0.5, 21);
        let rk4 = OdeOptions { max_step_fraction: 1.0 / 512.0, ..OdeOptions::default() };
        let rk45 = OdeOptions { method: OdeMethod::Rk45, ..OdeOptions::default() };
        let a = evolve(&drift, &[0.5, -1.0], &pth, &[0.5], p, &models, &rk4).unwrap().remove(0);
        let b = evolve(&drift, &[0.5, -1.0], &pth, &[0.5], p, &models, &rk45).unwrap().remove(0);
        assert!((&a.x - &b.x).norm() < 1e-8);
        assert!((&a.m - &b.m).norm() < 1e-8);
    }

    #[test]
    fn pathwise_residual_is_quadratic() {
        let drift = TanhDrift::shipped(1);
        let (models, p) = setup(1, 1.5);
        let pth = path(&models, 0.25, 4);
        let zero =
            pathwise_derivative_residual(&ZeroDrift { d: 1 }, &[0.0], &pth, 0.25, 0, 1e-3, p, &models, &OdeOptions::default())
                .unwrap();
        assert!(zero.absolute <= 1e-15);
        let r: Vec<f64> = [1e-3, 5e-4, 2.5e-4]
            .iter()
            .map(|&e| {
                pathwise_derivative_residual(&drift, &[0.8], &pth, 0.25, 0, e, p, &models, &OdeOptions::default())
                    .unwrap()
                    .absolute
            })
            .collect();
        for w in r.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.0..=5.0).contains(&ratio), "{r:?}");
        }
    }
}
