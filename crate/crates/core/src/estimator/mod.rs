//! Monte Carlo drivers: gradient estimates, finite-difference oracles,
//! integration-by-parts checks, and small-time scaling studies.
//!
//! Paths are split into fixed-size batches that run on a dedicated thread
//! pool. Each path draws from its own stream keyed by its global index, and
//! batch results are merged in batch order, so the output does not depend
//! on the number of workers.

mod payoff;
mod slope;
mod stats;

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

pub use payoff::Payoff;
pub use slope::{fit_loglog, SlopeFit};
pub use stats::RunningStats;

use crate::drift::{Drift, ZeroDrift};
use crate::error::{Error, Result};
use crate::field::{v_weight, FieldParams};
use crate::flow::{evolve, evolve_state, pathwise_derivative_residual, FlowState, OdeOptions};
use crate::jump_engine::{simulate_path, JumpPath};
use crate::levy_model::{default_kappa, LevyCoordinateModel};
use crate::rng::{tags, RngSpec};
use crate::truncation::{Truncation, TruncationSpec};
use crate::weights::{y_general, y_levy, WeightFailure, DEFAULT_Q_BOUND};

/// Everything needed to run a Monte Carlo experiment at one horizon.
#[derive(Clone)]
pub struct EstimatorConfig {
    pub models: Vec<LevyCoordinateModel>,
    pub field: FieldParams,
    pub truncation: TruncationSpec,
    pub drift: Arc<dyn Drift>,
    pub payoff: Payoff,
    pub x0: Vec<f64>,
    pub t: f64,
    pub n_paths: u64,
    pub batch_size: u64,
    pub master_seed: u64,
    pub workers: usize,
    pub ode: OdeOptions,
    pub q_bound: f64,
}

impl fmt::Debug for EstimatorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EstimatorConfig")
            .field("models", &self.models)
            .field("field", &self.field)
            .field("truncation", &self.truncation)
            .field("drift_dim", &self.drift.dim())
            .field("payoff", &self.payoff)
            .field("x0", &self.x0)
            .field("t", &self.t)
            .field("n_paths", &self.n_paths)
            .field("batch_size", &self.batch_size)
            .field("master_seed", &self.master_seed)
            .field("workers", &self.workers)
            .field("ode", &self.ode)
            .field("q_bound", &self.q_bound)
            .finish()
    }
}

impl EstimatorConfig {
    /// `d` independent symmetric α-stable coordinates of unit scale, with
    /// `δ = 0.5`, `κ = 1 + 3α/4`, zero drift, `f = sin(x_1 + … + x_d)` and
    /// `x = 0`.
    pub fn stable(d: usize, alpha: f64, t: f64, n_paths: u64) -> Result<Self> {
        let delta = 0.5;
        let model = LevyCoordinateModel::stable(alpha, 1.0, delta)?;
        let cfg = EstimatorConfig {
            models: vec![model; d],
            field: FieldParams::new(delta, default_kappa(alpha))?,
            truncation: TruncationSpec::default(),
            drift: Arc::new(ZeroDrift { d }),
            payoff: Payoff::sin_sum(d),
            x0: vec![0.0; d],
            t,
            n_paths,
            batch_size: 4096,
            master_seed: 1,
            workers: 1,
            ode: OdeOptions::default(),
            q_bound: DEFAULT_Q_BOUND,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.x0.len();
        if d == 0 || self.models.len() != d || self.drift.dim() != d {
            return Err(Error::param(
                "dimension",
                format!("x0 {}, models {}, drift {} disagree", d, self.models.len(), self.drift.dim()),
            ));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::param("t", format!("must be positive, got {}", self.t)));
        }
        if self.n_paths == 0 || self.batch_size == 0 {
            return Err(Error::param("n_paths", "paths and batch size must be at least 1"));
        }
        if !(self.q_bound > 0.0) {
            return Err(Error::param("q_bound", format!("must be positive, got {}", self.q_bound)));
        }
        for m in &self.models {
            if (m.delta() - self.field.delta).abs() > 1e-15 * self.field.delta {
                return Err(Error::param(
                    "delta",
                    format!("measure delta {} differs from field delta {}", m.delta(), self.field.delta),
                ));
            }
        }
        self.payoff.check_dim(d)?;
        self.ode.validate()
    }

    pub fn with_t(&self, t: f64) -> Self {
        EstimatorConfig { t, ..self.clone() }
    }

    pub fn resolved_truncation(&self) -> Result<Truncation> {
        self.truncation.resolve(&self.models, self.t)
    }

    fn path(&self, trunc: &Truncation, index: u64, tag: u64) -> Result<JumpPath> {
        simulate_path(&self.models, self.t, trunc, RngSpec::new(self.master_seed, index, tag))
    }

    fn state(&self, path: &JumpPath) -> Result<FlowState> {
        let mut s = evolve(&*self.drift, &self.x0, path, &[self.t], self.field, &self.models, &self.ode)?;
        Ok(s.pop().expect("one output time"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FailureCounts {
    pub no_small_jumps: u64,
    pub q_bound_violated: u64,
    pub singular_m: u64,
}

impl FailureCounts {
    pub fn record(&mut self, f: WeightFailure) {
        match f {
            WeightFailure::NoSmallJumps => self.no_small_jumps += 1,
            WeightFailure::QBoundViolated => self.q_bound_violated += 1,
            WeightFailure::SingularM => self.singular_m += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.no_small_jumps + self.q_bound_violated + self.singular_m
    }

    fn merge(&mut self, o: &FailureCounts) {
        self.no_small_jumps += o.no_small_jumps;
        self.q_bound_violated += o.q_bound_violated;
        self.singular_m += o.singular_m;
    }
}

/// Failure fraction above which an estimate is flagged as possibly biased.
pub const BIAS_FLAG_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_valid: u64,
    pub n_failed: u64,
    pub failures: FailureCounts,
    /// Failed paths exceed [`BIAS_FLAG_FRACTION`] of the total.
    pub bias_flag: bool,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

impl From<&RunningStats> for ScalarEstimate {
    fn from(s: &RunningStats) -> Self {
        ScalarEstimate { mean: s.mean(), stderr: s.stderr(), n: s.count() }
    }
}

trait Accumulate: Send + Sized {
    fn merge(&mut self, other: Self);
}

#[derive(Debug, Clone)]
struct VecAcc {
    stats: Vec<RunningStats>,
    failures: FailureCounts,
}

impl VecAcc {
    fn new(n: usize) -> Self {
        VecAcc { stats: vec![RunningStats::new(); n], failures: FailureCounts::default() }
    }
}

impl Accumulate for VecAcc {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.stats.iter_mut().zip(&other.stats) {
            a.merge(b);
        }
        self.failures.merge(&other.failures);
    }
}

impl<T: Send> Accumulate for Vec<T> {
    fn merge(&mut self, other: Self) {
        self.extend(other);
    }
}

/// Runs `per_path` over path indices `0..n_paths` in batches, merging the
/// batch accumulators in batch order.
fn run_paths<A, M, F>(n_paths: u64, batch_size: u64, workers: usize, make: M, per_path: F) -> Result<A>
where
    A: Accumulate,
    M: Fn() -> A + Sync,
    F: Fn(u64, &mut A) -> Result<()> + Sync,
{
    let n_batches = n_paths.div_ceil(batch_size);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::param("workers", e.to_string()))?;
    let batches: Vec<Result<A>> = pool.install(|| {
        (0..n_batches)
            .into_par_iter()
            .map(|b| {
                let mut acc = make();
                for i in b * batch_size..((b + 1) * batch_size).min(n_paths) {
                    per_path(i, &mut acc)?;
                }
                Ok(acc)
            })
            .collect()
    });
    let mut total = make();
    for b in batches {
        total.merge(b?);
    }
    Ok(total)
}

fn gradient_from(acc: VecAcc, n_paths: u64, started: Instant) -> Result<GradientEstimate> {
    let n_valid = acc.stats.first().map_or(0, RunningStats::count);
    if n_valid == 0 {
        return Err(Error::AllPathsFailed { n_paths });
    }
    let n_failed = acc.failures.total();
    Ok(GradientEstimate {
        mean: acc.stats.iter().map(RunningStats::mean).collect(),
        stderr: acc.stats.iter().map(RunningStats::stderr).collect(),
        n_valid,
        n_failed,
        failures: acc.failures,
        bias_flag: n_failed as f64 > BIAS_FLAG_FRACTION * n_paths as f64,
        wall_time: started.elapsed(),
    })
}

/// `∇P_t f(x) ≈ mean of f(X(t)) Y(t, x)` over paths with a valid weight.
pub fn bel_gradient(cfg: &EstimatorConfig) -> Result<GradientEstimate> {
    cfg.validate()?;
    let started = Instant::now();
    let trunc = cfg.resolved_truncation()?;
    let d = cfg.dim();
    let acc = run_paths(
        cfg.n_paths,
        cfg.batch_size,
        cfg.workers,
        || VecAcc::new(d),
        |i, acc| {
            let st = cfg.state(&cfg.path(&trunc, i, tags::JUMPS)?)?;
            let w = y_general(&st, cfg.q_bound);
            match w.failure {
                Some(f) => acc.failures.record(f),
                None => {
                    let fx = cfg.payoff.value(st.x.as_slice());
                    for j in 0..d {
                        acc.stats[j].push(fx * w.y_general[j]);
                    }
                }
            }
            Ok(())
        },
    )?;
    gradient_from(acc, cfg.n_paths, started)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdCoupling {
    /// Both sides of the difference use the same jump path.
    Common,
    /// The two sides use independent jump paths.
    Independent,
}

/// `h = 10^{-3} (1 + |x|)`.
pub fn default_fd_step(x0: &[f64]) -> f64 {
    1e-3 * (1.0 + x0.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Central differences `[P_t f(x + h e_i) − P_t f(x − h e_i)] / 2h`.
///
/// Paths come from their own stream tag, so the result is independent of
/// [`bel_gradient`] run with the same seed.
pub fn fd_gradient(cfg: &EstimatorConfig, h: f64, coupling: FdCoupling) -> Result<GradientEstimate> {
    cfg.validate()?;
    if !(h > 0.0) {
        return Err(Error::param("h", format!("must be positive, got {h}")));
    }
    let started = Instant::now();
    let trunc = cfg.resolved_truncation()?;
    let d = cfg.dim();
    let acc = run_paths(
        cfg.n_paths,
        cfg.batch_size,
        cfg.workers,
        || VecAcc::new(d),
        |i, acc| {
            let plus_path = cfg.path(&trunc, i, tags::FINITE_DIFFERENCE)?;
            let minus_path = match coupling {
                FdCoupling::Common => None,
                FdCoupling::Independent => Some(cfg.path(&trunc, i, tags::FINITE_DIFFERENCE_MINUS)?),
            };
            let minus_ref = minus_path.as_ref().unwrap_or(&plus_path);
            for j in 0..d {
                let (mut xp, mut xm) = (cfg.x0.clone(), cfg.x0.clone());
                xp[j] += h;
                xm[j] -= h;
                let a = evolve_state(&*cfg.drift, &xp, &plus_path, &[cfg.t], &cfg.ode)?;
                let b = evolve_state(&*cfg.drift, &xm, minus_ref, &[cfg.t], &cfg.ode)?;
                acc.stats[j].push((cfg.payoff.value(a[0].as_slice()) - cfg.payoff.value(b[0].as_slice())) / (2.0 * h));
            }
            Ok(())
        },
    )?;
    gradient_from(acc, cfg.n_paths, started)
}

/// `P_t f(x) ≈ mean of f(X(t))`.
pub fn semigroup(cfg: &EstimatorConfig) -> Result<ScalarEstimate> {
    cfg.validate()?;
    let trunc = cfg.resolved_truncation()?;
    let acc = run_paths(
        cfg.n_paths,
        cfg.batch_size,
        cfg.workers,
        || VecAcc::new(1),
        |i, acc| {
            let x = evolve_state(&*cfg.drift, &cfg.x0, &cfg.path(&trunc, i, tags::JUMPS)?, &[cfg.t], &cfg.ode)?;
            acc.stats[0].push(cfg.payoff.value(x[0].as_slice()));
            Ok(())
        },
    )?;
    Ok((&acc.stats[0]).into())
}

/// Both sides of `E D_kΦ = E Φ D_k^*1(t)` for `Φ = φ(X(t))`, with
/// `D_kΦ = Σ_j ∂_jφ(X(t)) D_kX_j(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbpCheck {
    pub left: ScalarEstimate,
    pub right: ScalarEstimate,
    /// Paired `left − right` per path.
    pub difference: ScalarEstimate,
}

impl IbpCheck {
    /// `|left − right|` in units of the standard error of the paired
    /// difference.
    pub fn z_score(&self) -> f64 {
        self.difference.mean.abs() / self.difference.stderr
    }
}

pub fn ibp_check(cfg: &EstimatorConfig, k: usize, phi: &Payoff) -> Result<IbpCheck> {
    cfg.validate()?;
    let d = cfg.dim();
    if k >= d {
        return Err(Error::param("k", format!("coordinate {k} out of range")));
    }
    phi.check_dim(d)?;
    let trunc = cfg.resolved_truncation()?;
    let acc = run_paths(
        cfg.n_paths,
        cfg.batch_size,
        cfg.workers,
        || VecAcc::new(3),
        |i, acc| {
            let st = cfg.state(&cfg.path(&trunc, i, tags::JUMPS)?)?;
            let mut grad = vec![0.0; d];
            phi.gradient(st.x.as_slice(), &mut grad);
            let left: f64 = (0..d).map(|j| grad[j] * st.malliavin[(j, k)]).sum();
            let right = phi.value(st.x.as_slice()) * st.dstar1[k];
            acc.stats[0].push(left);
            acc.stats[1].push(right);
            acc.stats[2].push(left - right);
            Ok(())
        },
    )?;
    Ok(IbpCheck { left: (&acc.stats[0]).into(), right: (&acc.stats[1]).into(), difference: (&acc.stats[2]).into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingQuantity {
    /// `E|Y(t)|`.
    MeanAbsYLevy,
    /// `E|Y(t, x)|`.
    MeanAbsYGeneral,
    /// `E|Y(t) − Y(t, x)|` on coupled paths.
    MeanAbsDiff,
    /// `P_t 1(x)`, identically 1.
    ConstPayoff,
    /// `E|D_1^*1(t) / Z^V_11(t)|`.
    DstarOverZv,
}

impl ScalingQuantity {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScalingQuantity::MeanAbsYLevy => "mean_abs_y_levy",
            ScalingQuantity::MeanAbsYGeneral => "mean_abs_y_general",
            ScalingQuantity::MeanAbsDiff => "mean_abs_diff",
            ScalingQuantity::ConstPayoff => "const_payoff",
            ScalingQuantity::DstarOverZv => "dstar_over_zv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "mean_abs_y_levy" => ScalingQuantity::MeanAbsYLevy,
            "mean_abs_y_general" => ScalingQuantity::MeanAbsYGeneral,
            "mean_abs_diff" => ScalingQuantity::MeanAbsDiff,
            "const_payoff" => ScalingQuantity::ConstPayoff,
            "dstar_over_zv" => ScalingQuantity::DstarOverZv,
            _ => return None,
        })
    }

    fn sample(&self, st: &FlowState, q_bound: f64) -> std::result::Result<f64, WeightFailure> {
        match self {
            ScalingQuantity::MeanAbsYLevy => Ok(y_levy(st)?.norm()),
            ScalingQuantity::MeanAbsYGeneral | ScalingQuantity::MeanAbsDiff => {
                let w = y_general(st, q_bound);
                if let Some(f) = w.failure {
                    return Err(f);
                }
                Ok(if *self == ScalingQuantity::MeanAbsDiff { (w.y_levy - w.y_general).norm() } else { w.y_general.norm() })
            }
            ScalingQuantity::ConstPayoff => Ok(1.0),
            ScalingQuantity::DstarOverZv => {
                if st.zv[0] > 0.0 {
                    Ok((st.dstar1[0] / st.zv[0]).abs())
                } else {
                    Err(WeightFailure::NoSmallJumps)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPoint {
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub n_valid: u64,
    pub n_failed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStudy {
    pub quantity: ScalingQuantity,
    pub points: Vec<ScalingPoint>,
    pub fit: SlopeFit,
}

/// Estimates the quantity at every horizon of `t_grid` and fits its
/// log-log slope. Path `i` uses the same stream at every horizon.
pub fn scaling_study(cfg: &EstimatorConfig, t_grid: &[f64], quantity: ScalingQuantity) -> Result<ScalingStudy> {
    if t_grid.len() < 2 {
        return Err(Error::param("t_grid", "need at least two horizons"));
    }
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let c = cfg.with_t(t);
        c.validate()?;
        let trunc = c.resolved_truncation()?;
        let acc = run_paths(
            c.n_paths,
            c.batch_size,
            c.workers,
            || VecAcc::new(1),
            |i, acc| {
                if quantity == ScalingQuantity::ConstPayoff {
                    acc.stats[0].push(1.0);
                    return Ok(());
                }
                let st = c.state(&c.path(&trunc, i, tags::JUMPS)?)?;
                match quantity.sample(&st, c.q_bound) {
                    Ok(v) => acc.stats[0].push(v),
                    Err(f) => acc.failures.record(f),
                }
                Ok(())
            },
        )?;
        let s = &acc.stats[0];
        if s.count() < 2 {
            return Err(Error::InsufficientValidPaths { t, n_valid: s.count() });
        }
        points.push(ScalingPoint {
            t,
            estimate: s.mean(),
            stderr: s.stderr(),
            n_valid: s.count(),
            n_failed: acc.failures.total(),
        });
    }
    let fit = fit_loglog(
        &points.iter().map(|p| p.t).collect::<Vec<_>>(),
        &points.iter().map(|p| p.estimate).collect::<Vec<_>>(),
        &points.iter().map(|p| p.stderr).collect::<Vec<_>>(),
    );
    Ok(ScalingStudy { quantity, points, fit })
}

/// `t_k = 2^{-k}` for `k` from `k_max` down to `k_min`, in increasing order.
pub fn dyadic_grid(k_min: i32, k_max: i32) -> Vec<f64> {
    (k_min..=k_max).rev().map(|k| 2f64.powi(-k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    /// `E[(Z^V_jj)^{-q} | Z^V_jj > 0]`.
    pub estimate: ScalarEstimate,
    /// Paths with `Z^V_jj = 0`.
    pub n_zero: u64,
}

/// Monte Carlo of `(Z^V_jj(t))^{-q}` over paths where it is positive.
pub fn zv_negative_moment(cfg: &EstimatorConfig, q: f64, j: usize) -> Result<MomentEstimate> {
    cfg.validate()?;
    if j >= cfg.dim() {
        return Err(Error::param("j", format!("coordinate {j} out of range")));
    }
    let trunc = cfg.resolved_truncation()?;
    let acc = run_paths(
        cfg.n_paths,
        cfg.batch_size,
        cfg.workers,
        || VecAcc::new(1),
        |i, acc| {
            let path = cfg.path(&trunc, i, tags::JUMPS)?;
            let zv: f64 =
                path.events.iter().filter(|e| e.coord == j && e.time <= cfg.t).map(|e| v_weight(e.time, e.size, cfg.field)).sum();
            if zv > 0.0 {
                acc.stats[0].push(zv.powf(-q));
            } else {
                acc.failures.record(WeightFailure::NoSmallJumps);
            }
            Ok(())
        },
    )?;
    Ok(MomentEstimate { estimate: (&acc.stats[0]).into(), n_zero: acc.failures.no_small_jumps })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightDiagnostics {
    /// `‖Q(t, x)‖` of every path with positive `Z^V`, in path order.
    pub q_norms: Vec<f64>,
    pub failures: FailureCounts,
}

/// Collects the invertibility diagnostic `‖Q(t, x)‖` over paths.
pub fn weight_diagnostics(cfg: &EstimatorConfig) -> Result<WeightDiagnostics> {
    cfg.validate()?;
    let trunc = cfg.resolved_truncation()?;
    let rows: Vec<std::result::Result<f64, WeightFailure>> =
        run_paths(cfg.n_paths, cfg.batch_size, cfg.workers, Vec::new, |i, acc: &mut Vec<_>| {
            let st = cfg.state(&cfg.path(&trunc, i, tags::JUMPS)?)?;
            let w = y_general(&st, cfg.q_bound);
            acc.push(match w.failure {
                Some(WeightFailure::NoSmallJumps) => Err(WeightFailure::NoSmallJumps),
                Some(f @ WeightFailure::SingularM) => Err(f),
                _ => Ok(w.q_norm),
            });
            Ok(())
        })?;
    let mut failures = FailureCounts::default();
    let mut q_norms = Vec::with_capacity(rows.len());
    for r in rows {
        match r {
            Ok(q) => {
                if q > cfg.q_bound {
                    failures.record(WeightFailure::QBoundViolated);
                }
                q_norms.push(q);
            }
            Err(f) => failures.record(f),
        }
    }
    Ok(WeightDiagnostics { q_norms, failures })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathwiseStudy {
    pub eps: Vec<f64>,
    /// Mean over paths of `|X^ε(t) − X(t) − ε D_kX(t)|` for each `ε`.
    pub mean_residual: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `mean_residual[i] / mean_residual[i + 1]`.
    pub ratios: Vec<f64>,
    /// Smallest and largest per-path ratio between consecutive `ε`, over
    /// paths whose residual is above round-off.
    pub per_path_ratio_range: (f64, f64),
}

/// Pathwise residuals of the Malliavin column `D_kX(t)` on `cfg.n_paths`
/// paths for each perturbation size in `eps`.
pub fn pathwise_study(cfg: &EstimatorConfig, k: usize, eps: &[f64]) -> Result<PathwiseStudy> {
    cfg.validate()?;
    if eps.len() < 2 {
        return Err(Error::param("eps", "need at least two perturbation sizes"));
    }
    let trunc = cfg.resolved_truncation()?;
    let rows: Vec<Vec<f64>> = run_paths(cfg.n_paths, cfg.batch_size, cfg.workers, Vec::new, |i, acc: &mut Vec<Vec<f64>>| {
        let path = cfg.path(&trunc, i, tags::JUMPS)?;
        let mut r = Vec::with_capacity(eps.len());
        for &e in eps {
            r.push(
                pathwise_derivative_residual(&*cfg.drift, &cfg.x0, &path, cfg.t, k, e, cfg.field, &cfg.models, &cfg.ode)?
                    .absolute,
            );
        }
        acc.push(r);
        Ok(())
    })?;
    let mut stats = vec![RunningStats::new(); eps.len()];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in &rows {
        for (s, v) in stats.iter_mut().zip(r) {
            s.push(*v);
        }
        for w in r.windows(2) {
            if w[1] > 1e-13 {
                lo = lo.min(w[0] / w[1]);
                hi = hi.max(w[0] / w[1]);
            }
        }
    }
    let mean_residual: Vec<f64> = stats.iter().map(RunningStats::mean).collect();
    Ok(PathwiseStudy {
        eps: eps.to_vec(),
        ratios: mean_residual.windows(2).map(|w| w[0] / w[1]).collect(),
        stderr: stats.iter().map(RunningStats::stderr).collect(),
        mean_residual,
        per_path_ratio_range: (lo, hi),
    })
}
