//! One-dimensional Lévy measures: symmetric α-stable and user-tabulated
//! densities, truncated jump sampling, and numerical checks of the
//! integrability conditions the gradient formula relies on.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_to_origin, Verdict};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `(u, sign_draw) -> ξ` with `|ξ| ≥` the support radius.
pub type LargeJumpFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Symmetric α-stable Lévy measure with density `scale·|ξ|^{-1-α}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableMeasure {
    alpha: f64,
    scale: f64,
}

impl StableMeasure {
    pub fn new(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::param("alpha", format!("must lie in (0, 2), got {alpha}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::param("scale", format!("must be positive, got {scale}")));
        }
        Ok(StableMeasure { alpha, scale })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    fn density(&self, xi: f64) -> f64 {
        self.scale * xi.abs().powf(-1.0 - self.alpha)
    }

    #[inline]
    fn tail_mass(&self, eps: f64) -> f64 {
        2.0 * self.scale * eps.powf(-self.alpha) / self.alpha
    }
}

/// Law of the jumps of magnitude at least the support radius of a
/// [`TabulatedMeasure`].
#[derive(Clone)]
pub enum LargeJumpLaw {
    /// The measure has no mass outside the support radius.
    None,
    /// `P(|ξ| ≥ r) = (r/R)^{-index}` for `r ≥ R`, positive with the given
    /// probability.
    Pareto {
        index: f64,
        positive_fraction: f64,
    },
    Custom(LargeJumpFn),
}

impl fmt::Debug for LargeJumpLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LargeJumpLaw::None => write!(f, "None"),
            LargeJumpLaw::Pareto { index, positive_fraction } => {
                write!(f, "Pareto {{ index: {index}, positive_fraction: {positive_fraction} }}")
            }
            LargeJumpLaw::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A Lévy measure described by callables on `(-R, R) \ {0}`.
///
/// `tail(ε)` is the total mass `m{|ξ| ≥ ε}` including jumps beyond `R`, so
/// `tail(R)` is the mass handled by the large-jump law.
#[derive(Clone)]
pub struct TabulatedMeasure {
    radius: f64,
    density: ScalarFn,
    log_deriv: ScalarFn,
    tail: ScalarFn,
    large_jumps: LargeJumpLaw,
    symmetric: bool,
    rho_index: f64,
    compensator_drift: Option<f64>,
}

impl fmt::Debug for TabulatedMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TabulatedMeasure")
            .field("radius", &self.radius)
            .field("symmetric", &self.symmetric)
            .field("rho_index", &self.rho_index)
            .field("large_jumps", &self.large_jumps)
            .field("compensator_drift", &self.compensator_drift)
            .finish_non_exhaustive()
    }
}

const VALIDATION_POINTS: usize = 64;

impl TabulatedMeasure {
    /// Builds and validates a tabulated measure.
    ///
    /// Validation runs on a log-spaced grid of `(0, R]`: the density must be
    /// nonnegative, the tail finite and nonincreasing, and a symmetric
    /// measure must have an even density.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        radius: f64,
        density: ScalarFn,
        log_deriv: ScalarFn,
        tail: ScalarFn,
        large_jumps: LargeJumpLaw,
        symmetric: bool,
        rho_index: f64,
        compensator_drift: Option<f64>,
    ) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param("delta", format!("support radius must be positive, got {radius}")));
        }
        if !(rho_index > 0.0) {
            return Err(Error::param("rho_index", format!("must be positive, got {rho_index}")));
        }
        if let LargeJumpLaw::Pareto { index, positive_fraction } = large_jumps {
            if !(index > 0.0) || !(0.0..=1.0).contains(&positive_fraction) {
                return Err(Error::param(
                    "large_jumps",
                    format!("Pareto law needs index > 0 and fraction in [0,1], got {index}, {positive_fraction}"),
                ));
            }
        }
        let m = TabulatedMeasure {
            radius,
            density,
            log_deriv,
            tail,
            large_jumps,
            symmetric,
            rho_index,
            compensator_drift: if symmetric { Some(0.0) } else { compensator_drift },
        };
        let mut previous_tail = f64::INFINITY;
        for i in 0..VALIDATION_POINTS {
            let r = radius * 2f64.powf(-40.0 * i as f64 / (VALIDATION_POINTS - 1) as f64) * (1.0 - 1e-9);
            let (p, n) = ((m.density)(r), (m.density)(-r));
            if !(p >= 0.0 && n >= 0.0 && p.is_finite() && n.is_finite()) {
                return Err(Error::Table(format!("density must be finite and nonnegative, got {p} at ±{r}")));
            }
            if symmetric && (p - n).abs() > 1e-12 * p.abs().max(n.abs()) {
                return Err(Error::Table(format!("flagged symmetric but density({r}) = {p} != density(-{r}) = {n}")));
            }
            // the grid runs from large r to small r, so the tail must grow
            let t = (m.tail)(r);
            if !t.is_finite() || t < 0.0 {
                return Err(Error::Table(format!("tail mass must be finite, got {t} at {r}")));
            }
            if i > 0 && t < previous_tail * (1.0 - 1e-12) && previous_tail.is_finite() {
                return Err(Error::Table(format!("tail mass must be nonincreasing, violated at {r}")));
            }
            previous_tail = t;
        }
        Ok(m)
    }

    /// The tabulated counterpart of a stable measure, used as a reference.
    pub fn from_stable(stable: StableMeasure, radius: f64) -> Result<Self> {
        let (a, c) = (stable.alpha, stable.scale);
        TabulatedMeasure::new(
            radius,
            Arc::new(move |x: f64| c * x.abs().powf(-1.0 - a)),
            Arc::new(move |x: f64| -(1.0 + a) / x),
            Arc::new(move |e: f64| 2.0 * c * e.powf(-a) / a),
            LargeJumpLaw::Pareto { index: a, positive_fraction: 0.5 },
            true,
            a,
            None,
        )
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn rho_index(&self) -> f64 {
        self.rho_index
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn large_jump(&self, u: f64, sign_draw: f64) -> Result<f64> {
        match &self.large_jumps {
            LargeJumpLaw::None => {
                Err(Error::UnsupportedMeasure("tail mass beyond the support radius but no large-jump sampler".into()))
            }
            LargeJumpLaw::Pareto { index, positive_fraction } => {
                let r = self.radius * (1.0 - u).powf(-1.0 / index);
                Ok(if sign_draw < 1.0 - positive_fraction { -r } else { r })
            }
            LargeJumpLaw::Custom(f) => Ok(f(u, sign_draw)),
        }
    }

    /// Magnitude `r` in `[eps, R)` with `tail(r) = target`, by bisection in
    /// `ln r`.
    fn invert_tail(&self, eps: f64, target: f64) -> f64 {
        let (mut lo, mut hi) = (eps.ln(), self.radius.ln());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if (self.tail)(mid.exp()) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    }
}

#[derive(Debug, Clone)]
pub enum LevyMeasure {
    Stable(StableMeasure),
    Tabulated(TabulatedMeasure),
}

/// The Lévy measure of one noise coordinate together with the radius `δ` of
/// the region where its density is used.
#[derive(Debug, Clone)]
pub struct LevyCoordinateModel {
    measure: LevyMeasure,
    delta: f64,
}

impl LevyCoordinateModel {
    pub fn new(measure: LevyMeasure, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::param("delta", format!("must be positive, got {delta}")));
        }
        if let LevyMeasure::Tabulated(t) = &measure {
            if delta > t.radius {
                return Err(Error::param("delta", format!("{delta} exceeds the tabulated support radius {}", t.radius)));
            }
        }
        Ok(LevyCoordinateModel { measure, delta })
    }

    pub fn stable(alpha: f64, scale: f64, delta: f64) -> Result<Self> {
        Self::new(LevyMeasure::Stable(StableMeasure::new(alpha, scale)?), delta)
    }

    pub fn measure(&self) -> &LevyMeasure {
        &self.measure
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn check_domain(&self, what: &'static str, xi: f64) -> Result<()> {
        if xi != 0.0 && xi.abs() < self.delta {
            Ok(())
        } else {
            Err(Error::Domain { what, value: xi, domain: format!("(-{d}, {d}) \\ {{0}}", d = self.delta) })
        }
    }

    /// `ρ(ξ)` for `0 < |ξ| < δ`.
    pub fn density(&self, xi: f64) -> Result<f64> {
        self.check_domain("xi", xi)?;
        Ok(self.density_unchecked(xi))
    }

    #[inline]
    pub(crate) fn density_unchecked(&self, xi: f64) -> f64 {
        match &self.measure {
            LevyMeasure::Stable(s) => s.density(xi),
            LevyMeasure::Tabulated(t) => (t.density)(xi),
        }
    }

    /// `ρ'(ξ)/ρ(ξ)` for `0 < |ξ| < δ`.
    pub fn log_density_derivative(&self, xi: f64) -> Result<f64> {
        self.check_domain("xi", xi)?;
        Ok(self.log_density_derivative_unchecked(xi))
    }

    #[inline]
    pub(crate) fn log_density_derivative_unchecked(&self, xi: f64) -> f64 {
        match &self.measure {
            LevyMeasure::Stable(s) => -(1.0 + s.alpha) / xi,
            LevyMeasure::Tabulated(t) => (t.log_deriv)(xi),
        }
    }

    /// Total mass `m{|ξ| ≥ eps}`.
    pub fn tail_mass(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::Domain { what: "eps", value: eps, domain: "(0, inf)".into() });
        }
        Ok(match &self.measure {
            LevyMeasure::Stable(s) => s.tail_mass(eps),
            LevyMeasure::Tabulated(t) if eps >= t.radius => (t.tail)(t.radius),
            LevyMeasure::Tabulated(t) => (t.tail)(eps),
        })
    }

    /// Inverse-CDF draw from `m` restricted to `|ξ| ≥ eps_trunc`.
    ///
    /// `u` selects the magnitude, largest magnitudes as `u → 1`, and
    /// `sign_draw` the sign.
    pub fn sample_jump_size(&self, eps_trunc: f64, u: f64, sign_draw: f64) -> Result<f64> {
        if !(eps_trunc > 0.0) {
            return Err(Error::Domain { what: "eps_trunc", value: eps_trunc, domain: "(0, inf)".into() });
        }
        match &self.measure {
            LevyMeasure::Stable(s) => {
                let r = eps_trunc * (1.0 - u).powf(-1.0 / s.alpha);
                Ok(if sign_draw < 0.5 { -r } else { r })
            }
            LevyMeasure::Tabulated(t) => {
                if eps_trunc >= t.radius {
                    return Err(Error::Domain { what: "eps_trunc", value: eps_trunc, domain: format!("(0, {})", t.radius) });
                }
                let total = self.tail_mass(eps_trunc)?;
                let large = (t.tail)(t.radius);
                let target = (1.0 - u) * total;
                if target <= large {
                    if large <= 0.0 {
                        return Err(Error::UnsupportedMeasure("measure has no mass above eps_trunc".into()));
                    }
                    let u_large = (1.0 - target / large).clamp(0.0, 1.0);
                    return t.large_jump(u_large, sign_draw);
                }
                let r = t.invert_tail(eps_trunc, target).max(eps_trunc);
                let negative = if t.symmetric {
                    0.5
                } else {
                    let (p, n) = ((t.density)(r), (t.density)(-r));
                    if p + n > 0.0 {
                        n / (p + n)
                    } else {
                        0.5
                    }
                };
                Ok(if sign_draw < negative { -r } else { r })
            }
        }
    }

    /// Small-jump index `ρ` of the tail-growth assumption.
    pub fn rho_index(&self) -> f64 {
        match &self.measure {
            LevyMeasure::Stable(s) => s.alpha,
            LevyMeasure::Tabulated(t) => t.rho_index,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.measure {
            LevyMeasure::Stable(_) => true,
            LevyMeasure::Tabulated(t) => t.symmetric,
        }
    }

    /// Constant drift compensating the truncated jumps; zero when symmetric
    /// and `None` when an asymmetric measure did not supply it.
    pub fn compensator_drift(&self) -> Option<f64> {
        match &self.measure {
            LevyMeasure::Stable(_) => Some(0.0),
            LevyMeasure::Tabulated(t) => t.compensator_drift,
        }
    }

    /// `∫_{|ξ|<eps} ξ² m(dξ)`, the variance carried by dropped jumps.
    pub fn truncated_second_moment(&self, eps: f64) -> Result<f64> {
        match &self.measure {
            LevyMeasure::Stable(s) => Ok(2.0 * s.scale * eps.powf(2.0 - s.alpha) / (2.0 - s.alpha)),
            LevyMeasure::Tabulated(t) => {
                let b = eps.min(t.radius);
                let pos = integrate_to_origin(|x| x * x * (t.density)(x), b, 1e-10)?;
                let neg = integrate_to_origin(|x| x * x * (t.density)(-x), b, 1e-10)?;
                if pos.verdict != Verdict::Finite || neg.verdict != Verdict::Finite {
                    return Err(Error::Divergence("second moment of the small jumps".into()));
                }
                Ok(pos.value + neg.value)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureParams {
    pub delta: f64,
    pub kappa: f64,
    pub rho_index: f64,
}

impl MeasureParams {
    pub fn new(delta: f64, kappa: f64, rho_index: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::param("delta", format!("must be positive, got {delta}")));
        }
        if !(kappa > 1.0) {
            return Err(Error::param("kappa", format!("must exceed 1, got {kappa}")));
        }
        if !(rho_index > 0.0) {
            return Err(Error::param("rho_index", format!("must be positive, got {rho_index}")));
        }
        Ok(MeasureParams { delta, kappa, rho_index })
    }

    /// Parameters for a stable measure with the default `κ = 1 + 3α/4`.
    pub fn stable_default(alpha: f64, delta: f64) -> Result<Self> {
        Self::new(delta, default_kappa(alpha), alpha)
    }

    /// Whether `κ > 1 + α/2`, the regime needed for sharp stable scaling.
    pub fn sharp_regime(&self) -> bool {
        self.kappa > 1.0 + self.rho_index / 2.0
    }
}

/// `κ = 1 + 3α/4`.
pub fn default_kappa(alpha: f64) -> f64 {
    1.0 + 0.75 * alpha
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxyVerdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralCheck {
    pub value: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxySequence {
    /// `(argument, value)` pairs from coarse to fine.
    pub points: Vec<(f64, f64)>,
    pub verdict: ProxyVerdict,
}

/// Numerical verdicts on the integrability and growth conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// `∫ |ξ|^κ ρ`.
    pub moment_kappa: IntegralCheck,
    /// `∫ |ξ|^{2κ} (ρ'/ρ)² ρ`.
    pub score_moment: IntegralCheck,
    /// `∫ |ξ|^{2κ-2} ρ`.
    pub moment_2kappa_minus_2: IntegralCheck,
    /// Proxy of `liminf ε^ρ m{|ξ| ≥ ε} > 0` on `ε = δ 2^{-k}`.
    pub tail_growth: ProxySequence,
    /// Proxy of the small-time bound `limsup s^{(2-2κ)/ρ+1} ∫_{|ξ|<s^{1/ρ}} [...]`
    /// on `s = 2^{-k}`.
    pub small_ball: ProxySequence,
    pub sharp_regime: bool,
}

impl AssumptionReport {
    pub fn all_finite(&self) -> bool {
        [self.moment_kappa, self.score_moment, self.moment_2kappa_minus_2].iter().all(|c| c.verdict == Verdict::Finite)
    }
}

fn two_sided<F: Fn(f64) -> f64>(f: F, b: f64) -> Result<IntegralCheck> {
    let pos = integrate_to_origin(&f, b, 1e-10)?;
    let neg = integrate_to_origin(|x| f(-x), b, 1e-10)?;
    let verdict = match (pos.verdict, neg.verdict) {
        (Verdict::Infinite, _) | (_, Verdict::Infinite) => Verdict::Infinite,
        (Verdict::Finite, Verdict::Finite) => Verdict::Finite,
        _ => Verdict::Inconclusive,
    };
    let value = if verdict == Verdict::Infinite { f64::INFINITY } else { pos.value + neg.value };
    Ok(IntegralCheck { value, verdict })
}

const PROXY_LEVELS: usize = 40;

fn trend_verdict(points: &[(f64, f64)], bounded_below: bool) -> ProxyVerdict {
    let mid = points[points.len() / 2].1;
    let fine = points[points.len() - 1].1;
    if !mid.is_finite() || !fine.is_finite() || mid <= 0.0 {
        return if bounded_below && fine.is_infinite() { ProxyVerdict::Holds } else { ProxyVerdict::Inconclusive };
    }
    let ratio = fine / mid;
    if bounded_below {
        // liminf must stay away from zero
        if ratio >= 0.5 {
            ProxyVerdict::Holds
        } else if ratio < 0.1 {
            ProxyVerdict::Fails
        } else {
            ProxyVerdict::Inconclusive
        }
    } else if ratio <= 1.5 {
        ProxyVerdict::Holds
    } else if ratio > 10.0 {
        ProxyVerdict::Fails
    } else {
        ProxyVerdict::Inconclusive
    }
}

/// Evaluates the integrability conditions (to a finite/infinite verdict by
/// dyadic extrapolation) and the two limit conditions (as finite-grid
/// proxies, which can only suggest the limit).
pub fn check_assumptions(m: &LevyCoordinateModel, params: MeasureParams) -> Result<AssumptionReport> {
    let (delta, kappa) = (params.delta.min(m.delta), params.kappa);
    let rho = |x: f64| m.density_unchecked(x);
    let ell = |x: f64| m.log_density_derivative_unchecked(x);

    let moment_kappa = two_sided(|x: f64| x.abs().powf(kappa) * rho(x), delta)?;
    let score_moment = two_sided(
        |x: f64| {
            let l = ell(x);
            x.abs().powf(2.0 * kappa) * l * l * rho(x)
        },
        delta,
    )?;
    let moment_2kappa_minus_2 = two_sided(|x: f64| x.abs().powf(2.0 * kappa - 2.0) * rho(x), delta)?;

    let r = params.rho_index;
    let mut tail_points = Vec::with_capacity(PROXY_LEVELS);
    for k in 0..PROXY_LEVELS {
        let eps = params.delta * 2f64.powi(-(k as i32));
        tail_points.push((eps, eps.powf(r) * m.tail_mass(eps)?));
    }
    let tail_growth = ProxySequence { verdict: trend_verdict(&tail_points, true), points: tail_points };

    let mut ball_points = Vec::new();
    for k in 1..=PROXY_LEVELS {
        let s = 2f64.powi(-(k as i32));
        let radius = s.powf(1.0 / r);
        if radius >= delta {
            continue;
        }
        let inner = two_sided(
            |x: f64| {
                let l = ell(x);
                let a = x.abs();
                (a.powf(2.0 * kappa) * l * l + a.powf(2.0 * kappa - 2.0)) * rho(x)
            },
            radius,
        )?;
        ball_points.push((s, s.powf((2.0 - 2.0 * kappa) / r + 1.0) * inner.value));
    }
    let small_ball = if ball_points.len() >= 4 {
        ProxySequence { verdict: trend_verdict(&ball_points, false), points: ball_points }
    } else {
        ProxySequence { points: ball_points, verdict: ProxyVerdict::Inconclusive }
    };

    Ok(AssumptionReport {
        moment_kappa,
        score_moment,
        moment_2kappa_minus_2,
        tail_growth,
        small_ball,
        sharp_regime: params.sharp_regime(),
    })
}
