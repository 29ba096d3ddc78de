//! Truncation of the small jumps.
//!
//! Jumps of magnitude below the truncation level `ε` are dropped. With the
//! smooth profile, a proposed jump of magnitude `r ∈ [ε, 2ε)` is kept with
//! probability `χ(r) = u²(3 − 2u)`, `u = (r − ε)/ε`. The simulated density
//! `ρχ` is then `C¹` and vanishes at `±ε`, so the integration by parts
//! behind the gradient weights holds exactly for the simulated model.

use crate::error::{Error, Result};
use crate::levy_model::{LevyCoordinateModel, LevyMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationProfile {
    /// Keep every jump with `|ξ| ≥ ε`.
    Hard,
    /// Thin jumps on `[ε, 2ε)` with a `C¹` acceptance ramp.
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub level: f64,
    pub profile: TruncationProfile,
}

impl Truncation {
    pub fn new(level: f64, profile: TruncationProfile) -> Result<Self> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::param("eps_trunc", format!("must be positive, got {level}")));
        }
        Ok(Truncation { level, profile })
    }

    pub fn hard(level: f64) -> Result<Self> {
        Self::new(level, TruncationProfile::Hard)
    }

    pub fn smooth(level: f64) -> Result<Self> {
        Self::new(level, TruncationProfile::Smooth)
    }

    /// Probability that a proposed jump of magnitude `r ≥ ε` is kept.
    #[inline]
    pub fn acceptance(&self, r: f64) -> f64 {
        match self.profile {
            TruncationProfile::Hard => 1.0,
            TruncationProfile::Smooth => {
                let u = (r.abs() - self.level) / self.level;
                if u >= 1.0 {
                    1.0
                } else if u <= 0.0 {
                    0.0
                } else {
                    u * u * (3.0 - 2.0 * u)
                }
            }
        }
    }

    /// `χ'(ξ)/χ(ξ)` of the acceptance profile, zero where it is flat.
    #[inline]
    pub fn log_acceptance_derivative(&self, xi: f64) -> f64 {
        match self.profile {
            TruncationProfile::Hard => 0.0,
            TruncationProfile::Smooth => {
                let u = (xi.abs() - self.level) / self.level;
                if u >= 1.0 || u <= 0.0 {
                    0.0
                } else {
                    xi.signum() * 6.0 * (1.0 - u) / (self.level * u * (3.0 - 2.0 * u))
                }
            }
        }
    }
}

/// How the truncation level is chosen for a given horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationSpec {
    Fixed {
        level: f64,
        profile: TruncationProfile,
    },
    /// The level at which `T · m{|ξ| ≥ ε}` equals the given expected number
    /// of proposed jumps per coordinate. For stable noise `ε ∝ T^{1/α}`, so
    /// the truncated model is exactly self-similar across horizons.
    ExpectedJumps {
        count: f64,
        profile: TruncationProfile,
    },
}

impl Default for TruncationSpec {
    fn default() -> Self {
        TruncationSpec::ExpectedJumps { count: 64.0, profile: TruncationProfile::Smooth }
    }
}

const MIN_LEVEL_FRACTION: f64 = 1e-15;

impl TruncationSpec {
    /// The truncation for horizon `t`, the smallest level over all
    /// coordinates.
    pub fn resolve(&self, models: &[LevyCoordinateModel], t: f64) -> Result<Truncation> {
        match *self {
            TruncationSpec::Fixed { level, profile } => Truncation::new(level, profile),
            TruncationSpec::ExpectedJumps { count, profile } => {
                if !(count > 0.0) || !(t > 0.0) {
                    return Err(Error::param("expected_jumps", format!("count {count} and horizon {t} must be positive")));
                }
                let mut level = f64::INFINITY;
                for m in models {
                    level = level.min(level_for_count(m, count / t)?);
                }
                Truncation::new(level, profile)
            }
        }
    }
}

/// `ε` with `m{|ξ| ≥ ε} = mass`.
fn level_for_count(m: &LevyCoordinateModel, mass: f64) -> Result<f64> {
    match m.measure() {
        LevyMeasure::Stable(s) => Ok((2.0 * s.scale() / (s.alpha() * mass)).powf(1.0 / s.alpha())),
        LevyMeasure::Tabulated(_) => {
            let (mut lo, mut hi) = ((m.delta() * MIN_LEVEL_FRACTION).ln(), m.delta().ln());
            if m.tail_mass(lo.exp())? < mass {
                return Ok(lo.exp());
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if m.tail_mass(mid.exp())? > mass {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(hi.exp())
        }
    }
}
