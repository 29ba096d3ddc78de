//! Compound-Poisson realization of the truncated jump measures, and the
//! jump-size perturbation that defines the Malliavin derivative.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::field::{v_weight, FieldParams};
use crate::levy_model::LevyCoordinateModel;
use crate::rng::RngSpec;
use crate::truncation::{Truncation, TruncationProfile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    /// Zero-based noise coordinate.
    pub coord: usize,
    pub size: f64,
}

/// All jumps of the `d` noise coordinates on `(0, horizon]`, sorted by
/// `(time, coord)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath {
    pub horizon: f64,
    pub truncation: Truncation,
    pub dim: usize,
    pub events: Vec<JumpEvent>,
    pub seed: Option<RngSpec>,
    /// Constant drift per coordinate compensating asymmetric truncated jumps.
    pub drift_correction: Vec<f64>,
}

impl JumpPath {
    /// A path with explicitly given events, sorted on construction.
    pub fn from_events(horizon: f64, truncation: Truncation, dim: usize, mut events: Vec<JumpEvent>) -> Result<Self> {
        for e in &events {
            if !(e.time > 0.0 && e.time <= horizon) || e.coord >= dim || e.size == 0.0 || !e.size.is_finite() {
                return Err(Error::param("events", format!("invalid event {e:?} for horizon {horizon}, dim {dim}")));
            }
        }
        sort_events(&mut events);
        Ok(JumpPath { horizon, truncation, dim, events, seed: None, drift_correction: vec![0.0; dim] })
    }

    pub fn eps_trunc(&self) -> f64 {
        self.truncation.level
    }

    /// One event per line as `time,coord,size`, after `# key = value` header
    /// lines carrying the horizon, truncation and seed.
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# horizon = {}", self.horizon);
        let _ = writeln!(s, "# eps_trunc = {}", self.truncation.level);
        let profile = match self.truncation.profile {
            TruncationProfile::Hard => "hard",
            TruncationProfile::Smooth => "smooth",
        };
        let _ = writeln!(s, "# profile = {profile}");
        let _ = writeln!(s, "# dim = {}", self.dim);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "# seed = {},{},{}", seed.master_seed, seed.path_index, seed.tag);
        }
        s.push_str("time,coord,size\n");
        for e in &self.events {
            let _ = writeln!(s, "{},{},{}", e.time, e.coord, e.size);
        }
        s
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::param("path dump", msg);
        let (mut horizon, mut level, mut profile, mut dim, mut seed) = (None, None, TruncationProfile::Hard, None, None);
        let mut events = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(header) = line.strip_prefix('#') {
                let (key, value) = header.split_once('=').ok_or_else(|| bad(format!("bad header `{line}`")))?;
                let value = value.trim();
                let num = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("{v}: {e}")));
                match key.trim() {
                    "horizon" => horizon = Some(num(value)?),
                    "eps_trunc" => level = Some(num(value)?),
                    "profile" => {
                        profile = match value {
                            "hard" => TruncationProfile::Hard,
                            "smooth" => TruncationProfile::Smooth,
                            other => return Err(bad(format!("unknown profile `{other}`"))),
                        }
                    }
                    "dim" => dim = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                    "seed" => {
                        let parts: Vec<u64> = value
                            .split(',')
                            .map(|p| p.trim().parse::<u64>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|e| bad(e.to_string()))?;
                        if parts.len() != 3 {
                            return Err(bad("seed needs master,path,tag".into()));
                        }
                        seed = Some(RngSpec::new(parts[0], parts[1], parts[2]));
                    }
                    other => return Err(bad(format!("unknown header key `{other}`"))),
                }
                continue;
            }
            if line == "time,coord,size" {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 columns in `{line}`")));
            }
            events.push(JumpEvent {
                time: fields[0].parse().map_err(|e| bad(format!("{line}: {e}")))?,
                coord: fields[1].parse().map_err(|e| bad(format!("{line}: {e}")))?,
                size: fields[2].parse().map_err(|e| bad(format!("{line}: {e}")))?,
            });
        }
        let horizon = horizon.ok_or_else(|| bad("missing horizon".into()))?;
        let level = level.ok_or_else(|| bad("missing eps_trunc".into()))?;
        let dim = dim.ok_or_else(|| bad("missing dim".into()))?;
        let mut path = JumpPath::from_events(horizon, Truncation::new(level, profile)?, dim, events)?;
        path.seed = seed;
        Ok(path)
    }
}

fn sort_events(events: &mut [JumpEvent]) {
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.coord.cmp(&b.coord)));
}

/// Draws the jumps of every coordinate with magnitude above the truncation.
///
/// Per coordinate, in order: the Poisson count with mean
/// `T·m{|ξ| ≥ ε}`, then per proposal a time, a magnitude draw, a sign draw
/// and, for the smooth profile, an acceptance draw.
pub fn simulate_path(models: &[LevyCoordinateModel], horizon: f64, truncation: &Truncation, spec: RngSpec) -> Result<JumpPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param("horizon", format!("must be positive, got {horizon}")));
    }
    let mut rng = spec.rng();
    let mut events = Vec::new();
    let mut drift_correction = Vec::with_capacity(models.len());
    for (j, m) in models.iter().enumerate() {
        let drift = m.compensator_drift().ok_or_else(|| {
            Error::UnsupportedMeasure(format!("coordinate {j} is asymmetric and no compensator drift was supplied"))
        })?;
        drift_correction.push(drift);
        let lambda = horizon * m.tail_mass(truncation.level)?;
        let n = if lambda > 0.0 {
            Poisson::new(lambda).map_err(|e| Error::param("intensity", e.to_string()))?.sample(&mut rng) as u64
        } else {
            0
        };
        for _ in 0..n {
            let time = horizon * (1.0 - rng.random::<f64>());
            let u: f64 = rng.random();
            let sign: f64 = rng.random();
            let size = m.sample_jump_size(truncation.level, u, sign)?;
            if truncation.profile == TruncationProfile::Smooth {
                let keep: f64 = rng.random();
                if keep >= truncation.acceptance(size) {
                    continue;
                }
            }
            events.push(JumpEvent { time, coord: j, size });
        }
    }
    sort_events(&mut events);
    Ok(JumpPath { horizon, truncation: *truncation, dim: models.len(), events, seed: Some(spec), drift_correction })
}

/// Moves every coordinate-`k` jump `(s, ξ)` to `(s, ξ + eps·V(s, ξ))`.
pub fn perturb_path(path: &JumpPath, k: usize, eps: f64, p: FieldParams) -> JumpPath {
    let mut out = path.clone();
    for e in out.events.iter_mut().filter(|e| e.coord == k) {
        e.size += eps * v_weight(e.time, e.size, p);
    }
    out
}

/// `Z_j(t)`: the sum of coordinate-`j` jumps at times `s ≤ t`.
pub fn increment(path: &JumpPath, t: f64, j: usize) -> f64 {
    path.events.iter().take_while(|e| e.time <= t).filter(|e| e.coord == j).map(|e| e.size).sum::<f64>()
        + path.drift_correction.get(j).copied().unwrap_or(0.0) * t
}
