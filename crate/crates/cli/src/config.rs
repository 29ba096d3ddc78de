//! Experiment configuration files.
//!
//! A config is a TOML document with the sections below; unknown keys are
//! rejected. Every section except `[noise]` and `[run]` is optional.
//!
//! ```toml
//! experiment = "gradient"        # optional; must match the subcommand
//!
//! [noise]
//! dim = 2
//! kind = "stable"                # or "table"
//! alpha = 1.5
//! scale = 1.0
//! # table = "tables/stable-1.5.csv"   (kind = "table"; relative to the config)
//! delta = 0.5
//!
//! [field]
//! kappa = 2.125                  # default 1 + 3ρ/4
//!
//! [truncation]
//! mode = "expected_jumps"        # or "fixed"
//! count = 64                     # expected small jumps per coordinate
//! # level = 1e-4                 (mode = "fixed")
//! profile = "smooth"             # or "hard"
//!
//! [drift]
//! kind = "tanh"                  # zero | linear | tanh
//! # matrix = [-0.6, 0.2, 0.1, -0.6]   (row-major; default is the shipped matrix)
//!
//! [payoff]
//! kind = "sin"                   # one | sin | gaussian | tanh
//! # k = [1.0, 1.0]               (sin; default all ones)
//! # index = 0                    (tanh)
//!
//! [run]
//! t = 0.25
//! x0 = [0.3, -0.2]
//! n_paths = 100000
//! batch_size = 4096
//! seed = 1
//! workers = 1
//!
//! [ode]
//! method = "rk4"                 # or "rk45"
//! max_step_fraction = 0.015625
//! min_substeps = 1
//! tolerance = 1e-10
//! ```
//!
//! Experiment sections (`[gradient]`, `[ibp_check]`, `[scaling_study]`,
//! `[negative_moments]`, `[pathwise_check]`) hold the checks of their
//! subcommand; see the field docs below.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use levy_bel::drift::{Drift, LinearDrift, TanhDrift, ZeroDrift};
use levy_bel::estimator::{EstimatorConfig, FdCoupling, Payoff, ScalingQuantity};
use levy_bel::levy_model::default_kappa;
use levy_bel::{FieldParams, LevyCoordinateModel, MeasureTable, OdeMethod, OdeOptions, TruncationProfile, TruncationSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub payoff: PayoffConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub ode: OdeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<GradientConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ibp_check: Option<IbpConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling_study: Option<ScalingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_moments: Option<MomentsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pathwise_check: Option<PathwiseConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Stable,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub dim: usize,
    pub kind: NoiseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default = "half")]
    pub delta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationMode {
    ExpectedJumps,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Smooth,
    Hard,
}

impl From<ProfileName> for TruncationProfile {
    fn from(p: ProfileName) -> Self {
        match p {
            ProfileName::Smooth => TruncationProfile::Smooth,
            ProfileName::Hard => TruncationProfile::Hard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    pub mode: TruncationMode,
    #[serde(default = "default_count")]
    pub count: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    pub profile: ProfileName,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig {
            mode: TruncationMode::ExpectedJumps,
            count: default_count(),
            level: None,
            profile: ProfileName::Smooth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    Zero,
    Linear,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    pub kind: DriftKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<f64>>,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig { kind: DriftKind::Zero, matrix: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    One,
    Sin,
    Gaussian,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    pub kind: PayoffKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

impl Default for PayoffConfig {
    fn default() -> Self {
        PayoffConfig { kind: PayoffKind::Sin, k: None, index: None }
    }
}

impl PayoffConfig {
    pub fn build(&self, d: usize) -> Result<Payoff, CliError> {
        Ok(match self.kind {
            PayoffKind::One => Payoff::One,
            PayoffKind::Gaussian => Payoff::Gaussian,
            PayoffKind::Sin => Payoff::Sin { k: self.k.clone().unwrap_or_else(|| vec![1.0; d]) },
            PayoffKind::Tanh => Payoff::Tanh { i: self.index.unwrap_or(0) },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    pub n_paths: u64,
    #[serde(default = "default_batch")]
    pub batch_size: u64,
    #[serde(default = "one_u64")]
    pub seed: u64,
    /// Excluded from the config hash: it changes wall time only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Rk4,
    Rk45,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeConfig {
    pub method: MethodName,
    pub max_step_fraction: f64,
    pub min_substeps: usize,
    pub tolerance: f64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        let o = OdeOptions::default();
        OdeConfig {
            method: MethodName::Rk4,
            max_step_fraction: o.max_step_fraction,
            min_substeps: o.min_substeps,
            tolerance: o.tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingName {
    Common,
    Independent,
}

/// BEL against central finite differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientConfig {
    /// Default `10^{-3}(1 + |x|)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
    #[serde(default = "common")]
    pub coupling: CouplingName,
    /// Largest accepted `|z|` per component.
    #[serde(default = "three")]
    pub z_max: f64,
}

/// Both sides of the integration-by-parts identity for `Φ = payoff(X(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IbpConfig {
    /// Noise coordinate, 0-based.
    #[serde(default)]
    pub k: usize,
    #[serde(default = "three")]
    pub z_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub quantity: String,
    /// Horizons `2^{-k}` for `k` in `k_min..=k_max`, unless `t_grid` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_min: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    /// Two-sided check `|slope − target| ≤ tolerance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// One-sided check `slope ≥ min_slope`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_slope: Option<f64>,
    /// A second quantity on the same paths; with `min_gap`, checks
    /// `slope − reference slope ≥ min_gap`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsConfig {
    #[serde(default = "two")]
    pub q: f64,
    /// Noise coordinate whose `Z^V` is simulated, 0-based.
    #[serde(default)]
    pub coord: usize,
    /// Horizons; default `[run.t]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    /// Monte Carlo paths per horizon; `0` evaluates the oracle only.
    #[serde(default)]
    pub mc_paths: u64,
    /// Largest accepted `|mc − oracle| / oracle`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    /// One-sided check on the log-log slope of the oracle over `t_grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_slope: Option<f64>,
    /// Largest accepted max/min of `oracle · t^{κq/ρ}` over `t_grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_constant_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathwiseConfig {
    #[serde(default)]
    pub k: usize,
    pub eps: Vec<f64>,
    #[serde(default = "three")]
    pub ratio_min: f64,
    #[serde(default = "five")]
    pub ratio_max: f64,
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn three() -> f64 {
    3.0
}
fn five() -> f64 {
    5.0
}
fn half() -> f64 {
    0.5
}
fn one_u64() -> u64 {
    1
}
fn default_count() -> f64 {
    64.0
}
fn default_batch() -> u64 {
    4096
}
fn common() -> CouplingName {
    CouplingName::Common
}

/// A parsed config together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config = Config::parse(&text)?;
        Ok(LoadedConfig { config, base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default() })
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical form of the effective config, without the
    /// worker count.
    pub fn sha256(&self) -> String {
        let mut canonical = self.clone();
        canonical.run.workers = None;
        let text = toml::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn rho_index(&self, base_dir: &Path) -> Result<f64, CliError> {
        match self.noise.kind {
            NoiseKind::Stable => {
                self.noise.alpha.ok_or_else(|| CliError::Config("noise.alpha is required for stable noise".into()))
            }
            NoiseKind::Table => Ok(self.table(base_dir)?.rho_index),
        }
    }

    fn table(&self, base_dir: &Path) -> Result<MeasureTable, CliError> {
        let rel =
            self.noise.table.as_ref().ok_or_else(|| CliError::Config("noise.table is required for tabulated noise".into()))?;
        MeasureTable::load(base_dir.join(rel)).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn models(&self, base_dir: &Path) -> Result<Vec<LevyCoordinateModel>, CliError> {
        let n = &self.noise;
        if n.dim == 0 {
            return Err(CliError::Config("noise.dim must be at least 1".into()));
        }
        let model = match n.kind {
            NoiseKind::Stable => {
                if n.table.is_some() {
                    return Err(CliError::Config("noise.table is only valid with kind = \"table\"".into()));
                }
                let alpha = self.rho_index(base_dir)?;
                LevyCoordinateModel::stable(alpha, n.scale, n.delta)?
            }
            NoiseKind::Table => {
                if n.alpha.is_some() {
                    return Err(CliError::Config("noise.alpha is only valid with kind = \"stable\"".into()));
                }
                let table = self.table(base_dir)?;
                LevyCoordinateModel::new(levy_bel::LevyMeasure::Tabulated(table.to_measure()?), n.delta)?
            }
        };
        Ok(vec![model; n.dim])
    }

    pub fn field(&self, base_dir: &Path) -> Result<FieldParams, CliError> {
        let kappa = match self.field.kappa {
            Some(k) => k,
            None => default_kappa(self.rho_index(base_dir)?),
        };
        Ok(FieldParams::new(self.noise.delta, kappa)?)
    }

    pub fn truncation_spec(&self) -> Result<TruncationSpec, CliError> {
        let t = &self.truncation;
        let profile = t.profile.into();
        Ok(match t.mode {
            TruncationMode::ExpectedJumps => {
                if t.level.is_some() {
                    return Err(CliError::Config("truncation.level is only valid with mode = \"fixed\"".into()));
                }
                TruncationSpec::ExpectedJumps { count: t.count, profile }
            }
            TruncationMode::Fixed => TruncationSpec::Fixed {
                level: t.level.ok_or_else(|| CliError::Config("truncation.level is required with mode = \"fixed\"".into()))?,
                profile,
            },
        })
    }

    pub fn drift(&self) -> Result<Arc<dyn Drift>, CliError> {
        let d = self.noise.dim;
        let dr = &self.drift;
        let drift: Arc<dyn Drift> = match dr.kind {
            DriftKind::Zero => {
                if dr.matrix.is_some() {
                    return Err(CliError::Config("drift.matrix is not used by the zero drift".into()));
                }
                Arc::new(ZeroDrift { d })
            }
            DriftKind::Linear => Arc::new(LinearDrift::new(
                dr.matrix.clone().ok_or_else(|| CliError::Config("drift.matrix is required for a linear drift".into()))?,
            )?),
            DriftKind::Tanh => match &dr.matrix {
                Some(m) => Arc::new(TanhDrift::new(m.clone())?),
                None => Arc::new(TanhDrift::shipped(d)),
            },
        };
        Ok(drift)
    }

    pub fn ode(&self) -> OdeOptions {
        OdeOptions {
            method: match self.ode.method {
                MethodName::Rk4 => OdeMethod::Rk4,
                MethodName::Rk45 => OdeMethod::Rk45,
            },
            max_step_fraction: self.ode.max_step_fraction,
            min_substeps: self.ode.min_substeps,
            tolerance: self.ode.tolerance,
        }
    }

    /// The Monte Carlo configuration at `run.t`.
    pub fn estimator(&self, base_dir: &Path, workers: usize) -> Result<EstimatorConfig, CliError> {
        let d = self.noise.dim;
        let cfg = EstimatorConfig {
            models: self.models(base_dir)?,
            field: self.field(base_dir)?,
            truncation: self.truncation_spec()?,
            drift: self.drift()?,
            payoff: self.payoff.build(d)?,
            x0: self.run.x0.clone().unwrap_or_else(|| vec![0.0; d]),
            t: self.run.t,
            n_paths: self.run.n_paths,
            batch_size: self.run.batch_size,
            master_seed: self.run.seed,
            workers,
            ode: self.ode(),
            q_bound: levy_bel::weights::DEFAULT_Q_BOUND,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl GradientConfig {
    pub fn coupling(&self) -> FdCoupling {
        match self.coupling {
            CouplingName::Common => FdCoupling::Common,
            CouplingName::Independent => FdCoupling::Independent,
        }
    }
}

impl ScalingConfig {
    pub fn quantity(&self) -> Result<ScalingQuantity, CliError> {
        parse_quantity(&self.quantity)
    }

    pub fn reference(&self) -> Result<Option<ScalingQuantity>, CliError> {
        self.reference.as_deref().map(parse_quantity).transpose()
    }

    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        match (&self.t_grid, self.k_min, self.k_max) {
            (Some(g), None, None) => Ok(g.clone()),
            (None, Some(lo), Some(hi)) if lo <= hi => Ok(levy_bel::estimator::dyadic_grid(lo, hi)),
            _ => Err(CliError::Config("scaling_study needs either t_grid or k_min <= k_max".into())),
        }
    }
}

fn parse_quantity(s: &str) -> Result<ScalingQuantity, CliError> {
    ScalingQuantity::parse(s).ok_or_else(|| CliError::Config(format!("unknown scaling quantity `{s}`")))
}
