//! Command-line experiment runner for `levy-bel`.
//!
//! Each subcommand reads a TOML config (see [`config`]), runs one
//! experiment, and writes `<experiment>.csv` plus
//! `<experiment>-summary.txt` into the output directory. The exit code is
//! 0 when every configured check passes, 1 when a check fails, 2 on a
//! config or I/O error, and 3 on a numerical failure.

pub mod config;
pub mod experiments;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::LoadedConfig;
use crate::output::{Outcome, Stanza};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<levy_bel::Error> for CliError {
    fn from(e: levy_bel::Error) -> Self {
        use levy_bel::Error as E;
        match e {
            E::Domain { .. } | E::InvalidParameter { .. } | E::UnsupportedMeasure(_) | E::Table(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    ValidateAssumptions,
    Gradient,
    IbpCheck,
    ScalingStudy,
    NegativeMoments,
    PathwiseCheck,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::ValidateAssumptions => "validate-assumptions",
            Experiment::Gradient => "gradient",
            Experiment::IbpCheck => "ibp-check",
            Experiment::ScalingStudy => "scaling-study",
            Experiment::NegativeMoments => "negative-moments",
            Experiment::PathwiseCheck => "pathwise-check",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "levy-bel", version, about = "Gradient estimates and checks for Lévy-driven SDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrability and growth conditions of the noise.
    ValidateAssumptions(RunArgs),
    /// BEL gradient against central finite differences.
    Gradient(RunArgs),
    /// Both sides of the integration-by-parts identity.
    IbpCheck(RunArgs),
    /// Log-log slope of a weight statistic over small horizons.
    ScalingStudy(RunArgs),
    /// Negative moments of the field functional: oracle and Monte Carlo.
    NegativeMoments(RunArgs),
    /// Finite-perturbation residuals of the Malliavin derivative.
    PathwiseCheck(RunArgs),
}

impl Command {
    pub fn split(&self) -> (Experiment, &RunArgs) {
        match self {
            Command::ValidateAssumptions(a) => (Experiment::ValidateAssumptions, a),
            Command::Gradient(a) => (Experiment::Gradient, a),
            Command::IbpCheck(a) => (Experiment::IbpCheck, a),
            Command::ScalingStudy(a) => (Experiment::ScalingStudy, a),
            Command::NegativeMoments(a) => (Experiment::NegativeMoments, a),
            Command::PathwiseCheck(a) => (Experiment::PathwiseCheck, a),
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `run.workers`; does not change any output byte.
    #[arg(long, env = "LEVY_BEL_WORKERS")]
    pub workers: Option<usize>,
}

/// The result of a completed run.
#[derive(Debug)]
pub struct Report {
    pub outcome: Outcome,
    pub summary_path: PathBuf,
    pub summary: String,
}

pub fn run(experiment: Experiment, args: &RunArgs) -> Result<Report, CliError> {
    let LoadedConfig { mut config, base_dir } = LoadedConfig::load(&args.config)?;
    if let Some(name) = &config.experiment {
        if name.replace('_', "-") != experiment.as_str() {
            return Err(CliError::Config(format!("config is for `{name}`, not `{}`", experiment.as_str())));
        }
    }
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    let workers =
        args.workers.or(config.run.workers).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
    if workers == 0 {
        return Err(CliError::Config("worker count must be at least 1".into()));
    }
    let stanza = Stanza { seed: config.run.seed, config_sha256: config.sha256() };
    let mut outcome = experiments::run(experiment, &config, &base_dir, workers)?;
    let summary_path = output::write_artifacts(&args.out, experiment.as_str(), &stanza, &mut outcome)?;
    let summary = output::render_summary(experiment.as_str(), &stanza, &outcome);
    Ok(Report { outcome, summary_path, summary })
}

/// Parses `args`, runs the experiment, and reports on stdout/stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (experiment, args) = cli.command.split();
    match run(experiment, args) {
        Ok(report) => {
            print!("{}", report.summary);
            ExitCode::from(if report.outcome.passed() { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("levy-bel: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
