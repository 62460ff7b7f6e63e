//! Command-line front end for `peakshave`.
//!
//! Every command reads a TOML [`RunConfig`] (path from `--config` or the
//! `PEAKSHAVE_CONFIG` environment variable, defaults otherwise), applies flag
//! overrides, validates the result, and only then touches data. Outputs are
//! CSV or JSON files at the paths given; inputs are never modified.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical error.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use peakshave::ErrorClass;

pub use config::RunConfig;

pub const CONFIG_ENV: &str = "PEAKSHAVE_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] peakshave::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 1,
            Self::Io { .. } => 2,
            Self::Core(e) => match e.class() {
                ErrorClass::Config => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "peakshave", version, about = "Peak-hour load forecasting and battery peak-shaving toolkit")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    MaskValue,
    AlphaBeta,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aggregate per-meter half-hour readings into daily community curves.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Meters expected per (day, slot).
        #[arg(long)]
        meters: Option<usize>,
    },
    /// Generate synthetic duck-shaped daily curves.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        days: Option<usize>,
    },
    /// Pretrain and fine-tune an SAE; writes the model and its loss history.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Reconstruct the masked slots of each curve with a trained model.
    Forecast {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Masked slots as FIRST-LAST (1-based); defaults to the model's mask.
        #[arg(long, value_parser = parse_slots)]
        mask_slots: Option<(usize, usize)>,
        /// Long-format truth-vs-forecast series for plotting.
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Sensitivity sweep over the mask value or the α/β ratio.
    Sweep {
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated grid; defaults to the config's grid or ratios.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Training protocol for mask-value sweeps: fixed, clean or dae.
        #[arg(long)]
        protocol: Option<config::Protocol>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the four dispatch strategies on each day.
    Simulate {
        /// True daily curves.
        #[arg(long)]
        curves: Option<PathBuf>,
        /// Forecast curves (same days, same order); defaults to the truth.
        #[arg(long)]
        forecast: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Directory for per-day, per-strategy schedule CSVs.
        #[arg(long)]
        schedules: Option<PathBuf>,
        #[arg(long)]
        capacity_kwh: Option<f64>,
        #[arg(long)]
        threshold_kw: Option<f64>,
    },
    /// k-fold comparison of ANN, ELM and SAE, or of SAE depths.
    Compare {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Compare 3/5/7/9-layer SAEs instead of the baseline models.
        #[arg(long)]
        architectures: bool,
        /// Fold-averaged loss histories (with --architectures).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Print a CSV report as an aligned table.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn parse_slots(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('-').ok_or_else(|| format!("expected FIRST-LAST, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

/// Loads the configuration named by the CLI (or defaults) and applies the
/// global overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs the command. Text
/// output (help, reports) goes to `out`.
pub fn run_with<I, T>(args: I, out: &mut dyn std::io::Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            write!(out, "{e}").map_err(|source| CliError::Io { path: "<stdout>".into(), source })?;
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            return Err(CliError::Usage(first.trim().trim_start_matches("error: ").to_string()));
        }
    };
    let cfg = resolve_config(&cli)?;
    commands::execute(cli.command, cfg, out)
}

pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock())
}
