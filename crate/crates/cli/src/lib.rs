//! Command-line front end: experiment runners that turn the simulation
//! library into tables, the verification suites, and output plumbing.
//!
//! The binary is a thin clap wrapper around [`run`]; the experiment
//! functions are public so tests can drive them without a subprocess.

pub mod config;
pub mod experiments;
pub mod table;
pub mod verify;

use std::path::{Path, PathBuf};

use phasematch::channel::ChannelError;
use phasematch::encoding::EncodingError;
use phasematch::keyrate::KeyRateError;
use phasematch::QuditError;
use serde::Serialize;
use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, Format, Intensity};
pub use table::{Cell, Table};

pub const DEFAULT_SEED: u64 = 1;

/// Failures with a dedicated exit status.
#[derive(Debug, Error)]
pub enum Failure {
    #[error("{0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("numerical guard tripped: {0}")]
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Verification(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ChannelError> for Failure {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::InvalidParameter(_) => Failure::Config(e.to_string()),
            ChannelError::ZeroGain | ChannelError::TruncationExceeded { .. } => {
                Failure::Numerical(e.to_string())
            }
        }
    }
}

impl From<KeyRateError> for Failure {
    fn from(e: KeyRateError) -> Self {
        match e {
            KeyRateError::Channel(c) => c.into(),
            KeyRateError::NegativeProbability(_)
            | KeyRateError::NotNormalized(_)
            | KeyRateError::Infeasible => Failure::Numerical(e.to_string()),
            KeyRateError::Bracket(..)
            | KeyRateError::TooFewIntensities { .. }
            | KeyRateError::NoVacuum(_)
            | KeyRateError::InvalidArgument(_) => Failure::Config(e.to_string()),
        }
    }
}

impl From<EncodingError> for Failure {
    fn from(e: EncodingError) -> Self {
        match e {
            EncodingError::Truncation { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<QuditError> for Failure {
    fn from(e: QuditError) -> Self {
        Failure::Config(e.to_string())
    }
}

/// Exit status for an error bubbled up to `main`.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    err.downcast_ref::<Failure>().map_or(1, Failure::exit_code)
}

/// Output of one subcommand.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub table: Table,
    /// Fully resolved parameters, recorded in the metadata sidecar.
    pub params: serde_json::Value,
    /// Checks that failed; the table is still written before exiting.
    pub failures: Vec<String>,
}

impl Report {
    pub fn new(command: &'static str, table: Table, params: serde_json::Value) -> Self {
        Report {
            command,
            table,
            params,
            failures: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    RateCurve,
    MisalignmentSweep,
    FluctuationStudy,
    Compare,
    Verify(verify::Suite),
    DecoyDemo,
    McCheck,
    Table2,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::RateCurve => "rate-curve",
            Command::MisalignmentSweep => "misalignment-sweep",
            Command::FluctuationStudy => "fluctuation-study",
            Command::Compare => "compare",
            Command::Verify(_) => "verify",
            Command::DecoyDemo => "decoy-demo",
            Command::McCheck => "mc-check",
            Command::Table2 => "table2",
        }
    }
}

/// Runs one subcommand against a validated config.
pub fn run(command: Command, cfg: &ExperimentConfig, seed: u64) -> Result<Report, Failure> {
    if let Some(exp) = &cfg.experiment {
        if exp != command.name() {
            return Err(Failure::Config(format!(
                "config is for `{exp}` but `{}` was invoked",
                command.name()
            )));
        }
    }
    match command {
        Command::RateCurve => experiments::rate_curve(cfg),
        Command::MisalignmentSweep => experiments::misalignment_sweep(cfg),
        Command::FluctuationStudy => experiments::fluctuation_study(cfg),
        Command::Compare => experiments::compare(cfg),
        Command::Verify(suite) => verify::run(suite, cfg, seed),
        Command::DecoyDemo => experiments::decoy_demo(cfg),
        Command::McCheck => experiments::mc_check(cfg, seed),
        Command::Table2 => experiments::table2(),
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    format: Format,
    columns: &'a [String],
    rows: usize,
    config: &'a ExperimentConfig,
    params: &'a serde_json::Value,
}

/// `<out>.meta.json`
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the table to `out` (or returns it for stdout) plus the sidecar.
pub fn write_report(
    report: &Report,
    cfg: &ExperimentConfig,
    seed: u64,
    format: Format,
    out: Option<&Path>,
) -> anyhow::Result<Option<String>> {
    let body = report.table.render(format);
    let Some(out) = out else {
        return Ok(Some(body));
    };
    std::fs::write(out, &body)?;
    let meta = Meta {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: report.command,
        seed,
        format,
        columns: &report.table.columns,
        rows: report.table.rows.len(),
        config: cfg,
        params: &report.params,
    };
    let mut js = serde_json::to_string_pretty(&meta)?;
    js.push('\n');
    std::fs::write(sidecar_path(out), js)?;
    Ok(None)
}
