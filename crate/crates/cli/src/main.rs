use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use phasematch_cli::verify::Suite;
use phasematch_cli::{exit_code, run, write_report, Command, ExperimentConfig, Failure, Format};

#[derive(Parser, Debug)]
#[command(
    name = "phasematch",
    version,
    about = "Phase-matching QKD simulation and verification"
)]
struct Cli {
    /// JSON experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent. A `<out>.meta.json` sidecar is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Key rate and PLOB bound against distance
    RateCurve,
    /// Key rate against the fixed phase offset
    MisalignmentSweep,
    /// Mutual information, leakage and optimal intensity against fluctuation
    FluctuationStudy,
    /// High- versus low-dimensional rates under fluctuation
    Compare,
    /// Run verification suites
    Verify {
        #[arg(value_enum, default_value = "all")]
        suite: Suite,
    },
    /// Decoy-state yield bounds against analytic yields
    DecoyDemo,
    /// Monte Carlo against the analytic detection model
    McCheck,
    /// Single-photon inaccuracy against slice count
    Table2,
}

fn real_main(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(Failure::from)?,
        None => ExperimentConfig::default(),
    };
    let command = match cli.command {
        Cmd::RateCurve => Command::RateCurve,
        Cmd::MisalignmentSweep => Command::MisalignmentSweep,
        Cmd::FluctuationStudy => Command::FluctuationStudy,
        Cmd::Compare => Command::Compare,
        Cmd::Verify { suite } => Command::Verify(suite),
        Cmd::DecoyDemo => Command::DecoyDemo,
        Cmd::McCheck => Command::McCheck,
        Cmd::Table2 => Command::Table2,
    };
    let seed = cli.seed.unwrap_or(phasematch_cli::DEFAULT_SEED);
    let format = cli.format.or(cfg.format).unwrap_or_default();
    let out = cli.out.or_else(|| cfg.out.clone());

    let report = run(command, &cfg, seed)?;
    if let Some(body) = write_report(&report, &cfg, seed, format, out.as_deref())
        .with_context(|| format!("writing {} output", report.command))?
    {
        std::io::stdout().write_all(body.as_bytes())?;
    }
    for f in &report.failures {
        eprintln!("FAIL {f}");
    }
    if !report.failures.is_empty() {
        return Err(
            Failure::Verification(format!("{} check(s) failed", report.failures.len())).into(),
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap's own usage-error status (2) is reserved for verification failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
