//! `dronewatch`: calibrate detectors, run Monte Carlo experiments and check
//! their output files.
//!
//! Exit codes: 0 success, 1 validation, 2 infeasible constraints, 3 I/O.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dronewatch_core::detect::serde_extended::parse_extended;
use dronewatch_core::Offsets;

#[derive(Debug, Parser)]
#[command(name = "dronewatch", version, about = "Ternary drone detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibrate the configured detector and print a JSON report.
    Calibrate(CalibrateArgs),
    /// Estimate the confusion matrix of the calibrated detector.
    Simulate(RunArgs),
    /// Sweep the false-alarm level or the sensor/sample lattice.
    Sweep(SweepArgs),
    /// Average run length and detection delay of the CUSUM monitor.
    Quickest(RunArgs),
    /// Re-parse emitted files and verify their properties.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Scenario file (TOML).
    config: PathBuf,
    /// Skip the search and report the detector at `H0,H1` (`inf`, `-inf`
    /// allowed).
    #[arg(long, value_name = "H0,H1", allow_hyphen_values = true, value_parser = parse_offsets)]
    offsets: Option<Offsets>,
    /// Override the scenario seed (Monte Carlo calibration only).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file (TOML).
    config: PathBuf,
    /// Output directory; defaults to $DRONEWATCH_OUT_DIR, then `.`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the trial count (streams for `quickest`).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    trials: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKind {
    Tradeoff,
    Grid,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long = "sweep", value_enum)]
    kind: SweepKind,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Output files or directories holding them.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

fn parse_offsets(s: &str) -> Result<Offsets, String> {
    let (a, b) = s.split_once(',').ok_or("expected two values `H0,H1`")?;
    Ok(Offsets::new(parse_extended(a)?, parse_extended(b)?))
}

/// Why a command stopped; each variant owns one exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Infeasible(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Infeasible(m) | Failure::Io(m) => m,
        }
    }
}

impl From<dronewatch_core::Error> for Failure {
    fn from(e: dronewatch_core::Error) -> Self {
        use dronewatch_core::Error as E;
        match e {
            E::Infeasible { .. } | E::NonConvergence { .. } => Failure::Infeasible(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Calibrate(a) => commands::calibrate(&a.config, a.offsets, a.seed),
        Command::Simulate(a) => commands::simulate(&a.into()),
        Command::Sweep(a) => commands::sweep(&a.run.into(), a.kind == SweepKind::Grid),
        Command::Quickest(a) => commands::quickest(&a.into()),
        Command::Check(a) => commands::check(&a.paths),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

impl From<RunArgs> for commands::Run {
    fn from(a: RunArgs) -> Self {
        Self { config: a.config, out: output::resolve_out_dir(a.out), seed: a.seed, trials: a.trials }
    }
}
