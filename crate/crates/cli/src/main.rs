#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod run;

use config::{Experiment, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("experiment failed: {0}")]
    Failed(String),
    #[error("internal inconsistency: {0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Internal(_) => 2,
            CliError::Usage(_) => 64,
        }
    }
}

impl From<caia_core::CaiaError> for CliError {
    fn from(e: caia_core::CaiaError) -> Self {
        match e {
            caia_core::CaiaError::Parameter(m) | caia_core::CaiaError::Shape(m) => CliError::Usage(m),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "caia", version, about = "Channel-aided interference alignment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when omitted)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    trials: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Synthesize an aided channel, design beamformers and check alignment
    Verify,
    /// Walk through the six-slot example structure
    DemoPaperExample,
    /// Solve the two-slot combining scheme over seeded slot pairs
    Pair,
    /// Phase-matching waiting times
    DelayPhase,
    /// Magnitude-matching waiting times
    DelayMagnitude,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Verify => Experiment::Verify,
            Command::DemoPaperExample => Experiment::DemoPaperExample,
            Command::Pair => Experiment::Pair,
            Command::DelayPhase => Experiment::DelayPhase,
            Command::DelayMagnitude => Experiment::DelayMagnitude,
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let experiment = Experiment::from(cli.command);
    let mut cfg = match &cli.common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(experiment, &text)?
        }
        None => ExperimentConfig::defaults(experiment),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.common.trials {
        cfg.trials = trials;
    }
    if let Some(out) = &cli.common.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn threads() -> Result<Option<usize>, CliError> {
    match std::env::var("CAIA_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("CAIA_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    let threads = threads()?;
    let mut buf = Vec::new();
    let result = run::run(&cfg, threads, &mut buf);
    // Reports are written even when the experiment fails.
    match &cfg.out {
        Some(path) => std::fs::write(path, &buf)?,
        None => std::io::stdout().write_all(&buf)?,
    }
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("caia: {e}");
            ExitCode::from(e.code())
        }
    }
}
