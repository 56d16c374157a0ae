//! `dynmaxent`: runs closure-versus-solver experiments from JSON configs.
//!
//! Exit status is 0 on success, 2 for a config that fails to parse or
//! validate (nothing is written), and 1 for anything that goes wrong later.

mod config;
mod oracle;
mod report;
mod run;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{ExperimentConfig, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing artifacts: {0} has no errors.csv; run a comparison experiment into it first")]
    MissingArtifacts(String),
    #[error("run failed: {0}")]
    Run(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "dynmaxent", version, about = "Compare DynMaxEnt closures against the Fokker-Planck solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Number of grid cells.
        #[arg(long)]
        grid_n: Option<usize>,
        /// Solver time step.
        #[arg(long)]
        dt: Option<f64>,
        /// Fixed end time instead of running until the moments settle.
        #[arg(long)]
        horizon: Option<f64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the error table of a run directory.
    Report { dir: PathBuf },
    /// Print the closed-form oracle values.
    Oracle,
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            grid_n,
            dt,
            horizon,
            out,
        } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config.display())))?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            cfg.apply(&Overrides { grid_n, dt, horizon, out });
            let validated = cfg.validate()?;
            let failures = run::run(&validated)?;
            println!("wrote {}", validated.out_dir.display());
            if failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::Run(failures.join("; ")))
            }
        }
        Command::Report { dir } => {
            print!("{}", report::render(&dir)?);
            Ok(())
        }
        Command::Oracle => {
            for (name, value) in oracle::values() {
                println!("{name:<48} {}", run::num(value));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dynmaxent: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
