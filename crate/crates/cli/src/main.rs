//! `arnold`: batch driver for critical-family searches, homotopy
//! certificates, cup-length gates and CSV export.

mod config;
mod cuplength;
mod export;
mod homotopy;
mod output;
mod solve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::Overrides;

/// Exit code for configuration, schema and runtime errors.
pub const EXIT_ERROR: u8 = 3;

/// An error that ends the run with exit code 3.
#[derive(Debug)]
pub struct Failure(pub String);

impl Failure {
    pub fn new(msg: impl Into<String>) -> Self {
        Failure(msg.into())
    }
}

impl From<arnold_core::Error> for Failure {
    fn from(e: arnold_core::Error) -> Self {
        Failure(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure(format!("i/o error: {e}"))
    }
}

#[derive(Parser)]
#[command(
    name = "arnold",
    version,
    about = "Critical S^1-families of the twisted action on CP^n and their topological checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Symmetric mode window `[-K, K]`.
    #[arg(long, value_name = "K")]
    window: Option<u32>,
    #[arg(long, value_name = "M")]
    samples: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            window: self.window,
            samples: self.samples,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Step {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "3")]
    Three,
    #[value(name = "4")]
    Four,
    #[value(name = "c0small")]
    C0Small,
}

#[derive(Subcommand)]
enum Command {
    /// Find the critical families and check the count against n + 1.
    Solve(RunArgs),
    /// Verify non-vanishing along the continuation steps.
    Homotopy {
        #[command(flatten)]
        run: RunArgs,
        /// Run one step only; all steps by default.
        #[arg(long, value_enum)]
        step: Option<Step>,
    },
    /// Cup-length of the index-pair fixture and the Morse gate against the
    /// latest solve report.
    Cuplength(cuplength::CupArgs),
    /// Write plot-ready CSV files from the reports in a directory.
    ExportPlots(export::ExportArgs),
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("ARNOLD_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|n| *n >= 1).ok_or_else(|| {
            Failure::new(format!(
                "ARNOLD_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8, Failure> {
    configure_threads()?;
    match cli.command {
        Command::Solve(a) => solve::run(&a.config, &a.overrides()),
        Command::Homotopy { run, step } => homotopy::run(&run.config, &run.overrides(), step),
        Command::Cuplength(a) => cuplength::run(&a),
        Command::ExportPlots(a) => export::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
