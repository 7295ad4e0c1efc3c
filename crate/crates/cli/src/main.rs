//! `lookahead-lab`: analyses and toy training runs for the Lookahead
//! optimizer, with JSON configs and CSV/JSON outputs.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{CliError, Status};

#[derive(Debug, Parser)]
#[command(name = "lookahead-lab", version, about = "Lookahead optimizer analyses and toy training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact NQM moment trajectories of SGD and Lookahead
    NqmDynamics(commands::nqm::DynamicsArgs),
    /// NQM steady-state and finite-horizon sweeps
    NqmSweep(commands::nqm::SweepArgs),
    /// Convergence rates of CM and Lookahead(CM) on quadratics
    QuadRate(commands::quad::RateArgs),
    /// Taylor expansion checks of the Lookahead update
    TaylorCheck(commands::taylor::CheckArgs),
    /// Train toy models, sweep hyperparameters or trace the inner loop
    Train(commands::train::TrainArgs),
    /// Fixed versus adaptive slow-weights step size
    AdaptiveAlphaDemo(commands::train::DemoArgs),
}

const THREADS_VAR: &str = "LOOKAHEAD_LAB_THREADS";

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::NqmDynamics(a) => commands::nqm::dynamics(a),
        Command::NqmSweep(a) => commands::nqm::sweep(a),
        Command::QuadRate(a) => commands::quad::rate(a),
        Command::TaylorCheck(a) => commands::taylor::check(a),
        Command::Train(a) => commands::train::run(a),
        Command::AdaptiveAlphaDemo(a) => commands::train::adaptive_demo(a),
    });
    match result {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Partial(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
