//! `mdiff`: sampling, solving and self-checks for the merged diffusion
//! `dX = v_d tanh(kappa X) dt + sigma dW`.

mod commands;
mod config;
mod error;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Settings;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mdiff", version, about = "Merged diffusion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Terminal positions X_t of independent trajectories
    Sample,
    /// Whole trajectories on a time grid
    Paths,
    /// Distribution of the biased random walk
    Walk,
    /// Fokker-Planck snapshots from the finite-volume solver
    Fpe,
    /// Mean-squared displacement over a grid of start times and positions
    Msd,
    /// Run the self-check battery
    Verify,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let settings = match &cli.settings.config {
        Some(path) => cli.settings.clone().over(Settings::from_file(path)?),
        None => cli.settings,
    };
    if let Some(threads) = settings.threads {
        config::at_least("threads", threads, 1)?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::config("threads", e))?;
    }
    match cli.command {
        Command::Sample => commands::sample(&settings),
        Command::Paths => commands::paths(&settings),
        Command::Walk => commands::walk(&settings),
        Command::Fpe => commands::fpe(&settings),
        Command::Msd => commands::msd(&settings),
        Command::Verify => commands::verify(&settings),
    }
}

fn main() -> ExitCode {
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mdiff: {e}");
            e.exit_code()
        }
    }
}
