//! `hetsar`: fit heteroscedastic semiparametric SAR models, run simulation
//! studies, and compute impacts and Moran diagnostics.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical failure, 3 fit did not
//! converge (its document is still written).

mod commands;
mod document;
mod error;
mod io;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{fit, impacts, moran, simulate};

#[derive(Debug, Parser)]
#[command(name = "hetsar", version, about = "Heteroscedastic semiparametric spatial autoregression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a CSV file and write a fit document.
    Fit(fit::FitArgs),
    /// Run a Monte-Carlo study described by a scenario document.
    Simulate(simulate::SimulateArgs),
    /// Direct, indirect and total impacts of a linear mean term.
    Impacts(impacts::ImpactsArgs),
    /// Moran's I with a permutation p-value.
    Moran(moran::MoranArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Impacts(a) => impacts::run(a),
        Command::Moran(a) => moran::run(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hetsar: {e}");
            e.exit_code()
        }
    }
}
