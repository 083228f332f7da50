//! `rdcp`: critical times, asymptotic sweeps, simulations and perturbation checks for
//! the random degree constrained process.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod commands;
mod error;
mod manifest;

use commands::{AsymptoticsArgs, CriticalTimeArgs, LambdaTableArgs, SimulateArgs, VerifyArgs};

#[derive(Parser)]
#[command(name = "rdcp", version, about = "Random degree constrained process toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continuous and discrete critical times of one law.
    CriticalTime(CriticalTimeArgs),
    /// Critical times along p = 1{k=2} + eps r for a list of eps.
    Asymptotics(AsymptoticsArgs),
    /// Monte Carlo runs of the process.
    Simulate(SimulateArgs),
    /// First-order correction checks for one (eps, r, delta).
    Verify(VerifyArgs),
    /// lambda, lambda', H and I on a uniform time grid.
    LambdaTable(LambdaTableArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            std::process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::CriticalTime(a) => commands::critical_time(a),
        Command::Asymptotics(a) => commands::asymptotics(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Verify(a) => commands::verify(a),
        Command::LambdaTable(a) => commands::lambda_table(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
