//! Experiment runner for entropy-regularized min-max games on discretized
//! strategy spaces.
//!
//! Exit codes: 0 success (including a reported non-convergence), 2 for
//! configuration or input errors, 3 for numerical failures.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{
    run_anneal, run_fp_compare, run_simulate, run_solve, run_verify, CommandCtx,
};

#[derive(Parser)]
#[command(name = "mfbr", version, about = "Regularized min-max game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the best-response flow and write trace.csv + summary.json.
    Simulate(RunArgs),
    /// Compute the regularized equilibrium and write equilibrium.json.
    Solve(RunArgs),
    /// Solve across a decreasing sigma schedule and write anneal.csv.
    Anneal(RunArgs),
    /// Run the inequality and oracle check suite and write report.json.
    Verify(RunArgs),
    /// Compare fictitious play against the time-rescaled best-response flow.
    FpCompare(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, runner): (&RunArgs, fn(&CommandCtx) -> Result<(), commands::AppError>) =
        match &cli.command {
            Command::Simulate(a) => (a, run_simulate),
            Command::Solve(a) => (a, run_solve),
            Command::Anneal(a) => (a, run_anneal),
            Command::Verify(a) => (a, run_verify),
            Command::FpCompare(a) => (a, run_fp_compare),
        };
    let ctx = CommandCtx {
        config_path: &args.config,
        out_dir: &args.out,
        seed_override: args.seed,
    };
    match runner(&ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
