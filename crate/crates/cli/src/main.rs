//! `qtbasis`: build, verify and profile quasi-Trefftz bases from the shell.
//!
//! Exit codes: 0 when every check passes, 1 when a threshold fails, 2 for
//! usage and input errors.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::RunError;
use config::{CommonArgs, RunConfig};

#[derive(Parser)]
#[command(name = "qtbasis", version, about = "Quasi-Trefftz bases for the 2D first-order Helmholtz system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the basis on every element and dump it as JSON.
    Build(CommonArgs),
    /// Run the identity, residual and best-approximation studies.
    Verify(CommonArgs),
    /// Closed-form and measured operation counts of the explicit methods.
    Flops(CommonArgs),
    /// Mean and median per-element build times.
    Time(CommonArgs),
    /// Kernel dimensions of Q^F and Q^S on every element.
    KernelDims(CommonArgs),
    /// Sparsity patterns (PBM) and triplets of Q^F, Q^S and G.
    Sparsity {
        #[command(flatten)]
        common: CommonArgs,
        /// Element whose centroid is the expansion point.
        #[arg(long, default_value_t = 0)]
        element: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, default_degrees) = match &cli.command {
        Command::Flops(c) => (c, 2..=10),
        Command::Build(c) | Command::Verify(c) | Command::Time(c) | Command::KernelDims(c) => (c, 2..=6),
        Command::Sparsity { common, .. } => (common, 2..=4),
    };
    let rc = match RunConfig::resolve(common, default_degrees) {
        Ok(rc) => rc,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match &cli.command {
        Command::Build(_) => commands::build(&rc),
        Command::Verify(_) => commands::verify(&rc),
        Command::Flops(_) => commands::flops(&rc),
        Command::Time(_) => commands::time(&rc),
        Command::KernelDims(_) => commands::kernel_dims(&rc),
        Command::Sparsity { element, .. } => commands::sparsity(&rc, *element),
    };
    match outcome {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in &failures {
                eprintln!("FAIL {f}");
            }
            ExitCode::from(1)
        }
        Err(RunError::Check(e)) => {
            eprintln!("FAIL {e}");
            ExitCode::from(1)
        }
        Err(RunError::Other(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
