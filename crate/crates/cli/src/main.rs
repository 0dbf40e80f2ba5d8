#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Nehari-manifold solver for concave-convex fractional p-Laplacian problems.
#[derive(Parser)]
#[command(name = "nehari", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Writes iteration traces and progress.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Minimise the energy on both Nehari branches.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Fibering-map report of one field.
    Fibering {
        #[command(flatten)]
        common: Common,
        /// `random:SEED` or `file:PATH` (CSV as written by `solve`).
        #[arg(long, default_value = "random")]
        field: String,
        /// Writes `t, φ(t)` samples to this CSV file.
        #[arg(long)]
        phi_dump: Option<PathBuf>,
        #[arg(long, default_value_t = 400)]
        phi_points: usize,
    },
    /// Estimate the threshold λ₀ and its constituent constants.
    Lambda0 {
        #[command(flatten)]
        common: Common,
    },
    /// Check kernel admissibility.
    ValidateKernel {
        #[command(flatten)]
        common: Common,
    },
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    pub fn io(context: &str, e: impl std::fmt::Display) -> Self {
        Failure {
            code: 1,
            message: format!("{context}: {e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve { common } => commands::solve(&common),
        Command::Fibering {
            common,
            field,
            phi_dump,
            phi_points,
        } => commands::fibering(&common, &field, phi_dump.as_deref(), phi_points),
        Command::Lambda0 { common } => commands::lambda0(&common),
        Command::ValidateKernel { common } => commands::validate_kernel(&common),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
