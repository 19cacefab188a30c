use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pseudosolid_cli::commands::{self, Global};

/// Pseudo-solid Newton solver and RBF level-set design for exterior
/// Bernoulli free boundary problems.
///
/// Exit codes: 0 success, 1 invalid input, 2 solver failure,
/// 3 acceptance threshold missed. Top-level configuration scalars can be
/// overridden with PSEUDOSOLID_<NAME> environment variables.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Serial, reproducible execution.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Annulus solve at h and h/2 against the closed-form radius.
    VerifyAnalytic,
    /// One state solve; writes state.vtk, boundary.csv and newton.csv.
    SolveState {
        /// N x N design coefficients; the initial circle design if absent.
        #[arg(long)]
        alpha: Option<PathBuf>,
    },
    /// Staged optimization run.
    Optimize,
    /// Adjoint gradient against central finite differences.
    GradCheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = Global {
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        deterministic: cli.deterministic,
    };
    let res = match &cli.command {
        Command::VerifyAnalytic => commands::verify_analytic(&g),
        Command::SolveState { alpha } => commands::solve_state(&g, alpha.as_deref()),
        Command::Optimize => commands::optimize(&g),
        Command::GradCheck => commands::grad_check_cmd(&g),
    };
    match res {
        Ok(report) => {
            print!("{report}");
            ExitCode::from(commands::EXIT_OK as u8)
        }
        Err(f) => {
            match &f {
                commands::Failure::Threshold(r) => print!("{r}"),
                _ => eprintln!("error: {}", f.message()),
            }
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
