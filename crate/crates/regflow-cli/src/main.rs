//! `regflow`: benchmarks and verification for the three regularising flows.
//!
//! Subcommands: `solve` (run a flow on a synthetic problem and write its
//! error/residual curves plus the discrepancy stop), `rates` (reproduce the
//! convergence-rate matrix and write a pass/fail summary), `verify` (run the
//! property suites) and `problem` (generate and serialise a test problem).
//!
//! Exit codes: 0 ok, 1 check failure, 2 usage error, 3 runtime condition
//! (e.g. discrepancy level not reached).

mod commands;
mod config;
mod csvio;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "regflow", version, about = "Dynamical regularisation of linear ill-posed problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one flow on a problem; write error_vs_t.csv, residual_vs_t.csv, stop.csv
    Solve(SolveArgs),
    /// Run the (method x mu) rate matrix; write summary.csv with pass column
    Rates(RatesArgs),
    /// Run the verification suites; write one CSV report per suite
    Verify(VerifyArgs),
    /// Generate a test problem and serialise it to a directory
    Problem(ProblemArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// showalter | heavy-ball | viscosity
    #[arg(long)]
    method: Option<String>,
    /// Damping parameter (required for second-order methods)
    #[arg(long)]
    b: Option<f64>,
    /// Problem family: diag | greens
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Spectral decay exponent of the diagonal family
    #[arg(long)]
    p: Option<f64>,
    /// Source-condition order of the diagonal family
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Noise level (0 for clean data)
    #[arg(long)]
    delta: Option<f64>,
    /// Time grid spec `log:<lo>:<hi>:<count>`
    #[arg(long)]
    t_grid: Option<String>,
    /// Discrepancy factor (> 1)
    #[arg(long)]
    tau_factor: Option<f64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the fair-time comparison (Showalter and heavy ball at
    /// t^2 against viscosity at t); requires --b
    #[arg(long)]
    fair_time: bool,
    /// TOML file with defaults for the flags above
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RatesArgs {
    /// Problem size (default 2000; 200 with --quick)
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated source orders (default 0.5,1,2)
    #[arg(long)]
    mu_list: Option<String>,
    /// Noise-level grid spec for the best-worst-case rows
    #[arg(long)]
    delta_grid: Option<String>,
    /// Regularisation-parameter grid spec for the best-worst-case inner
    /// infimum (defaults to the resolvable spectral range)
    #[arg(long)]
    alpha_grid: Option<String>,
    /// Coarse grids
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run a single suite: oracle | filters | bessel | transform
    #[arg(long)]
    only: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump the integrated oracle trajectories as CSV (t, state...)
    #[arg(long)]
    dump_trajectories: bool,
    /// Test hook: replace the generator-bound constant by this value
    #[arg(long, hide = true)]
    corrupt_sigma0: Option<f64>,
}

#[derive(Args)]
struct ProblemArgs {
    /// diag | greens
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Outcome of a subcommand, mapped onto the documented exit codes.
pub enum Outcome {
    Ok,
    CheckFailure(String),
    Usage(String),
    Runtime(String),
}

impl Outcome {
    fn exit(self) -> ExitCode {
        match self {
            Outcome::Ok => ExitCode::SUCCESS,
            Outcome::CheckFailure(msg) => {
                eprintln!("regflow: {msg}");
                ExitCode::from(1)
            }
            Outcome::Usage(msg) => {
                eprintln!("regflow: {msg}");
                ExitCode::from(2)
            }
            Outcome::Runtime(msg) => {
                eprintln!("regflow: {msg}");
                ExitCode::from(3)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => commands::solve::run(args),
        Command::Rates(args) => commands::rates::run(args),
        Command::Verify(args) => commands::verify::run(args),
        Command::Problem(args) => commands::problem::run(args),
    };
    outcome.exit()
}
