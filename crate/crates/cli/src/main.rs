//! `kld`: effective Hamiltonians, kinetic runs, Hamilton-Jacobi limits and
//! Monte Carlo for forced velocity-jump processes.
//!
//! Exit status is 0 on success, 1 when a run reports a violated assumption
//! and 2 on errors.

mod commands;
mod output;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use kld::config::RunConfig;

#[derive(Parser)]
#[command(name = "kld", version, about = "Forced velocity-jump processes: Hamiltonians, kinetic limits and Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Base seed for Monte Carlo runs (overrides the configuration).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (falls back to KLD_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the model assumptions and the stationary profile.
    Validate(Common),
    /// Stationary velocity profile.
    Stationary(Common),
    /// Table of the effective Hamiltonian.
    Hamiltonian(Common),
    /// Legendre transform of the Hamiltonian table.
    Legendre(Common),
    /// Hamilton-Jacobi limit.
    Hj(Common),
    /// Kinetic runs and their Hopf-Cole transforms.
    Kinetic(Common),
    /// Monte Carlo ensemble of the jump process.
    Simulate(SimulateArgs),
    /// Kinetic runs against the Hamilton-Jacobi limit.
    Compare(Common),
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Number of trajectories.
    #[arg(long)]
    n: Option<usize>,
    /// Final time.
    #[arg(long)]
    t_final: Option<f64>,
    /// Comma separated multiples of the momentum direction.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    p_list: Option<Vec<f64>>,
    /// Also write every trajectory endpoint.
    #[arg(long)]
    endpoints: bool,
}

/// Why a command did not succeed.
pub enum Failure {
    /// The run finished but an assumption or bound failed.
    Violation(String),
    Error(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Failure {
        Failure::Error(e.to_string())
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("KLD_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("KLD_THREADS must be a positive integer, got `{v}`")),
        _ => Ok(None),
    }
}

fn setup(common: &Common) -> Result<RunConfig, Failure> {
    if let Some(n) = thread_count(common.threads)? {
        if n == 0 {
            return Err(Failure::Error("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = RunConfig::load(&common.config).map_err(|e| Failure::Error(format!("{}: {e}", common.config.display())))?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Failure::Error(format!("creating {}: {e}", common.out.display())))?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(c) => setup(c).and_then(|cfg| commands::validate(&cfg, c)),
        Command::Stationary(c) => setup(c).and_then(|cfg| commands::stationary(&cfg, c)),
        Command::Hamiltonian(c) => setup(c).and_then(|cfg| commands::hamiltonian(&cfg, c)),
        Command::Legendre(c) => setup(c).and_then(|cfg| commands::legendre(&cfg, c)),
        Command::Hj(c) => setup(c).and_then(|cfg| commands::hj(&cfg, c)),
        Command::Kinetic(c) => setup(c).and_then(|cfg| commands::kinetic(&cfg, c)),
        Command::Simulate(a) => setup(&a.common).and_then(|cfg| commands::simulate(&cfg, a)),
        Command::Compare(c) => setup(c).and_then(|cfg| commands::compare(&cfg, c)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(msg)) => {
            eprintln!("kld: assumption violated: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(msg)) => {
            eprintln!("kld: error: {msg}");
            ExitCode::from(2)
        }
    }
}
