use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oscchain::cli::{self, ScenarioConfig};

/// Steady states, thermodynamic sweeps and cross-validation studies for
/// boundary-driven oscillator chains.
#[derive(Parser)]
#[command(name = "oscchain", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the primary artifact here (plus `<out>.meta.json`); stdout if absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress notes on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one steady state and report rates, regime and covariance (JSON).
    Steady { config: PathBuf },
    /// Sweep omega_1/omega_N and emit one CSV row per grid point.
    Sweep { config: PathBuf },
    /// Cross-check the Gaussian solution against the truncated Fock solver (JSON).
    OracleCompare { config: PathBuf },
    /// Collision-model tau-convergence study (CSV + extrapolation JSON).
    Collision { config: PathBuf },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let (name, path) = match &args.command {
        Command::Steady { config } => ("steady", config),
        Command::Sweep { config } => ("sweep", config),
        Command::OracleCompare { config } => ("oracle-compare", config),
        Command::Collision { config } => ("collision", config),
    };
    let result = ScenarioConfig::load(path).and_then(|config| {
        if !args.quiet {
            eprintln!("oscchain {name}: {}", path.display());
        }
        match &args.command {
            Command::Steady { .. } => cli::cmd_steady(&config),
            Command::Sweep { .. } => cli::cmd_sweep(&config),
            Command::OracleCompare { .. } => cli::cmd_oracle_compare(&config),
            Command::Collision { .. } => cli::cmd_collision(&config),
        }
    });
    match result.and_then(|output| cli::emit(&output, args.out.as_deref())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("oscchain {name}: {}", e.message);
            ExitCode::from(e.exit_code as u8)
        }
    }
}
