//! Command dispatch. Exit codes: 0 success, 2 configuration error,
//! 3 convergence failure, 4 verification failure.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::EXIT_CONFIG;
use config::{BuiltProblem, RunConfig};

#[derive(Parser)]
#[command(
    name = "levydiv",
    about = "Optimal periodic dividend barriers with capital injection for spectrally negative Lévy surplus processes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single-regime problem: optimal barrier, value table, diagnostics.
    SolveAux {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve a regime-switching problem by the contraction fixed point.
    SolveRegime {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Monte-Carlo estimate of one quantity against its closed form.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// npv | fpt | two-sided | parisian-ruin | resolvent-g |
        /// resolvent-g-tilde | regime-value | dpp
        #[arg(long)]
        quantity: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the full identity suite; exits 4 on any hard failure.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Reduce the path count tenfold and skip the slowest cross-checks.
        #[arg(long)]
        fast: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<(RunConfig, BuiltProblem), i32> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("cannot read {}: {e}", path.display());
        EXIT_CONFIG
    })?;
    RunConfig::parse(&text).map_err(|errs| {
        for e in &errs {
            eprintln!("config error: {e}");
        }
        EXIT_CONFIG
    })
}

fn run() -> i32 {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SolveAux { config, out } => match load(config) {
            Ok((cfg, BuiltProblem::Aux(p))) => commands::solve_aux(&cfg, &p, out),
            Ok(_) => {
                eprintln!("solve-aux requires an aux problem config");
                return EXIT_CONFIG;
            }
            Err(code) => return code,
        },
        Command::SolveRegime { config, out } => match load(config) {
            Ok((cfg, BuiltProblem::Regime(m))) => commands::solve_regime(&cfg, &m, out),
            Ok(_) => {
                eprintln!("solve-regime requires a regime problem config");
                return EXIT_CONFIG;
            }
            Err(code) => return code,
        },
        Command::Simulate {
            config,
            quantity,
            out,
        } => match load(config) {
            Ok((cfg, built)) => commands::simulate(&cfg, &built, quantity, out),
            Err(code) => return code,
        },
        Command::Verify { config, fast, out } => match load(config) {
            Ok((cfg, built)) => commands::verify(&cfg, &built, *fast, out),
            Err(code) => return code,
        },
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run() as u8)
}
