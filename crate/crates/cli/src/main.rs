//! `jflow` — a numerical laboratory for the J-flow on flat Kähler tori.
//!
//! Subcommands: `run` (parabolic flow), `newton` (direct critical-equation
//! solve), `check` (positivity conditions), `verify` (seeded property
//! suites), `compare` (gauge-normalized diff of two potential dumps).
//! `JFLOW_THREADS` caps the worker pool; results never depend on it.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod artifacts;
mod commands;
mod config;

#[derive(Parser)]
#[command(name = "jflow", version, about = "Numerical laboratory for the J-flow on flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the flow and write trajectory.csv, summary.json, final_phi.bin
    Run {
        /// Experiment config (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the critical equation directly; writes newton_report.json, final_phi.bin
    Newton {
        /// Experiment config (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
        /// Start from a previously dumped potential instead of the configured one
        #[arg(long)]
        warm_start: Option<PathBuf>,
    },
    /// Report c, the positivity conditions, and the largest admissible epsilon
    Check {
        /// Experiment config (JSON)
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a seeded property suite and print per-property verdicts
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Sup and L2 distance between two potential dumps in the I = 0 gauge
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Config describing the lattice both dumps live on
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Suite {
    Identities,
    Eigenbound,
    Order,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Eigenbound => "eigenbound",
            Suite::Order => "order",
        }
    }
}

fn init_thread_pool() {
    let Ok(raw) = std::env::var("JFLOW_THREADS") else { return };
    match raw.parse::<usize>() {
        Ok(k) if k >= 1 => {
            // build_global errs only if a pool already exists; that pool wins
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
        _ => eprintln!("ignoring JFLOW_THREADS={raw:?}: expected a positive integer"),
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let code = match cli.command {
        Cmd::Run { config, out } => commands::cmd_run(&config, &out),
        Cmd::Newton { config, out, warm_start } => {
            commands::cmd_newton(&config, &out, warm_start.as_deref())
        }
        Cmd::Check { config } => commands::cmd_check(&config),
        Cmd::Verify { suite, seed } => commands::cmd_verify(suite.name(), seed),
        Cmd::Compare { a, b, config } => commands::cmd_compare(&a, &b, &config),
    };
    ExitCode::from(code)
}
