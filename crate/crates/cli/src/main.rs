//! Command line driver for the space-time heat equation solver.
//!
//! Subcommands: `solve` runs the configured problem and writes the report,
//! solution and snapshots; `sweep` tabulates iterations, conditioning and
//! reference errors over a (K, nref) grid; `compare-cn` times the solver
//! against Crank-Nicolson stepping; `diag` prints conditioning indicators.
//! All take `--config <file>` plus overrides; without a config the built-in
//! reference problem runs. Exit codes: 0 on success (and convergence for
//! `solve`), 2 when `solve` stops at maxit unconverged, 1 on any error.

mod config;
mod expr;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ProblemConfig, Spacing};
use stheat::Error;

#[derive(Parser)]
#[command(name = "stheat", version, about = "Space-time Petrov-Galerkin solver for the heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Number of temporal elements.
    #[arg(long = "K", global = true)]
    num_elements: Option<usize>,

    /// Test mesh refinements (0 gives the square system).
    #[arg(long, global = true)]
    nref: Option<usize>,

    /// Relative residual tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Iteration cap.
    #[arg(long, global = true)]
    maxit: Option<usize>,

    /// Worker thread cap (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for random temporal meshes.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and write report, solution, snapshots.
    Solve,
    /// Iterations, conditioning and reference error over the (K, nref) grid.
    Sweep,
    /// Wall-clock and discrepancy comparison against Crank-Nicolson.
    CompareCn,
    /// Conditioning indicators of the configured system.
    Diag,
}

fn run(cli: &Cli) -> stheat::Result<u8> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }

    let mut cfg = match &cli.config {
        Some(path) => ProblemConfig::load(path)?,
        None => ProblemConfig::default(),
    };
    if let Some(k) = cli.num_elements {
        if matches!(cfg.spacing, Spacing::Explicit(_)) {
            return Err(Error::InvalidInput(
                "--K conflicts with an explicit node list".into(),
            ));
        }
        cfg.num_elements = k;
    }
    if let Some(nref) = cli.nref {
        cfg.nref = nref;
    }
    if let Some(tol) = cli.tol {
        cfg.tol = tol;
    }
    if let Some(maxit) = cli.maxit {
        cfg.maxit = maxit;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;

    std::fs::create_dir_all(&cli.out)?;
    // The effective configuration, canonical form, for reproducing the run.
    std::fs::write(cli.out.join("config.txt"), cfg.serialize())?;
    match cli.command {
        Command::Solve => {
            let converged = runner::run_solve(&cfg, &cli.out)?;
            Ok(if converged { 0 } else { 2 })
        }
        Command::Sweep => {
            runner::run_sweep(&cfg, &cli.out)?;
            Ok(0)
        }
        Command::CompareCn => {
            runner::run_compare_cn(&cfg, &cli.out)?;
            Ok(0)
        }
        Command::Diag => {
            runner::run_diag(&cfg, &cli.out)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
