//! Command-line front end: parse a config file, validate it against the
//! admissible parameter ranges, and dispatch the requested experiment.
//!
//! Exit codes: 0 success, 2 validation failure, 3 runtime failure.

use clap::{Args, Parser, Subcommand};
use moderate_core::config::{self, Experiment, RunConfig};
use moderate_core::runner;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "moderate",
    version,
    about = "Moderately interacting particle systems with environmental noise: simulation and convergence experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// Master seed (overrides the config; required if the config has none)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV results and the JSON run record
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: rayon's choice); outputs are identical at
    /// any thread count
    #[arg(long)]
    threads: Option<usize>,
    /// Enforce the hypothesis range of beta (default from config)
    #[arg(long, conflicts_with = "exploratory")]
    strict: bool,
    /// Allow beta outside the hypothesis range, flagged in outputs
    #[arg(long)]
    exploratory: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one particle-system configuration and export snapshots
    Simulate(RunArgs),
    /// Solve the limit equation on the grid
    Pde(RunArgs),
    /// Sweep N and measure distances of mollified empirical measures to the
    /// limit solution
    Converge(RunArgs),
    /// Compare synthesized noise covariance against quadrature
    NoiseCheck(RunArgs),
    /// Decay of the force covariance between two tagged particles
    CovDecay(RunArgs),
    /// Stochastic-convolution decay over an N sweep
    Zconv(RunArgs),
    /// Initial-data convergence rate zeta_N
    Zeta(RunArgs),
    /// Check a configuration and list every violation
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, conflicts_with = "exploratory")]
        strict: bool,
        #[arg(long)]
        exploratory: bool,
    },
}

fn strict_override(strict: bool, exploratory: bool) -> Option<bool> {
    if strict {
        Some(true)
    } else if exploratory {
        Some(false)
    } else {
        None
    }
}

fn load(path: &PathBuf) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    RunConfig::from_toml(&text).map_err(|e| e.to_string())
}

fn run_experiment(experiment: Experiment, args: &RunArgs) -> ExitCode {
    let mut cfg = match load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    cfg.experiment = experiment;
    let resolved = match config::validate(
        &cfg,
        args.seed,
        strict_override(args.strict, args.exploratory),
    ) {
        Ok(r) => r,
        Err(violations) => {
            eprintln!("configuration invalid ({} violations):", violations.len());
            for v in &violations {
                eprintln!("  - {v}");
            }
            return ExitCode::from(2);
        }
    };
    match runner::run(&resolved, &args.out, args.threads) {
        Ok(record) => {
            if record.status == "ok" {
                println!(
                    "{}: ok ({} files, {:.1}s) -> {}",
                    record.experiment,
                    record.files.len(),
                    record.wall_secs,
                    args.out.display()
                );
                ExitCode::SUCCESS
            } else {
                eprintln!(
                    "{}: failed: {}",
                    record.experiment,
                    record.error.as_deref().unwrap_or("unknown")
                );
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("runtime failure: {e}");
            ExitCode::from(3)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(a) => run_experiment(Experiment::Simulate, &a),
        Command::Pde(a) => run_experiment(Experiment::Pde, &a),
        Command::Converge(a) => run_experiment(Experiment::Converge, &a),
        Command::NoiseCheck(a) => run_experiment(Experiment::NoiseCheck, &a),
        Command::CovDecay(a) => run_experiment(Experiment::CovDecay, &a),
        Command::Zconv(a) => run_experiment(Experiment::Zconv, &a),
        Command::Zeta(a) => run_experiment(Experiment::Zeta, &a),
        Command::Validate {
            config: path,
            seed,
            strict,
            exploratory,
        } => {
            let cfg = match load(&path) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match config::validate(&cfg, seed, strict_override(strict, exploratory)) {
                Ok(resolved) => {
                    println!(
                        "ok: {} experiment, seed {}, N = {:?}",
                        resolved.experiment.name(),
                        resolved.seed,
                        resolved.n_list
                    );
                    ExitCode::SUCCESS
                }
                Err(violations) => {
                    eprintln!("configuration invalid ({} violations):", violations.len());
                    for v in &violations {
                        eprintln!("  - {v}");
                    }
                    ExitCode::from(2)
                }
            }
        }
    }
}
