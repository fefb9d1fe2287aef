//! `hmlab`: configuration-driven experiment runner.
//!
//! `hmlab run --config <path> [--seed S] [--out DIR]` executes one named
//! experiment and writes a JSON summary plus CSV detail files; `hmlab list`
//! prints the registry. Exit codes: 0 on completion, 2 on a failed
//! precondition, 3 on a config error, 1 otherwise.
//!
//! `HMLAB_THREADS` caps the worker thread count; execution is currently
//! serial (deterministic by construction), so any cap >= 1 is honored.

use clap::{Parser, Subcommand};
use hmlab_cli::config::ExperimentConfig;
use hmlab_cli::experiments::{self, ExperimentError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hmlab", about = "numerical laboratory experiment runner", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config.
    Run {
        #[arg(long)]
        config: String,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<String>,
    },
    /// List the registered experiments.
    List,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::List => {
            for (name, desc) in experiments::registry() {
                println!("{name:<16} {desc}");
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, seed, out } => run(&config, seed, out),
    }
}

fn run(config_path: &str, seed: Option<u64>, out: Option<String>) -> ExitCode {
    if let Err(e) = thread_cap() {
        eprintln!("config error: {e}");
        return ExitCode::from(3);
    }
    let mut cfg = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(3);
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = Some(o);
    }
    let out_dir = PathBuf::from(cfg.output_dir.clone().unwrap_or_else(|| "hmlab-out".into()));

    let started = std::time::Instant::now();
    match experiments::run(&cfg) {
        Ok(bundle) => match bundle.write(&out_dir) {
            Ok(files) => {
                // timing goes to stderr only; report files stay byte-stable
                eprintln!(
                    "{}: wrote {} file(s) to {} in {:.2}s",
                    cfg.experiment,
                    files.len(),
                    out_dir.display(),
                    started.elapsed().as_secs_f64()
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("failed to write reports: {e}");
                ExitCode::from(1)
            }
        },
        Err(ExperimentError::Precondition(m)) => {
            eprintln!("precondition failed: {m}");
            ExitCode::from(2)
        }
        Err(ExperimentError::Failed(m)) => {
            eprintln!("experiment failed: {m}");
            ExitCode::from(1)
        }
    }
}

/// Validates the optional thread cap. Execution is serial, so the cap only
/// needs to be a positive integer to be honored.
fn thread_cap() -> Result<usize, String> {
    match std::env::var("HMLAB_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(format!("HMLAB_THREADS = {v:?} is not a positive integer")),
        },
    }
}
