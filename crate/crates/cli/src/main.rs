//! `rkhs`: runs kernel ridge experiments and writes CSV, JSON and SVG output.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

const THREADS_VAR: &str = "RKHS_THREADS";

#[derive(Parser)]
#[command(name = "rkhs", version, about = "Kernel ridge regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep over sample sizes described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory; overrides `outputs` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized check of (λ+K)⁻¹K(λ+K)⁻¹ ≤ 1/(4λ) over PSD matrices.
    Lemma2 {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 20)]
        max_dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "rkhs-out")]
        out: PathBuf,
    },
    /// One n = 100 replication of the canonical scenario, plotted.
    Demo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "rkhs-out")]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<()> {
    let threads = match std::env::var(THREADS_VAR) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .with_context(|| format!("{THREADS_VAR} must be a nonnegative integer, got {v:?}"))?,
        _ => 0,
    };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("cannot configure thread pool")?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match cli.command {
        Command::Run { config, out } => commands::run(&config, out.as_deref()),
        Command::Lemma2 {
            count,
            max_dim,
            seed,
            out,
        } => commands::lemma2(count, max_dim, seed, &out),
        Command::Demo { seed, out } => commands::demo(seed, &out),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
