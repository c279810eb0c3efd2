//! Experiment runner for the quantum-graph spectral laboratory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure
//! (including failed identity checks in `validate`).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{cmd_bands, cmd_spectrum, cmd_sweep, cmd_validate, RunError};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "qglab",
    about = "Band spectra, eigenfunction statistics and quantum-variance experiments for equilateral quantum graphs on regular graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan the λ-range: band table, Dirichlet set, density profiles.
    Bands(RunArgs),
    /// Band spectrum of one graph with Kirchhoff residuals.
    Spectrum(RunArgs),
    /// Quantum-variance convergence sweep over ascending sizes.
    Sweep(RunArgs),
    /// Run the exact-identity suite at the configured tolerances.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (flat `key = value` format).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `run.out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Shared grid override (overrides `run.grid_n`).
    #[arg(long)]
    grid_n: Option<usize>,
    /// Seed override (overrides `graph.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (overrides `run.threads`).
    #[arg(long)]
    threads: Option<usize>,
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf), RunError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        RunError::Config(config::ConfigError {
            field: "config".into(),
            message: format!("cannot read '{}': {e}", args.config.display()),
        })
    })?;
    let base = args.config.parent().unwrap_or(std::path::Path::new("."));
    let mut cfg = ExperimentConfig::parse(&text, base)?;
    if let Some(g) = args.grid_n {
        cfg.grid_n = g;
        if g == 0 || g % 2 != 0 {
            return Err(RunError::Config(config::ConfigError {
                field: "run.grid_n".into(),
                message: format!("grid size must be even and positive, got {g}"),
            }));
        }
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    Ok((cfg, out))
}

fn run() -> Result<(), RunError> {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Bands(a) | Command::Spectrum(a) | Command::Sweep(a) | Command::Validate(a) => a,
    };
    let (cfg, out) = load(args)?;
    if let Some(t) = cfg.threads {
        // ignore the error if a global pool already exists (tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Bands(_) => cmd_bands(&cfg, &out),
        Command::Spectrum(_) => cmd_spectrum(&cfg, &out),
        Command::Sweep(_) => cmd_sweep(&cfg, &out),
        Command::Validate(_) => cmd_validate(&cfg, &out),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
