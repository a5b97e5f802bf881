mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;
use crate::output::OutDir;

#[derive(Parser)]
#[command(name = "tunnelgrid", version, about = "Grid solver for configurational tunneling systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for grid sweeps and matrix products.
    #[arg(long, global = true, env = "TUNNELGRID_THREADS", value_name = "N")]
    threads: Option<usize>,
    /// Start-vector seed; overrides `solver.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Lowest levels, labels and tunnel splitting of one case.
    Solve,
    /// Splitting against the composite-coordinate mass.
    SweepMass,
    /// Splitting in each listed subspace.
    Reduce,
    /// Quench strain and a biased two-site scan.
    Strain,
    /// Four-level-system spectrum, ring model or grid solve.
    Fls,
    /// TLS density from a hydrogen density and a splitting width.
    Density,
    /// Parse a sampled dataset and report its grid and minima.
    IngestCheck,
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut loaded = config::load(path)?;
    if let Some(seed) = cli.seed {
        loaded.config.solver.seed = Some(seed);
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Threads("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Threads(e.to_string()))?;
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| loaded.config.output.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `output`".into()))?;
    // The hash names the effective inputs, so a seed override changes it.
    let hash = match cli.seed {
        Some(s) => config::sha256_hex(format!("{}+seed={s}", loaded.hash).as_bytes()),
        None => loaded.hash.clone(),
    };
    let out = OutDir::new(dir, cli.force, hash);
    match cli.command {
        Command::Solve => commands::solve(&loaded, &out),
        Command::SweepMass => commands::sweep(&loaded, &out),
        Command::Reduce => commands::reduce(&loaded, &out),
        Command::Strain => commands::strain(&loaded, &out),
        Command::Fls => commands::fls(&loaded, &out),
        Command::Density => commands::density(&loaded, &out),
        Command::IngestCheck => commands::ingest_check(&loaded, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let line = serde_json::json!({ "error": e.code(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(1)
        }
    }
}
