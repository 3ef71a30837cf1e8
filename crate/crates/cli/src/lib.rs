//! Command-line front end: configuration ingestion, subcommand dispatch and
//! persistence of CSV tables with a JSON run manifest.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use optibind_core::Error as CoreError;
use thiserror::Error;

use config::RunConfig;
use output::{write_tables, Manifest, CSV_SCHEMA_VERSION, MANIFEST_SCHEMA_VERSION};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerical tolerance: {0}")]
    Tolerance(String),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Tolerance(_) => EXIT_TOLERANCE,
            _ => 1,
        }
    }

    pub fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Infeasible(_) => Some(
                "choose measurement.gamma_rad_per_s inside the reported interval, or raise the local recoil rates d11/d22",
            ),
            _ => None,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { .. } | CoreError::Domain(_) => CliError::Config(e.to_string()),
            CoreError::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            CoreError::Accuracy { .. }
            | CoreError::TruncationLeak { .. }
            | CoreError::NotPositive { .. }
            | CoreError::StepSize { .. } => CliError::Tolerance(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "optibind", version, about = "Linearized optical binding of two levitated nanoparticles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "optibind-out")]
    pub out: PathBuf,
    /// Worker threads (default: all logical CPUs).
    #[arg(long, env = "OPTIBIND_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coupling and diffusion rates with regime flags.
    Rates(CommonArgs),
    /// Regime map over (φ, kd) or PT phase diagram over (g_a, δω).
    PhaseDiagram(CommonArgs),
    /// Gaussian moment evolution.
    Evolve(CommonArgs),
    /// Langevin, homodyne or feed-forward trajectory ensembles.
    Trajectories(CommonArgs),
    /// Modulated-phase squeezing of the difference mode.
    Squeeze(CommonArgs),
    /// Stationary log-negativity over random far-field configurations.
    Entanglement(CommonArgs),
    /// Common and differential recoil heating rates.
    Reheating(CommonArgs),
    /// Exceptional points located numerically against the closed form.
    EpScan(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Rates(_) => "rates",
            Command::PhaseDiagram(_) => "phase-diagram",
            Command::Evolve(_) => "evolve",
            Command::Trajectories(_) => "trajectories",
            Command::Squeeze(_) => "squeeze",
            Command::Entanglement(_) => "entanglement",
            Command::Reheating(_) => "reheating",
            Command::EpScan(_) => "ep-scan",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Rates(a)
            | Command::PhaseDiagram(a)
            | Command::Evolve(a)
            | Command::Trajectories(a)
            | Command::Squeeze(a)
            | Command::Entanglement(a)
            | Command::Reheating(a)
            | Command::EpScan(a) => a,
        }
    }
}

/// Runs one subcommand and returns the process exit code. Tolerance failures
/// detected after the outputs are complete still write every file.
pub fn run(cli: &Cli) -> Result<i32, CliError> {
    let start = Instant::now();
    let args = cli.command.args();
    let (cfg, hash) = RunConfig::load(&args.config)?;
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let threads = match args.threads {
        Some(0) => return Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let outcome = pool.install(|| commands::dispatch(&cli.command, &cfg, seed, &hash))?;
    let mut files = write_tables(&args.out, &outcome.tables, &hash)?;
    for (name, text) in &outcome.documents {
        std::fs::write(args.out.join(name), text)?;
        files.push(output::FileEntry { path: name.clone(), sha256: output::sha256_hex(text.as_bytes()), rows: 0 });
    }
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        csv_schema_version: CSV_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: cli.command.name().to_string(),
        config_sha256: hash,
        seed,
        threads,
        config: cfg,
        files,
        summary: outcome.summary,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    std::fs::write(args.out.join("manifest.json"), manifest.to_json()?)?;
    print!("{}", outcome.report);
    match outcome.tolerance_failure {
        Some(msg) => {
            eprintln!("optibind: numerical tolerance: {msg}");
            Ok(EXIT_TOLERANCE)
        }
        None => Ok(0),
    }
}
