//! Batch front end for the weakkam toolkit.
//!
//! A run reads a TOML configuration, builds the model and discretization, executes one
//! pipeline stage and writes its artifacts (CSV fields, JSON report, SVG plots) followed by
//! `manifest.json`, which lists every artifact with its SHA-256 checksum.
//!
//! Exit codes: `0` success, `2` invalid configuration or failed assumption validation,
//! `3` solver or I/O failure.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{ConfigError, RunConfig};
pub use output::ArtifactEntry;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("error[E-CONFIG] {0}")]
    Config(#[from] ConfigError),
    #[error("error[E-IO] {context}: {message}")]
    Io { context: String, message: String },
    #[error("error[{code}] {message}")]
    Solver { code: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_INVALID,
            CliError::Io { .. } | CliError::Solver { .. } => EXIT_SOLVER,
        }
    }

    pub fn io(context: impl Into<String>, e: impl std::fmt::Display) -> Self {
        CliError::Io { context: context.into(), message: e.to_string() }
    }

    pub fn solver(code: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Solver { code, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "weakkam", version, about = "Discounted and critical Hamilton-Jacobi computations on grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file (TOML); may also be given positionally after the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides outputs.directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set grid.h=0.02`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads (falls back to WEAKKAM_THREADS, then to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for Mather-set vertex sampling (overrides seeds.mather).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Clone)]
pub struct ConfigPath {
    /// Configuration file (TOML).
    pub path: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Clone)]
pub enum Command {
    /// Check the standing assumptions and report Lagrangian bounds.
    Validate(ConfigPath),
    /// Critical value by bisection, cross-checked against the ergodic LP.
    Critical(ConfigPath),
    /// Intrinsic distance from a source point at the critical level.
    Distance {
        #[command(flatten)]
        config: ConfigPath,
        /// Source point, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        source: Vec<f64>,
    },
    /// Aubry set and cycle costs.
    Aubry(ConfigPath),
    /// Maximal discounted solution at one discount rate.
    Solve {
        #[command(flatten)]
        config: ConfigPath,
        #[arg(long)]
        lambda: f64,
    },
    /// Mather measure (ergodic LP), or the discounted measure at `--lambda` and `--z`.
    Mather {
        #[command(flatten)]
        config: ConfigPath,
        #[arg(long, requires = "z")]
        lambda: Option<f64>,
        /// Base point, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, requires = "lambda")]
        z: Option<Vec<f64>>,
    },
    /// Selected weak KAM solution by both estimators.
    Limit(ConfigPath),
    /// Full vanishing-discount study along the configured schedule.
    Study(ConfigPath),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Critical(_) => "critical",
            Command::Distance { .. } => "distance",
            Command::Aubry(_) => "aubry",
            Command::Solve { .. } => "solve",
            Command::Mather { .. } => "mather",
            Command::Limit(_) => "limit",
            Command::Study(_) => "study",
        }
    }

    fn config_path(&self) -> Option<&PathBuf> {
        match self {
            Command::Validate(c) | Command::Critical(c) | Command::Aubry(c) | Command::Limit(c) | Command::Study(c) => {
                c.path.as_ref()
            }
            Command::Distance { config, .. } | Command::Solve { config, .. } | Command::Mather { config, .. } => {
                config.path.as_ref()
            }
        }
    }

    /// Subcommand arguments recorded in the manifest.
    fn arguments(&self) -> Vec<String> {
        let join = |v: &[f64]| v.iter().map(|x| output::num(*x)).collect::<Vec<_>>().join(",");
        match self {
            Command::Distance { source, .. } => vec![format!("source={}", join(source))],
            Command::Solve { lambda, .. } => vec![format!("lambda={}", output::num(*lambda))],
            Command::Mather { lambda: Some(l), z: Some(z), .. } => {
                vec![format!("lambda={}", output::num(*l)), format!("z={}", join(z))]
            }
            _ => Vec::new(),
        }
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub outputs: Vec<ArtifactEntry>,
}

fn thread_count(cli: &Cli) -> Option<usize> {
    cli.threads.or_else(|| std::env::var("WEAKKAM_THREADS").ok().and_then(|v| v.trim().parse().ok()))
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> Result<RunSummary, CliError> {
    let path = cli
        .config
        .as_ref()
        .or(cli.command.config_path())
        .ok_or_else(|| ConfigError::new("config", "required (positional path or --config)"))?;
    let mut table = config::read_table(path)?;
    for o in &cli.overrides {
        config::apply_override(&mut table, o)?;
    }
    let base_dir = path.parent().map(PathBuf::from).unwrap_or_default();
    let mut cfg = RunConfig::from_table(&table, &base_dir)?;
    if let Some(out) = &cli.out {
        cfg.outputs.directory = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let mut recorded = table.clone();
    if let Some(toml::Value::Table(o)) = recorded.get_mut("outputs") {
        o.remove("directory");
    }
    let config_bytes = std::fs::read(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    let manifest = output::Manifest {
        tool: "weakkam".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: weakkam_core::VERSION.into(),
        command: cli.command.name().into(),
        arguments: cli.command.arguments(),
        config_file: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        config_sha256: output::sha256_hex(&config_bytes),
        resolved_config: serde_json::to_value(&recorded).map_err(|e| CliError::io("config", e))?,
        seed: cfg.seed,
    };
    let execute = || commands::execute(&cli.command, &cfg, manifest);
    match thread_count(cli) {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::io("thread pool", e))?
            .install(execute),
        _ => execute(),
    }
}

/// Parses `args` (including the program name) and runs; returns the process exit code.
pub fn run_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            log::info!("wrote {} artifacts to {}", summary.outputs.len() + 1, summary.out_dir.display());
            summary.exit_code
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
