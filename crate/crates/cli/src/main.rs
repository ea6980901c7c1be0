//! `picard`: config-driven driver for the MLP solver and network compiler.
//!
//! Every subcommand reads a TOML run configuration, writes its artifacts
//! (CSV tables and JSON-lines records) into the output directory and echoes
//! the JSON records to stdout. Exit status is 0 on success, 1 when a
//! declared threshold fails and 2 for configuration errors.

mod commands;
mod output;
mod run_config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use commands::Context;
use output::Artifacts;
use run_config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("threshold failed: {0}")]
    Threshold(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("run failed: {0}")]
    Run(picard_core::Error),
}

impl From<picard_core::Error> for CliError {
    fn from(e: picard_core::Error) -> Self {
        use picard_core::Error as E;
        match e {
            E::Config(_) | E::Shape(_) | E::InvalidArgument(_) | E::Serialization(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Run(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Threshold(_) | CliError::Io(_) | CliError::Run(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "picard", version, about = "Multilevel Picard PIDE solver and ReLU network compiler")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config. Required one way or the other.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Omit timestamps and wall times so reruns are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Artifact directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Per-run overrides of the subcommand table.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t: Option<f64>,
    /// Start point as a comma-separated list.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Option<Vec<f64>>,
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the MLP estimator.
    Solve {
        #[command(flatten)]
        overrides: Overrides,
        /// Also write the first terminal trajectory to trajectory.csv.
        #[arg(long)]
        dump_path: bool,
    },
    /// RMSE table against the model's closed-form benchmark.
    Convergence {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compile one scenario of the estimator into a ReLU network.
    CompileDnn {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compare the compiled network with the estimator pointwise.
    VerifyEquivalence {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Depth, width and parameter counts of compiled networks.
    CountParams,
    /// First draws of one random stream.
    DumpStreams {
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<String>,
        #[arg(long)]
        purpose: Option<String>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Sample the Lipschitz and growth conditions.
    CheckAssumptions,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let config = RunConfig::load(&path)?;
    let seed = cli
        .seed
        .or(config.seed)
        .ok_or_else(|| CliError::Config("seed is missing: pass --seed or set `seed` in the config".into()))?;
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {w} workers: {e}")))?;
    }
    let model = config.model.build()?;
    let dir = cli
        .out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("picard-out"));
    let ctx = Context {
        model,
        seed,
        out: Artifacts::new(dir, cli.deterministic)?,
        config,
    };
    match cli.command {
        Command::Solve { overrides, dump_path } => commands::solve(&ctx, &overrides, dump_path),
        Command::Convergence { overrides } => commands::convergence(&ctx, &overrides),
        Command::CompileDnn { overrides } => commands::compile_dnn(&ctx, &overrides),
        Command::VerifyEquivalence { overrides } => commands::verify(&ctx, &overrides),
        Command::CountParams => commands::count_params(&ctx),
        Command::DumpStreams { theta, purpose, count } => commands::dump_streams(&ctx, theta, purpose, count),
        Command::CheckAssumptions => commands::check_assumptions(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("picard: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
