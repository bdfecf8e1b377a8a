//! `rfne`: random-forest node embeddings for tabular data.
//!
//! Reports go to stdout, errors to stderr. Exit codes: 0 success, 2
//! configuration error, 3 data error, 4 numeric failure.

mod commands;
mod config;
mod fetch;
mod report;
mod rulefile;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rfne_core::Error;

use commands::Method;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "rfne", version, about = "Random-forest node embeddings for tabular data")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores). Outputs do
    /// not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Download a benchmark dataset and verify its checksum (cache-first)
    Fetch {
        /// Dataset name; available: bank-marketing
        dataset: String,
        /// Directory for downloaded files (falls back to RFNE_DATA_DIR, then "data")
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Fit the embedding pipeline on the whole dataset and save the model
    Train {
        /// Run-configuration file
        #[arg(long)]
        config: PathBuf,
        /// Model output path (default: <output dir>/model.rfne)
        #[arg(long)]
        model: Option<PathBuf>,
        /// Override the master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score methods on a stratified train/test split
    Evaluate {
        /// Run-configuration file
        #[arg(long)]
        config: PathBuf,
        /// Score a single method instead of all four
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Override the master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated grid search on the training split
    Gridsearch {
        /// Run-configuration file
        #[arg(long)]
        config: PathBuf,
        /// Override the gridsearch seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discover a segment rule for a column of the data
    Discover {
        /// Run-configuration file
        #[arg(long)]
        config: PathBuf,
        /// Reuse a trained model instead of fitting one around the target
        #[arg(long)]
        model: Option<PathBuf>,
        /// Override the discovery seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply saved rule files (conjunction) and summarize the segment
    Apply {
        /// Run-configuration file
        #[arg(long)]
        config: PathBuf,
        /// Rule file; repeat to intersect several rules
        #[arg(long, required = true)]
        rule: Vec<PathBuf>,
        /// Override the output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Io(_) | Error::CorruptModel(_) | Error::ModelVersion { .. } => 3,
        Error::Numeric(_) => 4,
    }
}

fn run(cli: Cli) -> rfne_core::Result<()> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(Error::config("--workers must be at least 1".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::config(format!("cannot size the worker pool: {e}")))?;
    }
    match cli.command {
        Cmd::Fetch { dataset, data_dir } => fetch::cmd_fetch(&dataset, data_dir),
        Cmd::Train { config, model, seed, out } => {
            commands::cmd_train(&RunConfig::from_file(&config)?, model, seed, out)
        }
        Cmd::Evaluate { config, method, seed, out } => {
            commands::cmd_evaluate(&RunConfig::from_file(&config)?, method, seed, out)
        }
        Cmd::Gridsearch { config, seed, out } => {
            commands::cmd_gridsearch(&RunConfig::from_file(&config)?, seed, out)
        }
        Cmd::Discover { config, model, seed, out } => {
            commands::cmd_discover(&RunConfig::from_file(&config)?, model, seed, out)
        }
        Cmd::Apply { config, rule, out } => {
            commands::cmd_apply(&RunConfig::from_file(&config)?, &rule, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code(&error))
        }
    }
}
