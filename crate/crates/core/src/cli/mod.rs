//! Command-line front end: `train`, `hpo`, `ablate` and `inspect-gates`.
//!
//! Every command writes under `<output>/<command>/<run-id>/`, where the
//! output root comes from `--output`, then `TABNN_OUTPUT_DIR`, then `runs`,
//! and the run id is a content hash of the command's inputs. Result files
//! carry no timestamps; wall-clock data goes to `metadata.json`.
//!
//! Exit codes: 0 ok, 1 runtime failure, 2 usage or validation error.

mod commands;
mod source;

use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::N_FOLDS;
use crate::error::Error;
use crate::models::Family;

pub use commands::{AblationRun, RunResult, StudySummary};
pub use source::DataRef;

pub const OUTPUT_ENV: &str = "TABNN_OUTPUT_DIR";
pub const DEFAULT_SEED: u64 = 20210;

#[derive(Debug, Parser)]
#[command(name = "tabular-nn", version, about = "MLP+, PNN and AutoInt for tabular data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output root (default: $TABNN_OUTPUT_DIR, then ./runs).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads for folds, seeds and trials.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train with fixed hyperparameters and write checkpoints.
    Train(TrainArgs),
    /// Search the hyperparameter grid per fold.
    Hpo(HpoArgs),
    /// Run the skip/gate ablation scenarios.
    Ablate(AblateArgs),
    /// Report leaky-gate passage for a trained MLP+ checkpoint.
    InspectGates(InspectArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Registry dataset name(s), comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "csv")]
    pub dataset: Vec<String>,
    /// A CSV file instead of a registry entry.
    #[arg(long, requires = "label")]
    pub csv: Option<PathBuf>,
    /// Label column of `--csv`.
    #[arg(long)]
    pub label: Option<String>,
    /// Positive class value of `--csv`.
    #[arg(long, default_value = "1")]
    pub positive: String,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    #[arg(long)]
    pub no_header: bool,
    /// Registry file (default: the bundled data/registry.json).
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Overrides the registry batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Overrides the registry ghost batch size.
    #[arg(long)]
    pub ghost_size: Option<usize>,
}

/// `all` or a comma-separated list of fold indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Folds(pub Vec<usize>);

impl FromStr for Folds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(Folds((0..N_FOLDS).collect()));
        }
        let mut out = Vec::new();
        for part in s.split(',') {
            let k: usize = part.trim().parse().map_err(|_| format!("bad fold {part:?}"))?;
            if k >= N_FOLDS {
                return Err(format!("fold {k} is outside 0..{N_FOLDS}"));
            }
            if !out.contains(&k) {
                out.push(k);
            }
        }
        Ok(Folds(out))
    }
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    /// Fold indices or `all`.
    #[arg(long, alias = "fold", default_value = "0")]
    pub folds: Folds,
    /// Seeds, comma separated; each seed reshuffles the folds.
    #[arg(long, alias = "seed", value_delimiter = ',', default_value = "20210")]
    pub seeds: Vec<u64>,
    /// Epoch cap.
    #[arg(long, default_value_t = crate::training::MAX_EPOCHS)]
    pub max_epochs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Hyperparameter JSON: `{"model": {...}, "lr": 0.01, "lr_step": 10}`.
    #[arg(long)]
    pub config: Vec<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_step: Option<usize>,
    /// MLP+ only: feed numeric columns to the gates without embedding.
    #[arg(long)]
    pub raw_numeric: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub family: Option<Family>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerArg {
    Random,
    Neighbor,
}

#[derive(Debug, Clone, Args)]
pub struct HpoArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Families to tune, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub family: Vec<Family>,
    #[arg(long, default_value_t = crate::hpo::StudyOptions::DEFAULT_TRIALS)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = SamplerArg::Random)]
    pub sampler: SamplerArg,
    /// Random trials before the neighbour sampler starts.
    #[arg(long, default_value_t = 5)]
    pub startup: usize,
    /// MLP+ only: feed numeric columns to the gates without embedding.
    #[arg(long)]
    pub raw_numeric: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Families to ablate (default: those named by --config files, else all).
    #[arg(long, value_delimiter = ',')]
    pub family: Vec<Family>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset and fold default to the ones recorded next to the checkpoint.
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Drop the exactly-0% columns, refit and compare.
    #[arg(long)]
    pub apply_drops: bool,
    #[arg(long, default_value_t = 4096)]
    pub chunk: usize,
}

/// A failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn parts(&self) -> (&'static str, &str) {
        match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Runtime(m) => ("runtime", m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::OutOfSpace { .. } | Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Output root: `--output`, then the environment, then `runs`.
pub fn output_root(flag: Option<&PathBuf>) -> PathBuf {
    flag.cloned()
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// First 16 hex digits of the SHA-256 of the value's JSON.
pub fn run_id<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable");
    let digest = Sha256::digest(&json);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let (kind, message) = e.parts();
            eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let root = output_root(cli.output.as_ref());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Train(a) => commands::cmd_train(a, &root).map(|_| ()),
        Command::Hpo(a) => commands::cmd_hpo(a, &root, cli.jobs).map(|_| ()),
        Command::Ablate(a) => commands::cmd_ablate(a, &root).map(|_| ()),
        Command::InspectGates(a) => commands::cmd_inspect_gates(a, &root).map(|_| ()),
    })
}
