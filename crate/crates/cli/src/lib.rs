//! `risksea` command line: one subcommand per pipeline stage. Stages talk to
//! each other only through files under the configured root, and each one
//! leaves a JSON manifest describing what it read and wrote.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod config;
pub mod manifest;
mod stages;

pub use config::{Mode, PipelineConfig};
pub use manifest::{FileDigest, Manifest};
pub use stages::{RiskModelFile, SplitFile};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Bad flags, bad config, or a referenced input that does not exist.
    Config(String),
    /// Inputs exist but their contents cannot be used.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) => m,
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self, stage: &str) -> String {
        let kind = match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
        };
        serde_json::json!({ "error": kind, "stage": stage, "message": self.message() }).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.message())
    }
}

impl std::error::Error for CliError {}

impl From<risksea::Error> for CliError {
    fn from(e: risksea::Error) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "risksea", about = "Transaction-graph embeddings and risk scoring pipeline")]
pub struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, short, global = true, default_value = "risksea.toml")]
    pub config: PathBuf,
    /// Degree of intra-stage parallelism; never changes deterministic outputs.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SnapshotArg {
    /// Snapshot id; defaults to the latest ingested snapshot.
    #[arg(long)]
    pub snapshot: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Append an edge-list CSV to the edge log as a new snapshot.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to latest + 1.
        #[arg(long)]
        snapshot: Option<u64>,
    },
    /// Build the partitioned top-K neighbor store of a snapshot.
    Snapshot(SnapshotArg),
    /// Addresses active between two snapshots.
    Delta {
        #[arg(long)]
        prev: Option<u64>,
        #[arg(long)]
        cur: Option<u64>,
    },
    /// Biased random walks over a snapshot's store.
    Walk {
        #[command(flatten)]
        at: SnapshotArg,
        /// Walk only from nodes active since this snapshot.
        #[arg(long)]
        delta_from: Option<u64>,
    },
    /// Train embeddings from scratch on a snapshot's full walk corpus.
    TrainEmbed(SnapshotArg),
    /// Delta nodes, delta walks, warm-started retraining.
    IncrementEmbed {
        #[command(flatten)]
        at: SnapshotArg,
        /// Snapshot of the model to start from; defaults to snapshot - 1.
        #[arg(long)]
        prev: Option<u64>,
    },
    /// `walk` + `train-embed` in bootstrap mode, `increment-embed` in increment mode.
    Embed(SnapshotArg),
    /// Core-set training plus one-hop embedding propagation.
    Propagate(SnapshotArg),
    /// Behavioral features joined with an embedding table.
    Features {
        #[command(flatten)]
        at: SnapshotArg,
        /// `dynamic` or `propagated`.
        #[arg(long, default_value = "dynamic")]
        embeddings: String,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Train the random-forest risk classifier.
    TrainRisk {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// `all`, `behavioral` or `embedding`.
        #[arg(long, default_value = "all")]
        feature_set: String,
        /// Output name; defaults to the feature set.
        #[arg(long)]
        name: Option<String>,
    },
    /// Risk scores in [0, 1] for every row of a feature file.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precision, recall, F1 and PR curve of a score file.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Restrict to the held-out side of this split.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value_t = risksea::riskmodel::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic evolving graph and its labels.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Held-out metrics over a grid of walk hyperparameters.
    Sweep {
        #[command(flatten)]
        at: SnapshotArg,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [3usize, 6, 9, 10])]
        num_walks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8, 10, 16])]
        walk_length: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 1.0, 2.0, 4.0])]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 1.0, 2.0, 4.0])]
        q: Vec<f64>,
        #[arg(long, default_value = "all")]
        feature_set: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    pub fn stage_name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Snapshot(_) => "snapshot",
            Command::Delta { .. } => "delta",
            Command::Walk { .. } => "walk",
            Command::TrainEmbed(_) => "train-embed",
            Command::IncrementEmbed { .. } => "increment-embed",
            Command::Embed(_) => "embed",
            Command::Propagate(_) => "propagate",
            Command::Features { .. } => "features",
            Command::TrainRisk { .. } => "train-risk",
            Command::Score { .. } => "score",
            Command::Evaluate { .. } => "evaluate",
            Command::Synth { .. } => "synth",
            Command::Sweep { .. } => "sweep",
        }
    }
}

/// Run one parsed invocation; returns the manifests written.
pub fn run(cli: &Cli) -> Result<Vec<Manifest>, CliError> {
    if cli.workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let cfg = PipelineConfig::load(&cli.config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| stages::dispatch(&cfg, cli.workers, &cli.command))
}

/// Parse `args` (including the program name) and run.
pub fn run_args<I, T>(args: I) -> Result<Vec<Manifest>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string().lines().next().unwrap_or("").to_string()))?;
    run(&cli)
}
