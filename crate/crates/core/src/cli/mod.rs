//! The `xlnav` command line. Every command writes into its own output
//! directory and finishes with a `manifest.json` holding the resolved
//! configuration and a hash of every file it wrote.

mod commands;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::agent::AgentError;
use crate::lang::LangError;
use crate::metrics::MetricsError;
use crate::trainer::TrainerError;
use crate::world::WorldError;

pub use manifest::{
    sha256_hex, verify_manifest, ManifestEntry, OutputDir, RunManifest, MANIFEST_FILE,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("output directory {} is not empty; pass --force to overwrite", .0.display())]
    OutputExists(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("manifest check failed: {0}")]
    Manifest(String),
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl CliError {
    /// Stable short name used in the error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::OutputExists(_) => "output_exists",
            CliError::Io { .. } => "io",
            CliError::Json(_) => "json",
            CliError::Manifest(_) => "manifest",
            CliError::Trainer(TrainerError::UnknownRegime(_)) => "unknown_regime",
            CliError::Trainer(TrainerError::RegimeMismatch { .. }) => "regime_mismatch",
            CliError::Trainer(TrainerError::Config(_)) => "config",
            CliError::Trainer(TrainerError::Checkpoint(_)) => "checkpoint",
            CliError::Trainer(_) => "trainer",
            CliError::Agent(_) => "agent",
            CliError::Lang(_) => "data",
            CliError::World(_) => "world",
            CliError::Metrics(_) => "metrics",
        }
    }

    /// One-line JSON object for stderr.
    pub fn error_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "xlnav",
    version,
    about = "Synthetic cross-lingual navigation benchmark and agents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one world and write it as JSON.
    GenWorld(GenWorldArgs),
    /// Generate worlds and the train / val-seen / val-unseen splits.
    GenData(GenDataArgs),
    /// Train one regime over a list of seeds.
    Train(TrainArgs),
    /// Score a checkpoint on validation splits.
    Eval(EvalArgs),
    /// Zero-shot comparison of train-an, train-mt, test-mt and xli.
    ZeroShot(ExperimentArgs),
    /// XLI and annotated-target baselines across annotation coverage levels.
    TransferSweep(SweepArgs),
    /// Annotated versus translated target data with a scratch (and
    /// optionally masked-token pretrained) encoder.
    EncoderAblation(AblationArgs),
    /// Per-timestep gate weights and attention of one XLI episode.
    Inspect(InspectArgs),
    /// Instruction length and clause-count histograms.
    CorpusStats(CorpusStatsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite files in a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GenWorldArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub viewpoints: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    /// Dataset config JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worlds shared by train and val-seen.
    #[arg(long)]
    pub worlds: Option<usize>,
    /// Worlds reserved for val-unseen.
    #[arg(long)]
    pub unseen_worlds: Option<usize>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub val_seen: Option<usize>,
    #[arg(long)]
    pub val_unseen: Option<usize>,
    /// Fraction of training trajectories with annotated target instructions.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Skip filling the machine-translation cache.
    #[arg(long)]
    pub no_mt: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Training config JSON; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub regime: Option<String>,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Not needed for `--regime teacher-oracle`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub regime: String,
    /// One of train, val_seen, val_unseen; both validation splits when absent.
    #[arg(long)]
    pub split: Option<String>,
    /// Label for the seed column.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::agent::MAX_ACTIONS)]
    pub max_actions: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// gen-data directory whose generating config is reused; the built-in
    /// desk dataset when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Comma-separated coverage levels, multiples of 0.1.
    #[arg(long)]
    pub epsilons: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct AblationArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Add the masked-token pretrained encoder variant.
    #[arg(long)]
    pub pretrain: bool,
    #[arg(long)]
    pub pretrain_steps: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Trajectory id (`path_id`) to roll out.
    #[arg(long)]
    pub episode_id: u64,
    /// Which of the trajectory's instruction pairs to use.
    #[arg(long, default_value_t = 0)]
    pub instruction: usize,
    #[arg(long, default_value = "val_unseen")]
    pub split: String,
    #[arg(long, default_value_t = crate::agent::MAX_ACTIONS)]
    pub max_actions: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusStatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Runs one parsed command; `args` is recorded in the manifest.
pub fn run(cli: &Cli, args: &[String]) -> Result<RunManifest, CliError> {
    use commands::*;
    match &cli.command {
        Command::GenWorld(a) => gen_world(a, args),
        Command::GenData(a) => gen_data(a, args),
        Command::Train(a) => train_cmd(a, args),
        Command::Eval(a) => eval_cmd(a, args),
        Command::ZeroShot(a) => zero_shot_cmd(a, args),
        Command::TransferSweep(a) => sweep_cmd(a, args),
        Command::EncoderAblation(a) => ablation_cmd(a, args),
        Command::Inspect(a) => inspect_cmd(a, args),
        Command::CorpusStats(a) => corpus_stats_cmd(a, args),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from_args(args: &[String]) -> Result<RunManifest, CliError> {
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(&cli, args)
}
