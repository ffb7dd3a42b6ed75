mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] capkit::Error),
    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

macro_rules! via_core {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        })*
    };
}

via_core!(
    capkit::textproc::TextError,
    capkit::metrics::MetricError,
    capkit::audiofeat::AudioError,
    capkit::captioner::ModelError,
    capkit::decode::DecodeError,
    capkit::corpus::CorpusError
);

#[derive(Debug, Parser)]
#[command(name = "capkit", version, about = "Train, fine-tune, decode and evaluate caption models", args_override_self = true)]
struct Cli {
    /// Run data-parallel loops on one thread
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the five-clip synthetic dataset (WAV files plus captions.csv)
    Synth(SynthArgs),
    /// Caption statistics and phrase counts
    Stats(StatsArgs),
    /// Cross-entropy training with label smoothing
    Train(TrainArgs),
    /// Self-critical fine-tuning against a CIDEr-D reward
    RlFinetune(RlArgs),
    /// Caption clips with beam search
    Decode(DecodeArgs),
    /// Score predictions against references
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// file_name,caption_1..caption_5
    Clotho,
    /// audiocap_id,youtube_id,start_time,caption
    Audiocaps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Reward {
    Cider,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RefFormat {
    /// Pick by extension: .jsonl/.json as JSON lines, anything else as Clotho CSV
    Auto,
    Jsonl,
    Clotho,
    Audiocaps,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Caption file; repeat to merge several splits in order
    #[arg(long = "captions", required = true)]
    pub captions: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "clotho")]
    pub format: Format,
    /// Audio directory; defaults to the directory of each caption file
    #[arg(long)]
    pub audio_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "in the background")]
    pub phrase: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Run directory of a previous training run to continue from
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    /// Epochs between learning-rate decays after warm-up; 0 disables decay
    #[arg(long, default_value_t = 10)]
    pub decay_every: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.1)]
    pub eps_label_smoothing: f64,
    #[arg(long, value_enum, default_value = "on")]
    pub spec_augment: Switch,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 16)]
    pub context_dim: usize,
}

#[derive(Debug, Args)]
pub struct RlArgs {
    /// Run directory holding the starting checkpoint and vocabulary
    #[arg(long)]
    pub init_from: PathBuf,
    #[arg(long)]
    pub run_dir: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "cider")]
    pub reward: Reward,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1)]
    pub samples_per_clip: usize,
    #[arg(long, default_value_t = 22)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub run_dir: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    #[arg(long, default_value_t = 22)]
    pub max_len: usize,
    /// Predictions file (JSON lines); defaults to <run-dir>/reports/predictions.jsonl
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// JSON lines of {"id", "caption"}
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub references: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub references_format: RefFormat,
    /// JSON file with an externally computed SPICE score: {"corpus": x} or a bare number
    #[arg(long)]
    pub spice: Option<PathBuf>,
    /// Also write the report here (JSON when the extension is .json)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Stats(_) => "stats",
            Command::Train(_) => "train",
            Command::RlFinetune(_) => "rl-finetune",
            Command::Decode(_) => "decode",
            Command::Evaluate(_) => "evaluate",
        }
    }
}

fn main() -> ExitCode {
    let args = match config::expand_config_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("capkit: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let exec = if cli.sequential {
        capkit::Execution::Sequential
    } else {
        capkit::Execution::Parallel
    };
    let name = cli.command.name();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Stats(a) => commands::stats(&a),
        Command::Train(a) => commands::train(&a, exec),
        Command::RlFinetune(a) => commands::rl_finetune(&a, exec),
        Command::Decode(a) => commands::decode(&a, exec),
        Command::Evaluate(a) => commands::evaluate(&a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("capkit {name}: {e}");
            ExitCode::FAILURE
        }
    }
}
