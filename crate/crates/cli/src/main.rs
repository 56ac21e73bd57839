mod commands;
mod data;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Deep supervised hashing: pre-train, fine-tune, encode and evaluate.
#[derive(Debug, Parser)]
#[command(name = "deephash", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Softmax pre-training (stage 1) and hash-head initialisation (stage 2).
    Pretrain(PretrainArgs),
    /// Joint fine-tuning of features and hash head under the hashing loss.
    Finetune(FinetuneArgs),
    /// Encode a dataset split into a code database file.
    Encode(EncodeArgs),
    /// Hamming-ranking evaluation of query codes against database codes.
    Eval(EvalArgs),
    /// LSH or PCAH on features extracted from a stage-1 checkpoint.
    Baseline(BaselineArgs),
    /// Re-run the command recorded in a run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Query,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Lsh,
    Pcah,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetKind,
    /// Directory holding the MNIST IDX files or CIFAR-10 binary batches.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Use only the first N training images.
    #[arg(long)]
    pub train_limit: Option<usize>,
    /// Use only the first N query images.
    #[arg(long)]
    pub query_limit: Option<usize>,
    /// Synthetic data: number of classes.
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Synthetic data: training samples per class.
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    /// Synthetic data: query samples per class.
    #[arg(long, default_value_t = 10)]
    pub query_per_class: usize,
    /// Synthetic data: image side length.
    #[arg(long, default_value_t = 8)]
    pub side: usize,
    /// Synthetic data: per-pixel noise standard deviation.
    #[arg(long, default_value_t = 0.25)]
    pub spread: f64,
    /// Synthetic data: seed of the generator (independent of --seed).
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 200)]
    pub skip_max: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Epochs per window of the plateau test.
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Learning-rate decays before training stops.
    #[arg(long, default_value_t = 2)]
    pub max_decays: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Network architecture TOML; defaults to the built-in net for the dataset.
    #[arg(long)]
    pub net_config: Option<PathBuf>,
    #[arg(long, default_value_t = 24)]
    pub bits: usize,
    #[arg(long, default_value_t = 0.1)]
    pub stage2_eta: f64,
    #[arg(long, default_value_t = 20)]
    pub stage2_epochs: usize,
    /// Skip both stages and write a randomly initialised network.
    #[arg(long)]
    pub random_init: bool,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Checkpoint with a hash head, from `pretrain`.
    #[arg(long, required_unless_present = "random_init")]
    pub checkpoint: Option<PathBuf>,
    /// Start from random weights instead of a checkpoint.
    #[arg(long)]
    pub random_init: bool,
    #[arg(long)]
    pub net_config: Option<PathBuf>,
    #[arg(long, default_value_t = 24)]
    pub bits: usize,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum)]
    pub split: SplitArg,
    /// Expected bit count; must match the checkpoint's hash head.
    #[arg(long)]
    pub bits: Option<usize>,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    /// Output code database file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub database: PathBuf,
    /// Method name for the mAP table.
    #[arg(long, default_value = "deephash")]
    pub method: String,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    /// Stage-1 checkpoint whose features feed the baseline.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 24)]
    pub bits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match commands::run(cli.command, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
