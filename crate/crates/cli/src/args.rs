use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use signet::nets::{HeadKind, OptimizerKind, TrainConfig};
use signet::preprocess::SubtractorConfig;

#[derive(Debug, Parser)]
#[command(name = "signet", version, about = "Dynamic sign-language gesture recognition from frame sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the procedural gesture dataset and its manifest
    Synth(SynthArgs),
    /// Embed every clip of a manifest into the feature cache
    Featurize(FeaturizeArgs),
    /// Train one head and write a checkpoint plus its training history
    Train(TrainArgs),
    /// Evaluate a checkpoint and write metrics and confusion matrices
    Eval(EvalArgs),
    /// Train and evaluate a grid of sequence lengths x heads
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (frames under clips/, plus manifest.jsonl)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 10)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 5)]
    pub test_per_class: usize,
    /// Frame width and height in pixels
    #[arg(long, default_value_t = 48)]
    pub size: u32,
    #[arg(long, default_value_t = 28)]
    pub min_frames: usize,
    #[arg(long, default_value_t = 36)]
    pub max_frames: usize,
}

/// Dataset and feature options shared by every pipeline command.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset manifest (JSON lines)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory that frames_dir entries are relative to [default: the manifest's directory]
    #[arg(long)]
    pub root: Option<PathBuf>,
    /// Backbone: preset name, sidecar .json path, grid[:G[:S]] or mock:SEED:D
    #[arg(long, default_value = "grid")]
    pub backend: String,
    /// Use hash-derived mock features instead of a backbone (SEED:D)
    #[arg(long, value_name = "SEED:D")]
    pub mock_features: Option<String>,
    /// Directory holding <preset>.onnx and <preset>.sidecar.json
    #[arg(long, env = "SIGNET_MODEL_DIR", default_value = "models")]
    pub model_dir: PathBuf,
    /// Feature cache directory [default: <root>/.signet-cache]
    #[arg(long, env = "SIGNET_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Background-subtract frames (previous-frame differencing) before embedding
    #[arg(long)]
    pub preprocess: bool,
    /// Luma difference a pixel must exceed to count as foreground
    #[arg(long, default_value_t = 50)]
    pub threshold: u8,
    /// Median filter size applied to the foreground mask (odd)
    #[arg(long, default_value_t = 5)]
    pub blur_kernel: usize,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

impl DataArgs {
    pub fn subtractor(&self) -> Option<SubtractorConfig> {
        self.preprocess.then(|| SubtractorConfig {
            threshold: self.threshold,
            blur_kernel: self.blur_kernel,
            ..SubtractorConfig::default()
        })
    }
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OptimizerName {
    Adam,
    Sgd,
}

/// Training hyperparameters.
#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Minibatch size
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = OptimizerName::Adam)]
    pub optimizer: OptimizerName,
    /// MLP hidden layer widths
    #[arg(long, value_delimiter = ',', default_value = "512")]
    pub mlp_hidden: Vec<usize>,
    /// LSTM hidden state size
    #[arg(long, default_value_t = 256)]
    pub lstm_hidden: usize,
    /// Keep the learning rate fixed instead of halving it when the loss rises
    #[arg(long)]
    pub no_lr_halving: bool,
}

impl HyperArgs {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            optimizer: match self.optimizer {
                OptimizerName::Adam => OptimizerKind::adam(),
                OptimizerName::Sgd => OptimizerKind::Sgd,
            },
            seed: self.seed,
            mlp_hidden: self.mlp_hidden.clone(),
            lstm_hidden: self.lstm_hidden,
            halve_lr_on_increase: !self.no_lr_halving,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Frames sampled per clip
    #[arg(long, default_value_t = 12)]
    pub frames: usize,
    /// Classification head
    #[arg(long, default_value = "lstm")]
    pub heads: HeadKind,
    /// Output directory for model.ckpt, history.csv and train.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint written by `train`
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Which clips to evaluate
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    /// Output directory for metrics.json and the confusion files
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Sequence lengths to sweep
    #[arg(long, value_delimiter = ',', default_value = "2,4,12,24")]
    pub frames: Vec<usize>,
    /// Heads to sweep
    #[arg(long, value_delimiter = ',', default_value = "mlp,lstm")]
    pub heads: Vec<HeadKind>,
    /// Output directory for report.json, summary.csv and per-cell files
    #[arg(long)]
    pub out: PathBuf,
}
