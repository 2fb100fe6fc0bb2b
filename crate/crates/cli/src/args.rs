use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use earmetrics_core::dataset::Task;
use earmetrics_core::tabular::ModelKind;
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "earmetrics",
    version,
    about = "Age and gender classification from ear landmarks and images"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Validate a labels CSV against an image directory.
    Ingest(IngestArgs),
    /// Serve the landmark annotation API and UI assets.
    AnnotateServe(ServeArgs),
    /// Compute the 16 geometric features from landmark files.
    Extract(ExtractArgs),
    /// Write the 55 augmented variants of every image.
    Augment(AugmentArgs),
    /// Stratified subject-independent train/val/test split.
    Split(SplitArgs),
    /// Train a classifier on geometric features.
    Train(TrainArgs),
    /// Train the convolutional network with two-stage fine-tuning.
    Finetune(FinetuneArgs),
    /// Evaluate a trained model.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// CSV with columns subject_id, age, gender, image[, landmarks].
    #[arg(long)]
    pub labels: PathBuf,
    /// Directory the image and landmark columns are relative to
    /// [default: the CSV's directory].
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Write the validated records as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub images: PathBuf,
    /// Directory receiving `<image id>.json` landmark files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Built annotator UI; a minimal placeholder page is served without it.
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    /// A landmark JSON file or a directory of them.
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Allow coincident landmarks where only a distance becomes zero.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    /// Images, optionally grouped in one subdirectory per label.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the pixel-dropout variants.
    #[arg(long)]
    pub seed: u64,
    /// Manifest CSV [default: <out>/manifest.csv].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Square side to resize to before augmenting; 0 keeps the input size.
    #[arg(long, default_value_t = 256)]
    pub resize: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub task: Task,
    #[arg(long)]
    pub seed: u64,
    /// Manifest JSON [default: print only the summary].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub test_frac: f64,
    /// Fraction of the non-test remainder of each stratum.
    #[arg(long, default_value_t = 0.125)]
    pub val_frac: f64,
    /// Explicit `stratum=test:val` counts, e.g. `male=38:19`.
    #[arg(long, value_delimiter = ',')]
    pub counts_override: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct TabularData {
    /// Feature CSV produced by `extract`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub task: Task,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: TabularData,
    #[arg(long)]
    pub model: ModelKind,
    #[arg(long)]
    pub seed: u64,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Split manifest; without one the labels are split with `--seed`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Feature selection: none, mean (forest importance ≥ mean),
    /// reference (the six published features) or a numeric threshold.
    #[arg(long, default_value = "none")]
    pub select: String,
    /// Trees of the forest used for `--select`.
    #[arg(long, default_value_t = 1000)]
    pub select_trees: usize,
    #[arg(long, default_value_t = 1000)]
    pub trees: usize,
    #[arg(long, default_value_t = 250.0)]
    pub c: f64,
    /// RBF gamma [default: 1 / number of features].
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub svm_max_iter: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, value_delimiter = ',', default_value = "32,32,32")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FinetuneArgs {
    /// Target images, one subdirectory per class.
    #[arg(long)]
    pub target: PathBuf,
    /// Large in-domain image set for the first stage, one subdirectory per
    /// class; omitted means single-stage training.
    #[arg(long)]
    pub domain: Option<PathBuf>,
    /// Held-out target images for the reported accuracy.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Training log CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Square side images are resized to on load.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Five-crop training / center-crop evaluation size; 0 disables.
    #[arg(long, default_value_t = 56)]
    pub crop: usize,
    #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
    pub channels: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub domain_epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub target_epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Learning-rate multiplier of the replaced last layer.
    #[arg(long, default_value_t = 10.0)]
    pub head_multiplier: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Model file from `train` or checkpoint from `finetune`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, requires_all = ["labels", "task"])]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<Task>,
    /// Restrict tabular evaluation to one subset of this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    pub subset: String,
    /// Image directory (one subdirectory per class) for a checkpoint.
    #[arg(long, conflicts_with = "features")]
    pub images: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 56)]
    pub crop: usize,
}
