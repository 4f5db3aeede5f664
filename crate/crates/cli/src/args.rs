//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use promptprint::dataset::Origin;
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "promptprint",
    version,
    about = "Detect, attribute and analyze generated images"
)]
pub struct Cli {
    /// Worker threads for parallel stages (default: one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Train a binary fake/real detector.
    TrainDetector(TrainDetectorArgs),
    /// Train a four-class source attributor.
    TrainAttributor(TrainAttributorArgs),
    /// Classify images as fake or real.
    Detect(DetectArgs),
    /// Attribute images to a source, or sweep the routing threshold.
    Attribute(AttributeArgs),
    /// Cross-dataset evaluation and training-size ablation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Average Fourier spectrum of one image source.
    Fingerprint(FingerprintArgs),
    /// Prompt-side analyses.
    #[command(subcommand)]
    PromptAnalyze(AnalyzeCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    ImageOnly,
    Hybrid,
}

impl From<ModeArg> for promptprint::pipeline::Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ImageOnly => Self::ImageOnly,
            ModeArg::Hybrid => Self::Hybrid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskArg {
    Detection,
    Attribution,
}

pub fn parse_origin(s: &str) -> Result<Origin, String> {
    s.parse()
}

/// Optimizer and architecture knobs shared by every training path.
#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainParams {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Encoder backend; required for hybrid mode.
    #[arg(long)]
    pub backend: Option<String>,
    /// Seed for sampling, initialization and shuffling.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Cap on the L2 norm of each batch's mean gradient; 0 disables.
    #[arg(long, default_value_t = 1.0)]
    pub clip_norm: f64,
    /// Hidden width of the hybrid perceptron.
    #[arg(long, default_value_t = 256)]
    pub hidden_dim: usize,
    /// Side length images are resized to for image-only models.
    #[arg(long, default_value_t = 64)]
    pub input_size: usize,
    /// L2-normalize embeddings before concatenation.
    #[arg(long)]
    pub normalize_embeddings: bool,
    /// Description of the training data recorded in the model.
    #[arg(long)]
    pub train_source: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainDetectorArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = parse_origin, default_value = "SD")]
    pub fake_origin: Origin,
    #[arg(long)]
    pub n_per_class: usize,
    /// Fraction of each class held out for validation.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[command(flatten)]
    pub params: TrainParams,
    /// Model path; history, split and config files are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainAttributorArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[command(flatten)]
    pub params: TrainParams,
    #[arg(long)]
    pub out: PathBuf,
}

/// Where inference inputs come from and which backends to use.
#[derive(Debug, Args, Serialize)]
pub struct InferenceArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Image to classify; repeatable.
    #[arg(long, conflicts_with = "manifest")]
    pub image: Vec<PathBuf>,
    /// Classify every record of a manifest instead.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Prompt for `--image` inputs.
    #[arg(long, requires = "image")]
    pub prompt: Option<String>,
    /// Encoder backend (default: the one recorded in the model).
    #[arg(long)]
    pub backend: Option<String>,
    /// Backend used to caption images that lack a prompt.
    #[arg(long)]
    pub captioner: Option<String>,
    /// Output file (JSON lines); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: InferenceArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub input: InferenceArgs,
    /// Route predictions below this confidence to "unseen".
    #[arg(long, conflicts_with = "sweep")]
    pub threshold: Option<f64>,
    /// Evaluate the 11 thresholds 0.0, 0.1, ..., 1.0 on a balanced open-set
    /// split of `--manifest`.
    #[arg(long, requires = "manifest")]
    pub sweep: bool,
    /// Origins forming the unseen class in a sweep.
    #[arg(long, value_parser = parse_origin, value_delimiter = ',', default_value = "DALLE2")]
    pub unseen: Vec<Origin>,
    /// Per-class sweep size.
    #[arg(long, default_value_t = 100)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalCommand {
    /// Evaluate a model on every (origin x dataset) pair.
    Cross(CrossArgs),
    /// Train and score one model per training-set size.
    Ablation(AblationArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct CrossArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Evaluation manifest; repeatable.
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    /// Fake origins to evaluate a detector against.
    #[arg(long, value_parser = parse_origin, value_delimiter = ',', default_value = "SD,LD,GLIDE,DALLE2")]
    pub eval_origin: Vec<Origin>,
    #[arg(long)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Split file whose ids are excluded from evaluation.
    #[arg(long)]
    pub exclude_split: Option<PathBuf>,
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub captioner: Option<String>,
    /// Table path; a JSON summary is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AblationArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "detection")]
    pub task: TaskArg,
    #[arg(long, value_parser = parse_origin, default_value = "SD")]
    pub fake_origin: Origin,
    /// Total training sizes, split evenly across classes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long)]
    pub test_per_class: usize,
    #[command(flatten)]
    pub params: TrainParams,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional line chart of accuracy against size.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FingerprintArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = parse_origin)]
    pub source: Origin,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Resize every image to this square side first.
    #[arg(long)]
    pub size: Option<u32>,
    /// Fingerprint file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Grayscale rendering (default: the output path with a .png extension).
    #[arg(long)]
    pub render: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalyzeCommand {
    /// Softmax over (prompt-real, prompt-fake) similarities per prompt.
    Connection(ConnectionArgs),
    /// Detector accuracy by prompt/image similarity bin.
    Descriptiveness(DescriptivenessArgs),
    /// Topics ranked by how often their fakes pass as real.
    Topics(TopicsArgs),
    /// Density-based clustering of prompt embeddings.
    Cluster(ClusterArgs),
    /// Authenticity by prompt length and noun ratio.
    Structure(StructureArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ConnectionArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Backend embedding images and text in one space.
    #[arg(long)]
    pub backend: String,
    #[arg(long, value_parser = parse_origin, default_value = "SD")]
    pub fake_origin: Origin,
    #[arg(long, default_value_t = 100.0)]
    pub temperature: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Histogram of p_fake.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

/// A trained detector plus the encoder it needs.
#[derive(Debug, Args, Serialize)]
pub struct DetectorRef {
    #[arg(long)]
    pub model: PathBuf,
    /// Encoder for a hybrid detector (default: the one recorded in it).
    #[arg(long)]
    pub detector_backend: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct DescriptivenessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Backend embedding images and text in one space.
    #[arg(long)]
    pub backend: String,
    #[command(flatten)]
    pub detector: DetectorRef,
    /// Restrict to one origin.
    #[arg(long, value_parser = parse_origin)]
    pub origin: Option<Origin>,
    #[arg(long, default_value_t = 5)]
    pub bins: usize,
    /// Equal-width score intervals instead of equal-count bins.
    #[arg(long)]
    pub equal_width: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Bar chart of per-bin accuracy.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TopicsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub detector: DetectorRef,
    #[arg(long, default_value_t = 20)]
    pub top_k: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Backend embedding the prompts.
    #[arg(long)]
    pub backend: String,
    #[command(flatten)]
    pub detector: DetectorRef,
    /// Neighbourhood radius (Euclidean).
    #[arg(long)]
    pub eps: f64,
    /// Points within `eps`, itself included, that make a core point.
    #[arg(long)]
    pub min_pts: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StructureArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub detector: DetectorRef,
    #[arg(long, value_delimiter = ',', default_value = "25,50,75,100")]
    pub length_edges: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8")]
    pub noun_edges: Vec<f64>,
    /// Per-prompt table; bin tables are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Bar chart of mean authenticity per length bin.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}
