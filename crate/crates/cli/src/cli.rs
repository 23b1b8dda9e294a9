use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "spal", version, about = "Region-based active learning for semantic segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic shapes dataset (PNGs plus manifest).
    Synth(SynthArgs),
    /// Compute base superpixels for one image or a whole manifest.
    Segment(SegmentArgs),
    /// Merge base superpixels under a probability map.
    Merge(MergeArgs),
    /// Rank the candidate regions of a stored run round.
    Select(SelectArgs),
    /// Build a sieved training set from answered queries.
    Sieve(SieveArgs),
    /// Oracle superpixels (connected components) of ground-truth label maps.
    Oracle(OracleArgs),
    /// Achievable metrics of segmentations against oracle superpixels.
    Evaluate(EvaluateArgs),
    /// Rank metrics by Pearson correlation with a score.
    Correlate(CorrelateArgs),
    /// Train a pixel classifier on a sieved dataset.
    Train(TrainArgs),
    /// Per-pixel class probabilities from a trained model.
    Predict(PredictArgs),
    /// Metrics and warm-up mIoU across base segmentation scales.
    Sweep(SweepArgs),
    /// Run, resume or inspect an active learning loop.
    #[command(subcommand)]
    Loop(LoopCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Slic,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Js,
    Euclidean,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub train: u32,
    #[arg(long, default_value_t = 10)]
    pub val: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Width and height in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: u32,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Dataset manifest; writes one `<stem>.seg` per image into `--out`.
    #[arg(long, required_unless_present = "image", conflicts_with = "image")]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    /// Single RGB PNG; `--out` is then the output file.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AlgoArg::Slic)]
    pub algo: AlgoArg,
    /// Target pixels per superpixel (SLIC) or cell side (grid).
    #[arg(long, default_value_t = 64)]
    pub size: u32,
    #[arg(long, default_value_t = 10.0)]
    pub compactness: f64,
    #[arg(long, default_value_t = 10)]
    pub iters: u32,
    #[arg(short, long)]
    pub out: PathBuf,
    /// With `--image`: also write the image with boundaries drawn.
    #[arg(long, requires = "image")]
    pub overlay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long)]
    pub seg: PathBuf,
    #[arg(long)]
    pub probs: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    #[arg(long, value_enum, default_value_t = CriterionArg::Js)]
    pub criterion: CriterionArg,
    #[arg(short, long)]
    pub out: PathBuf,
    /// Write the absorption events as JSON.
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Run directory holding `state.json`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub round: u32,
    #[arg(long)]
    pub budget: usize,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SieveArgs {
    /// Query records (JSON array); may be repeated.
    #[arg(long, required = true)]
    pub queries: Vec<PathBuf>,
    /// Directory of `<image_id>.ppf` probability maps.
    #[arg(long, required_unless_present = "keep_all")]
    pub probs_dir: Option<PathBuf>,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub sample_count: usize,
    #[arg(long, default_value_t = 5)]
    pub min_pixels: usize,
    /// Keep every pixel of each answered region.
    #[arg(long)]
    pub keep_all: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Directory of label PNGs, or a single PNG.
    #[arg(long)]
    pub gt_dir: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub num_classes: u16,
    #[arg(long, default_value_t = 255)]
    pub ignore_id: u16,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// A `.seg` file or a directory of them.
    #[arg(long)]
    pub seg: PathBuf,
    /// Matching oracle `.seg` file or directory.
    #[arg(long)]
    pub oracle: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// CSV with columns metric, metric_value, score.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub sieved: PathBuf,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub num_classes: u16,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: u32,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Single RGB PNG; `--out` is then a `.ppf` file.
    #[arg(long, required_unless_present = "dataset", conflicts_with = "dataset")]
    pub image: Option<PathBuf>,
    /// Dataset manifest; writes `<stem>.ppf` per image into `--out`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Val)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 255)]
    pub ignore_id: u16,
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dataset manifest; a synthetic dataset is generated when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Seed for the synthetic data and the warm-up run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub train: u32,
    #[arg(long, default_value_t = 10)]
    pub val: u32,
    #[arg(long, default_value_t = 64)]
    pub size: u32,
    /// Clicks spent per configuration.
    #[arg(long, default_value_t = 40)]
    pub budget: usize,
    #[arg(long, default_value_t = 4)]
    pub num_classes: u16,
    /// Long-format CSV: metric, metric_value, score, config.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum LoopCommand {
    /// Start a run from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Address for the annotation API in human mode (overrides the config).
        #[arg(long)]
        listen: Option<String>,
        /// Do not refill skipped queries; a round may close with fewer answers.
        #[arg(long)]
        partial: bool,
    },
    /// Continue a run from its `state.json` (or run directory).
    Resume {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        listen: Option<String>,
    },
    /// Print the progress of a run.
    Status {
        #[arg(long)]
        state: PathBuf,
    },
}
