use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "clickmat", version, about = "Click-guided image matting with uncertainty and local refinement")]
pub struct Cli {
    /// Overrides the seed of the command's config; results are reproducible for a fixed seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic composited dataset with a manifest.
    SynthData(SynthArgs),
    /// Train the matting, uncertainty and refinement stages.
    Train(TrainArgs),
    /// Score predicted mattes against ground truth.
    Eval(EvalArgs),
    /// Sparsification curve of predicted uncertainty against the true error.
    Sparsify(SparsifyArgs),
    /// Predict a matte for one image and a click list.
    Infer(InferArgs),
    /// Predict, then refine the most uncertain patches.
    Refine(RefineArgs),
    /// Serve the interactive session API over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset config (TOML); flags win over file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Square image side.
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory containing manifest.jsonl.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Training config (TOML); flags win over file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the full-scale epoch counts and 64-pixel patches instead of the desk defaults.
    #[arg(long)]
    pub paper_scale: bool,
    /// Comma-separated subset of matting,uncertainty,refine.
    #[arg(long, value_delimiter = ',', default_value = "matting,uncertainty,refine")]
    pub stages: Vec<String>,
    /// Split used for per-epoch validation, or "none".
    #[arg(long, default_value = "test")]
    pub validation_split: String,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted mattes (PNG).
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth mattes with matching file names.
    #[arg(long)]
    pub gt: PathBuf,
    /// Comma-separated metric names; all registered metrics by default.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Vec<String>,
    /// Comma-separated scopes: full, transition.
    #[arg(long, value_delimiter = ',', default_value = "full,transition")]
    pub scope: Vec<String>,
    /// Write the reports as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SparsifyArgs {
    /// Predicted matte PNG, or a directory of them.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth matte PNG, or a directory with matching names.
    #[arg(long)]
    pub gt: PathBuf,
    /// Uncertainty map (.sigma), or a directory of `<name>.sigma` files.
    #[arg(long)]
    pub sigma: PathBuf,
    /// Comma-separated removal fractions, starting at 0.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Vec<f64>,
    /// CSV destination.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Matting checkpoint; uncertainty is produced when it has an uncertainty decoder.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Click list JSON; no clicks when omitted.
    #[arg(long)]
    pub clicks: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    pub radius: u32,
    /// Matte PNG destination (16-bit).
    #[arg(long)]
    pub out: PathBuf,
    /// Raw uncertainty destination (.sigma).
    #[arg(long)]
    pub sigma_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[command(flatten)]
    pub infer: InferArgs,
    #[arg(long)]
    pub refiner: PathBuf,
    /// Number of patches to refine.
    #[arg(short = 'k', long = "k")]
    pub k: usize,
    #[arg(long, default_value_t = 64)]
    pub patch_size: usize,
    /// Registered strategy name (none, local, global).
    #[arg(long, default_value = "local")]
    pub strategy: String,
    /// Patch list JSON destination.
    #[arg(long)]
    pub patches_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub refiner: Option<PathBuf>,
    /// Engine config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}
