//! The `leafnet` command line: split, train, evaluate, predict, import-weights.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime or
//! divergence error.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{parse_scores, scores_to_csv, ScoreTable};
pub use config::{Arch, RunConfig};

use crate::checkpoint::HeadPolicy;
use crate::error::{Error, ErrorKind};
use crate::train::Policy;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "leafnet", version, about = "Leaf disease classification with residual networks")]
pub struct Cli {
    /// TOML file with run settings; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded, stratified train/test split manifest.
    Split(SplitArgs),
    /// Train (or fine-tune) a model and write a checkpoint plus an epoch report.
    Train(TrainArgs),
    /// Score a checkpoint on the test split, or re-score a saved score file.
    Evaluate(EvaluateArgs),
    /// Print the predicted class and class probabilities for each image.
    Predict(PredictArgs),
    /// Convert a flat named-tensor dump into a model checkpoint.
    ImportWeights(ImportArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Label CSV (image_id,healthy,multiple_diseases,rust,scab).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Manifest to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fraction of each class held out for testing [default: 0.2].
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyFlag {
    Constant,
    OneCycle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HeadFlag {
    Skip,
    Import,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Directory holding <image_id>.<ext> files.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Split manifest written by `split`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Square input size in pixels [default: 224].
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Feed raw [0, 1] pixels instead of normalizing with the pretraining statistics.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch CSV report to write [default: <out>.report.csv].
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Start from these weights and fine-tune in two phases.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub arch: Option<Arch>,
    /// Head-only epochs (pretrained) [default: 1].
    #[arg(long)]
    pub phase1_epochs: Option<usize>,
    /// Whole-network epochs [default: 4]. From scratch, both phase counts are summed.
    #[arg(long)]
    pub phase2_epochs: Option<usize>,
    #[arg(long)]
    pub max_lr: Option<f64>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyFlag>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Disable flips, rotation and brightness jitter.
    #[arg(long)]
    pub no_augment: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Re-score a scores CSV (image_id,true_class,<one column per class>) instead of running a model.
    #[arg(long, conflicts_with = "checkpoint")]
    pub scores: Option<PathBuf>,
    /// Directory for metrics.txt, metrics.csv, scores.csv and roc_<class>.csv.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// LEAFCKPT container with externally named tensors.
    #[arg(long)]
    pub dump: PathBuf,
    /// `external internal` name pairs; omitted means names already match.
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub arch: Option<Arch>,
    #[arg(long, default_value_t = 4)]
    pub num_classes: usize,
    #[arg(long, value_enum)]
    pub head: Option<HeadFlag>,
    /// Report uncovered backbone tensors instead of failing.
    #[arg(long)]
    pub relaxed: bool,
    /// Seed for the freshly initialized parts of the model.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// A failure to report: either bad invocation or a library error.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) => match e.kind() {
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Runtime => EXIT_RUNTIME,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<PolicyFlag> for Policy {
    fn from(p: PolicyFlag) -> Self {
        match p {
            PolicyFlag::Constant => Policy::Constant,
            PolicyFlag::OneCycle => Policy::OneCycle,
        }
    }
}

impl From<HeadFlag> for HeadPolicy {
    fn from(h: HeadFlag) -> Self {
        match h {
            HeadFlag::Skip => HeadPolicy::Skip,
            HeadFlag::Import => HeadPolicy::Import,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            let informational = matches!(e.kind(), K::DisplayHelp | K::DisplayVersion);
            let text = e.render().to_string();
            if informational {
                let _ = write!(out, "{text}");
                return EXIT_OK;
            }
            let _ = write!(err, "{text}");
            return EXIT_USAGE;
        }
    };
    match commands::dispatch(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
