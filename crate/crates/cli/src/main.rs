//! `voldet`: command-line front end for the voldet-core pipeline.

mod commands;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use voldet_core::baseline::Method;
use voldet_core::datamodel::ONE_WEEK_SECONDS;
use voldet_core::metrics::DEFAULT_IOU_THRESHOLD;
use voldet_core::tiling::{DEFAULT_OVERLAP, DEFAULT_PATCH};
use voldet_core::{Split, ThresholdRule};

use crate::error::{CliError, Kind};

#[derive(Debug, Parser)]
#[command(name = "voldet", version, about = "Volumetric change detection toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: Globals,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Globals {
    /// Worker threads for pair-level parallelism (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for commands that draw random numbers.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Patch side for tiled processing.
    #[arg(long, global = true, default_value_t = DEFAULT_PATCH)]
    pub patch: u32,
    /// Overlap between neighbouring patches.
    #[arg(long, global = true, default_value_t = DEFAULT_OVERLAP)]
    pub overlap: u32,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a manifest and print every violation.
    Validate(ValidateArgs),
    /// Build a training pair list: annotated change pairs plus sampled unannotated pairs.
    SamplePairs(SamplePairsArgs),
    /// Run a classical baseline on one image pair or every annotated pair of a split.
    Detect(DetectArgs),
    /// Turn an external model's score raster into a binary change mask.
    Ingest(IngestArgs),
    /// Score prediction masks against the annotated pairs of a split.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic time-lapse dataset with exact ground truth.
    Synth(SynthArgs),
    /// Render JSON metric reports as one CSV table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct SamplePairsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: Split,
    /// Largest frame gap of an unlabeled pair, in seconds.
    #[arg(long, default_value_t = ONE_WEEK_SECONDS)]
    pub max_gap: i64,
    /// Number of unlabeled pairs; derived from --labeled-fraction when absent.
    #[arg(long)]
    pub count: Option<usize>,
    /// Share of labeled pairs in the final mix.
    #[arg(long, default_value_t = 0.4)]
    pub labeled_fraction: f64,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long, requires = "image_b", conflicts_with = "manifest")]
    pub image_a: Option<PathBuf>,
    #[arg(long, requires = "image_a")]
    pub image_b: Option<PathBuf>,
    /// Run on every annotated pair of --split instead of a single pair.
    #[arg(long, required_unless_present = "image_a")]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Mask PNG for a single pair, prediction directory for a manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Start from the synthetic-calibrated NCC settings instead of the defaults.
    #[arg(long)]
    pub calibrated: bool,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub block: Option<u32>,
    #[arg(long)]
    pub stride: Option<u32>,
    #[arg(long)]
    pub rule: Option<ThresholdRule>,
    #[arg(long)]
    pub min_area: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestKind {
    Confidence,
    Activation,
    Depth,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub kind: IngestKind,
    /// FR32 score raster, or the earlier depth map for --kind depth.
    #[arg(long)]
    pub input: PathBuf,
    /// Later depth map for --kind depth.
    #[arg(long, required_if_eq("kind", "depth"))]
    pub input_b: Option<PathBuf>,
    #[arg(long, default_value = "sigma:2")]
    pub rule: ThresholdRule,
    #[arg(long, default_value_t = 0)]
    pub min_area: usize,
    /// Output width (default: input width).
    #[arg(long)]
    pub width: Option<u32>,
    /// Output height (default: input height).
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding <site>/<frame_a>_<frame_b>.png masks.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou_threshold: f64,
    /// Model name written into every report row.
    #[arg(long, default_value = "voldet")]
    pub model: String,
    /// Output prefix; writes <out>.json and <out>.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON generator config; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON reports written by `evaluate`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// CSV destination (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(Kind::Usage.exit_code()) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("voldet: {e}");
            ExitCode::from(e.kind.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(CliError::internal)?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::Validate(a) => commands::validate(a),
        Command::SamplePairs(a) => commands::sample_pairs(a, g),
        Command::Detect(a) => commands::detect(a, g),
        Command::Ingest(a) => commands::ingest(a, g),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Synth(a) => commands::synth(a, g),
        Command::Report(a) => commands::report(a),
    }
}
