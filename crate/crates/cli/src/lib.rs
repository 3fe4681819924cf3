//! The `radlabel` command line: one subcommand per pipeline stage.
//!
//! Every command reads its inputs, delegates to one library operation, writes
//! its outputs under `--out`, and records a `manifest-<command>.json` with
//! input and output hashes, derived seeds and the resolved configuration.
//!
//! Settings resolve as flag, then `RADLABEL_*` environment variable, then the
//! `--config` TOML file, then the built-in default.

pub mod commands;
pub mod error;
pub mod settings;
pub mod stage;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use error::{Category, CliError, CliResult};
pub use settings::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "radlabel", version, about = "Confidence-gated radiology entity annotation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, env = "RADLABEL_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "RADLABEL_OUT")]
    pub out: Option<PathBuf>,
    /// Root seed; every stage derives its own from it.
    #[arg(long, global = true, env = "RADLABEL_SEED")]
    pub seed: Option<u64>,
    /// Primary input of the command.
    #[arg(long, global = true, env = "RADLABEL_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// `<entity>=<kind>:<param>`, e.g. `OBS-DP=replay:preds.jsonl`. Repeatable.
    #[arg(long = "backend", global = true, env = "RADLABEL_BACKENDS", value_delimiter = ',')]
    pub backends: Vec<String>,
    /// Four comma-separated values in ANAT-DP, OBS-DP, OBS-DA, OBS-U order,
    /// `ENTITY=value` pairs, or a threshold table JSON file.
    #[arg(long, global = true, env = "RADLABEL_THRESHOLDS")]
    pub thresholds: Option<String>,
    /// Minimum passing fraction of a report's spans.
    #[arg(long, global = true, env = "RADLABEL_PROPORTION")]
    pub proportion: Option<f64>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a RadGraph JSON document into reports.jsonl.
    Ingest(commands::corpus::IngestArgs),
    /// Split reports into sentences with rebased spans.
    Split(commands::corpus::SplitArgs),
    /// Per-entity instruction datasets with empty-list negatives.
    BuildDataset(commands::corpus::BuildDatasetArgs),
    /// Run the configured backend for each entity type.
    Predict(commands::predict::PredictArgs),
    /// Exact-span precision, recall and F1 per entity.
    Evaluate(commands::predict::EvaluateArgs),
    /// Sweep thresholds on a validation half and pick one per target.
    DiscoverThresholds(commands::confidence::DiscoverArgs),
    /// Cross-validated isotonic calibration with ECE.
    Calibrate(commands::confidence::CalibrateArgs),
    /// Merge predictions per report and route each to accept or review.
    Automate(commands::automation::AutomateArgs),
    /// Load an automation run into the review queue.
    Enqueue(commands::automation::EnqueueArgs),
    /// Frequent terms for synthetic generation prompts.
    SynthKeywords(commands::synth::KeywordsArgs),
    /// Retrieval-augmented synthetic sentence generation.
    SynthGenerate(commands::synth::GenerateArgs),
    /// Validate generated labels under the judge rules.
    SynthJudge(commands::synth::JudgeArgs),
    /// Dedup against gold and report label-quality rates.
    SynthQa(commands::synth::QaArgs),
    /// Embedding coherence, cross-set similarity and leakage flags.
    Similarity(commands::similarity::SimilarityArgs),
    /// Training-set mixes for an augmentation-ratio sweep.
    AugmentationManifest(commands::synth::AugmentationArgs),
    /// Run the review HTTP service.
    Serve(commands::automation::ServeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ingest(_) => "ingest",
            Self::Split(_) => "split",
            Self::BuildDataset(_) => "build-dataset",
            Self::Predict(_) => "predict",
            Self::Evaluate(_) => "evaluate",
            Self::DiscoverThresholds(_) => "discover-thresholds",
            Self::Calibrate(_) => "calibrate",
            Self::Automate(_) => "automate",
            Self::Enqueue(_) => "enqueue",
            Self::SynthKeywords(_) => "synth-keywords",
            Self::SynthGenerate(_) => "synth-generate",
            Self::SynthJudge(_) => "synth-judge",
            Self::SynthQa(_) => "synth-qa",
            Self::Similarity(_) => "similarity",
            Self::AugmentationManifest(_) => "augmentation-manifest",
            Self::Serve(_) => "serve",
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let cfg = RunConfig::resolve(&cli.global)?;
    use commands::*;
    match &cli.command {
        Command::Ingest(a) => corpus::ingest(&cfg, a),
        Command::Split(a) => corpus::split(&cfg, a),
        Command::BuildDataset(a) => corpus::build_dataset(&cfg, a),
        Command::Predict(a) => predict::predict(&cfg, a),
        Command::Evaluate(a) => predict::evaluate(&cfg, a),
        Command::DiscoverThresholds(a) => confidence::discover(&cfg, a),
        Command::Calibrate(a) => confidence::calibrate(&cfg, a),
        Command::Automate(a) => automation::automate(&cfg, a),
        Command::Enqueue(a) => automation::enqueue(&cfg, a),
        Command::SynthKeywords(a) => synth::keywords(&cfg, a),
        Command::SynthGenerate(a) => synth::generate(&cfg, a),
        Command::SynthJudge(a) => synth::judge(&cfg, a),
        Command::SynthQa(a) => synth::qa(&cfg, a),
        Command::Similarity(a) => similarity::similarity(&cfg, a),
        Command::AugmentationManifest(a) => synth::augmentation(&cfg, a),
        Command::Serve(a) => automation::serve(&cfg, a),
    }
}

/// Parse arguments, run, and map failures to categorized exit codes.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_env("RADLABEL_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category.exit_code())
        }
    }
}
