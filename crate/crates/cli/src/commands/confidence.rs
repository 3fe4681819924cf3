use std::collections::HashSet;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use radlabel::automation::validation_split;
use radlabel::confidence::{apply_calibration, calibration_report, discover_thresholds, DEFAULT_BINS, DEFAULT_FOLDS};
use radlabel::{Sentence, SentencePrediction};
use serde::Serialize;
use serde_json::json;

use super::{read_corpus, require_paths, resolve_thresholds};
use crate::error::CliResult;
use crate::settings::RunConfig;
use crate::stage::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitUnit {
    Report,
    Sentence,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiscoverArgs {
    #[arg(long = "predictions", required = true)]
    pub predictions: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.80,0.85,0.90,0.95")]
    pub targets: Vec<f64>,
    /// Unit of the validation/held-out split.
    #[arg(long, value_enum, default_value = "report")]
    pub unit: SplitUnit,
    /// Shuffle units with a seed derived from `--seed` instead of alternating by ordinal.
    #[arg(long)]
    pub seeded_split: bool,
    /// Sweep calibrated confidences where present.
    #[arg(long)]
    pub use_calibrated: bool,
}

fn unit_id(s: &Sentence, unit: SplitUnit) -> String {
    match unit {
        SplitUnit::Report => s.report_id.clone(),
        SplitUnit::Sentence => s.id().to_string(),
    }
}

pub fn discover(cfg: &RunConfig, args: &DiscoverArgs) -> CliResult<()> {
    let mut st = Stage::new("discover-thresholds", cfg);
    require_paths(&st, "predictions", &args.predictions)?;
    if let Some(t) = args.targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(st.config(format!("target {t} outside [0, 1]")));
    }
    let sentences = read_corpus(&mut st)?;
    let preds: Vec<SentencePrediction> = st.read_jsonl_all(&args.predictions)?;
    let mut ids: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for s in &sentences {
        let id = unit_id(s, args.unit);
        if seen.insert(id.clone()) {
            ids.push(id);
        }
    }
    let seed = args.seeded_split.then(|| st.seed("split"));
    let (validation, heldout) = validation_split(&ids, seed);
    let val: HashSet<&str> = validation.iter().map(String::as_str).collect();
    let (val_sents, test_sents): (Vec<Sentence>, Vec<Sentence>) =
        sentences.into_iter().partition(|s| val.contains(unit_id(s, args.unit).as_str()));
    let val_keys: HashSet<_> = val_sents.iter().map(|s| s.id()).collect();
    let val_preds: Vec<SentencePrediction> =
        preds.into_iter().filter(|p| val_keys.contains(&p.sentence_id)).collect();
    let table = discover_thresholds(&val_preds, &val_sents, &args.targets, args.use_calibrated)
        .map_err(|e| st.module(e))?;
    st.write_json("thresholds.json", &table)?;
    st.write("thresholds.tsv", table.table_tsv().as_bytes())?;
    st.write("curves.tsv", table.curves_tsv().as_bytes())?;
    st.write_json(
        "split.json",
        &json!({"unit": args.unit, "validation": validation, "heldout": heldout}),
    )?;
    st.write_jsonl("sentences-validation.jsonl", &val_sents)?;
    st.write_jsonl("sentences-heldout.jsonl", &test_sents)?;
    st.finish(args)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long = "predictions", required = true)]
    pub predictions: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Target level read from a threshold table given with `--thresholds`.
    #[arg(long, default_value_t = 0.95)]
    pub target: f64,
}

pub fn calibrate(cfg: &RunConfig, args: &CalibrateArgs) -> CliResult<()> {
    let mut st = Stage::new("calibrate", cfg);
    require_paths(&st, "predictions", &args.predictions)?;
    if args.bins == 0 {
        return Err(st.config("--bins must be positive"));
    }
    let thresholds = match &cfg.thresholds {
        Some(spec) => Some(resolve_thresholds(&mut st, spec, args.target)?),
        None => None,
    };
    let sentences = read_corpus(&mut st)?;
    let mut preds: Vec<SentencePrediction> = st.read_jsonl_all(&args.predictions)?;
    let seed = st.seed("cv");
    let report = calibration_report(&preds, &sentences, args.folds, args.bins, seed, thresholds.as_ref())
        .map_err(|e| st.module(e))?;
    apply_calibration(&mut preds, &report.models());
    st.write_json("calibration.json", &report)?;
    st.write("calibration.tsv", report.summary_tsv().as_bytes())?;
    st.write("calibration-bins.tsv", report.bins_tsv().as_bytes())?;
    st.write_jsonl("predictions-calibrated.jsonl", &preds)?;
    st.finish(args)?;
    Ok(())
}
