use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use radlabel::extractor::{BackendDescriptor, PredictionStatus};
use radlabel::scoring::{evaluate as score, EvalMode};
use radlabel::{EntityType, SentencePrediction};
use serde::Serialize;

use super::{entity_list, read_corpus, require_paths};
use crate::error::CliResult;
use crate::settings::RunConfig;
use crate::stage::Stage;

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    /// Entity types to predict; defaults to those with a backend, or all four with `--default-backend`.
    #[arg(long = "entity")]
    pub entities: Vec<String>,
    /// Backend for entity types without their own `--backend`, e.g. `rule:default`.
    #[arg(long)]
    pub default_backend: Option<String>,
}

pub fn predict(cfg: &RunConfig, args: &PredictArgs) -> CliResult<()> {
    let mut st = Stage::new("predict", cfg);
    let fallback: Option<BackendDescriptor> = args
        .default_backend
        .as_deref()
        .map(|d| d.parse().map_err(|e| st.config(e)))
        .transpose()?;
    let entities: Vec<EntityType> = if args.entities.is_empty() && fallback.is_none() {
        cfg.descriptors.keys().copied().collect()
    } else {
        entity_list(&st, &args.entities)?
    };
    if entities.is_empty() {
        return Err(st.config("no backend configured: pass --backend <entity>=<kind>:<param> or --default-backend"));
    }
    let mut plan: Vec<(EntityType, BackendDescriptor)> = Vec::new();
    for e in entities {
        let desc = cfg
            .descriptors
            .get(&e)
            .or(fallback.as_ref())
            .ok_or_else(|| st.config(format!("no backend for {e}")))?;
        plan.push((e, desc.clone()));
    }
    let sentences = read_corpus(&mut st)?;
    for (_, desc) in &plan {
        if let radlabel::extractor::BackendKind::Replay { path } = &desc.kind {
            st.read(path)?;
        }
    }
    let mut all = Vec::new();
    let mut summary = String::from("entity_type\tbackend\tsentences\tspans\tok\tmalformed\tmissing\tfailed\twrong_type\tunanchorable\treanchored\n");
    for (entity, desc) in plan {
        let backend = desc.build(entity).map_err(|e| st.config(format!("{entity}: {e}")))?;
        let preds = backend.extract(&sentences, entity).map_err(|e| st.module(format!("{entity}: {e}")))?;
        let count = |s: PredictionStatus| preds.iter().filter(|p| p.status == s).count();
        summary.push_str(&format!(
            "{entity}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            backend.id(),
            preds.len(),
            preds.iter().map(|p| p.spans.len()).sum::<usize>(),
            count(PredictionStatus::Ok),
            count(PredictionStatus::Malformed),
            count(PredictionStatus::Missing),
            count(PredictionStatus::Failed),
            preds.iter().map(|p| p.wrong_type).sum::<usize>(),
            preds.iter().map(|p| p.unanchorable).sum::<usize>(),
            preds.iter().map(|p| p.reanchored).sum::<usize>(),
        ));
        all.extend(preds);
    }
    st.write_jsonl("predictions.jsonl", &all)?;
    st.write("predict.tsv", summary.as_bytes())?;
    st.finish(args)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Prediction files; repeatable.
    #[arg(long = "predictions", required = true)]
    pub predictions: Vec<PathBuf>,
    /// `presence_conditioned` scores an entity only on sentences holding it; `full` scores all.
    #[arg(long, default_value = "presence_conditioned")]
    pub mode: String,
}

pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> CliResult<()> {
    let mut st = Stage::new("evaluate", cfg);
    require_paths(&st, "predictions", &args.predictions)?;
    let mode: EvalMode = args.mode.parse().map_err(|e| st.config(e))?;
    let sentences = read_corpus(&mut st)?;
    let preds: Vec<SentencePrediction> = st.read_jsonl_all(&args.predictions)?;
    let mut seen = BTreeMap::new();
    for p in &preds {
        if seen.insert((p.sentence_id.clone(), p.target_entity), ()).is_some() {
            return Err(st.invalid(format!("duplicate prediction for {} {}", p.sentence_id, p.target_entity)));
        }
    }
    let report = score(&preds, &sentences, mode).map_err(|e| st.invalid(e))?;
    st.write_json("eval.json", &report)?;
    st.write("eval.tsv", report.to_tsv().as_bytes())?;
    st.finish(args)?;
    Ok(())
}
