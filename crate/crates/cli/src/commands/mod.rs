pub mod automation;
pub mod confidence;
pub mod corpus;
pub mod predict;
pub mod similarity;
pub mod synth;

use std::path::PathBuf;

use radlabel::{EntityType, Sentence};

use crate::error::CliResult;
use crate::stage::Stage;

/// Entity types named on the command line, or all four.
pub(crate) fn entity_list(stage: &Stage, names: &[String]) -> CliResult<Vec<EntityType>> {
    if names.is_empty() {
        return Ok(EntityType::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| n.parse::<EntityType>().map_err(|e| stage.config(e)))
        .collect()
}

pub(crate) fn read_sentences(stage: &mut Stage, path: &std::path::Path) -> CliResult<Vec<Sentence>> {
    stage.read_jsonl(path)
}

/// Sentences from `--corpus`.
pub(crate) fn read_corpus(stage: &mut Stage) -> CliResult<Vec<Sentence>> {
    let cfg = stage.cfg;
    let path = cfg.corpus(stage.name)?;
    stage.read_jsonl(path)
}

pub(crate) fn require_paths(stage: &Stage, flag: &str, paths: &[PathBuf]) -> CliResult<()> {
    if paths.is_empty() {
        return Err(stage.config(format!("--{flag} is required")));
    }
    Ok(())
}

/// Parse `--thresholds`: four values in `EntityType::ALL` order, `ENTITY=value`
/// pairs, or a threshold table file read at `target`.
pub(crate) fn resolve_thresholds(
    stage: &mut Stage,
    spec: &str,
    target: f64,
) -> CliResult<std::collections::BTreeMap<EntityType, f64>> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.iter().all(|p| p.contains('=')) {
        return parts
            .iter()
            .map(|p| {
                let (e, v) = p.split_once('=').expect("checked");
                let e: EntityType = e.trim().parse().map_err(|err| stage.config(err))?;
                let v: f64 = v.trim().parse().map_err(|_| stage.config(format!("threshold {p:?}")))?;
                Ok((e, v))
            })
            .collect();
    }
    if parts.len() == 4 {
        if let Ok(values) = parts.iter().map(|p| p.parse::<f64>()).collect::<Result<Vec<_>, _>>() {
            return Ok(EntityType::ALL.into_iter().zip(values).collect());
        }
    }
    let table: radlabel::confidence::ThresholdTable = stage.read_json(std::path::Path::new(spec))?;
    let found = table.thresholds_for(target);
    if found.is_empty() {
        return Err(stage.config(format!("{spec}: no rows for target {target}")));
    }
    for e in EntityType::ALL.iter().filter(|e| !found.contains_key(e)) {
        tracing::warn!(entity = %e, "no threshold row; using 0");
    }
    Ok(found)
}
