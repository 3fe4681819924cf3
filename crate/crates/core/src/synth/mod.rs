//! Retrieval-augmented synthetic sentence generation and its quality checks.
//!
//! The pipeline runs keyword extraction, exemplar retrieval, prompt
//! assembly, generation, judging, dedup and QA. Model calls sit behind the
//! [`Generator`] and [`Judge`] traits. The built-in implementations are
//! deterministic, so the whole pipeline runs offline.

mod generate;
mod judge;
mod keywords;
mod prompt;
mod qa;
mod retrieval;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EntitySpan, EntityType, Sentence, SpanLike};
use crate::extractor::{anchor_value, parse_records};

pub use generate::{
    generate_batch, plan_prompts, GenerationConfig, Generator, PlannedPrompt, MockGenerator, RemoteGenerator, MOCK_ANATOMY, MOCK_FINDINGS,
};
pub use judge::{
    build_gold_lexicon, judge_corpus, DeterministicJudge, GoldLexicon, Judge, JudgeContext, LexiconEntry,
    RemoteJudge, DEFAULT_LEXICON_SIZE,
};
pub use keywords::{default_stopwords, extract_keywords, KeywordTable, DEFAULT_TOP_N, STOPWORDS, STOPWORD_LIST_ID};
pub use prompt::{build_prompt, Exemplar, GenerationPrompt, OUTPUT_SCHEMA};
pub use qa::{
    dedup_exact, lexicon_coverage_check, normalize_for_dedup, qa_report, unanchorable_rate, QaReport, RateCell,
};
pub use retrieval::{
    cosine, dot, l2_normalize, Embedder, HashedEmbedder, Hit, IndexEntry, RemoteEmbedder, RetrievalIndex,
    DEFAULT_DIM,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("k = {k} exceeds the {available} candidates")]
    KTooLarge { k: usize, available: usize },
    #[error("a prompt needs 2 or 3 exemplars, got {0}")]
    ExemplarCount(usize),
    #[error("keyword table is empty")]
    NoKeywords,
    #[error("exemplar {0} is not in the exemplar set")]
    UnknownExemplar(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Where a synthetic sentence came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub keywords: Vec<String>,
    pub exemplar_ids: Vec<String>,
    pub seed: u64,
    pub batch: usize,
    pub generator: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Accepted,
    Corrected,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiringAction {
    Dropped,
    Reanchored,
    Relabeled,
    Added,
}

/// One application of a judge rule to one label; rule 0 is a change made by a remote judge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFiring {
    pub rule: u8,
    pub action: FiringAction,
    pub entity_type: EntityType,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<EntityType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub verdict: VerdictKind,
    pub judge: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub firings: Vec<RuleFiring>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// A generated sentence in the corpus sentence format plus provenance.
///
/// Before judging, labels may fail to anchor; an unanchorable claim is kept
/// with its claimed offsets, or `0..0` when it had none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticReport {
    pub report_id: String,
    #[serde(default)]
    pub index: usize,
    pub text: String,
    #[serde(default)]
    pub report_offset: usize,
    pub gold: Vec<EntitySpan>,
    pub provenance: Provenance,
    /// `None` until judged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub qa_flags: Vec<String>,
}

impl SyntheticReport {
    pub fn is_rejected(&self) -> bool {
        matches!(&self.verdict, Some(v) if v.verdict == VerdictKind::Rejected)
    }

    pub fn to_sentence(&self) -> Sentence {
        Sentence {
            report_id: self.report_id.clone(),
            index: self.index,
            text: self.text.clone(),
            report_offset: self.report_offset,
            gold: self.gold.clone(),
        }
    }

    pub fn unanchored_labels(&self) -> impl Iterator<Item = &EntitySpan> {
        self.gold.iter().filter(|l| !l.anchors_in(&self.text))
    }
}

/// Generator and judge output: `{"text": ..., "labels": [span records]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedGeneration {
    pub text: String,
    pub labels: Vec<EntitySpan>,
    /// Records whose label is not one of the four entity types.
    pub unknown_labels: usize,
}

/// Parse a generation, tolerating prose around the JSON object.
///
/// Claimed offsets are kept as given when they are usable; a label without
/// them is placed at the first occurrence of its value, or `0..0`.
pub fn parse_generation(raw: &str) -> Result<ParsedGeneration, String> {
    let trimmed = raw.trim();
    let object = match serde_json::from_str::<serde_json::Value>(trimmed) {
        Ok(v @ serde_json::Value::Object(_)) => v,
        _ => {
            let (Some(open), Some(close)) = (trimmed.find('{'), trimmed.rfind('}')) else {
                return Err("no JSON object in generation".into());
            };
            if open >= close {
                return Err("no JSON object in generation".into());
            }
            serde_json::from_str(&trimmed[open..=close]).map_err(|e| e.to_string())?
        }
    };
    let text = object
        .get("text")
        .and_then(|t| t.as_str())
        .ok_or("generation has no \"text\" string")?
        .to_string();
    let labels_json = object.get("labels").cloned().unwrap_or(serde_json::Value::Array(vec![]));
    let records = parse_records(&labels_json.to_string()).map_err(|e| e.to_string())?;
    let mut labels = Vec::with_capacity(records.len());
    let mut unknown_labels = 0;
    for r in records {
        let Ok(entity_type) = r.entity_type.parse::<EntityType>() else {
            unknown_labels += 1;
            continue;
        };
        let (start, end) = match (r.start_position, r.end_position) {
            (Some(s), Some(e)) if s >= 0 && e >= s => (s as usize, e as usize),
            _ => anchor_value(&text, &r.entity_value, None).unwrap_or((0, 0)),
        };
        labels.push(EntitySpan::new(entity_type, r.entity_value, start, end));
    }
    Ok(ParsedGeneration {
        text,
        labels,
        unknown_labels,
    })
}

/// Serialize text and labels in the generation output format.
pub fn render_generation(text: &str, labels: &[EntitySpan]) -> String {
    serde_json::json!({ "text": text, "labels": labels }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityType::*;

    #[test]
    fn generation_round_trips() {
        let labels = vec![EntitySpan::new(ObsDa, "effusion", 3, 11)];
        let raw = render_generation("No effusion is seen.", &labels);
        let p = parse_generation(&format!("Sure: {raw} done")).unwrap();
        assert_eq!(p.text, "No effusion is seen.");
        assert_eq!(p.labels, labels);
    }

    #[test]
    fn unknown_labels_and_missing_offsets() {
        let raw = r#"{"text": "possible edema", "labels": [
            {"entity_type": "OBS-U", "entity_value": "edema"},
            {"entity_type": "NOPE", "entity_value": "x"},
            {"entity_type": "OBS-DP", "entity_value": "ghost"}]}"#;
        let p = parse_generation(raw).unwrap();
        assert_eq!(p.unknown_labels, 1);
        assert_eq!((p.labels[0].start, p.labels[0].end), (9, 14));
        assert_eq!((p.labels[1].start, p.labels[1].end), (0, 0));
    }

    #[test]
    fn malformed_generation() {
        assert!(parse_generation("nothing here").is_err());
        assert!(parse_generation(r#"{"labels": []}"#).is_err());
    }
}
