//! Entity extractor backends and structured-output anchoring.
//!
//! Every backend answers the same question: for a list of sentences and one
//! target entity type, which spans does the model claim? Raw generations go
//! through [`parse_model_output`], which drops wrong-type records, re-anchors
//! drifting offsets, and removes overlaps, so downstream stages only ever see
//! anchored, non-overlapping spans.

mod parse;
mod remote;
mod replay;
mod rules;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EntityType, Sentence, SentenceId, SpanLike};

pub use parse::{
    anchor_value, parse_model_output, parse_output_with_logits, parse_records, LabelRecord,
    MalformedOutput, ParsedOutput, DEFAULT_LOGIT,
};
pub use remote::{ExtractResponse, RemoteBackend, RemoteConfig};
pub use replay::{ReplayBackend, ReplayRecord};
pub use rules::{RuleBackend, Ruleset};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("replay file {path}: {detail}")]
    Replay { path: String, detail: String },
    #[error("duplicate replay record for sentence {sentence_id} / {entity}")]
    DuplicateReplay { sentence_id: String, entity: EntityType },
    #[error("ruleset {0:?} has no lexicon terms")]
    EmptyRuleset(String),
    #[error("ruleset: {0}")]
    Ruleset(String),
    #[error("bad backend descriptor {0:?}: expected <kind>:<param> with kind replay, rule or remote")]
    Descriptor(String),
}

/// A predicted span with its raw score and derived confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedSpan {
    pub entity_type: EntityType,
    #[serde(rename = "entity_value")]
    pub value: String,
    #[serde(rename = "start_position")]
    pub start: usize,
    #[serde(rename = "end_position")]
    pub end: usize,
    pub logit: f64,
    /// Sigmoid of `logit`.
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated: Option<f64>,
}

impl PredictedSpan {
    /// Calibrated confidence when requested and available, raw otherwise.
    pub fn score(&self, use_calibrated: bool) -> f64 {
        match (use_calibrated, self.calibrated) {
            (true, Some(c)) => c,
            _ => self.confidence,
        }
    }

    pub fn to_entity_span(&self) -> crate::corpus::EntitySpan {
        crate::corpus::EntitySpan::new(self.entity_type, self.value.clone(), self.start, self.end)
    }
}

impl SpanLike for PredictedSpan {
    fn entity_type(&self) -> EntityType {
        self.entity_type
    }
    fn value(&self) -> &str {
        &self.value
    }
    fn start(&self) -> usize {
        self.start
    }
    fn end(&self) -> usize {
        self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionStatus {
    Ok,
    /// Output could not be parsed as a span list.
    Malformed,
    /// The replay file has no record for this sentence.
    Missing,
    /// The backend failed after exhausting retries.
    Failed,
}

/// All spans one backend claims for one sentence and target type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePrediction {
    pub sentence_id: SentenceId,
    pub target_entity: EntityType,
    pub spans: Vec<PredictedSpan>,
    pub backend_id: String,
    pub raw_output: String,
    pub status: PredictionStatus,
    #[serde(default)]
    pub wrong_type: usize,
    #[serde(default)]
    pub unanchorable: usize,
    #[serde(default)]
    pub reanchored: usize,
}

impl SentencePrediction {
    pub fn empty(
        sentence_id: SentenceId,
        target_entity: EntityType,
        backend_id: &str,
        status: PredictionStatus,
        raw_output: String,
    ) -> Self {
        Self {
            sentence_id,
            target_entity,
            spans: Vec::new(),
            backend_id: backend_id.to_string(),
            raw_output,
            status,
            wrong_type: 0,
            unanchorable: 0,
            reanchored: 0,
        }
    }

    fn from_parsed(
        sentence: &Sentence,
        target: EntityType,
        backend_id: &str,
        raw_output: String,
        parsed: ParsedOutput,
    ) -> Self {
        Self {
            sentence_id: sentence.id(),
            target_entity: target,
            status: if parsed.malformed {
                PredictionStatus::Malformed
            } else {
                PredictionStatus::Ok
            },
            spans: parsed.spans,
            backend_id: backend_id.to_string(),
            raw_output,
            wrong_type: parsed.wrong_type,
            unanchorable: parsed.unanchorable,
            reanchored: parsed.reanchored,
        }
    }
}

/// The uniform backend contract: one prediction per input sentence, in input order.
pub trait Extractor: Send + Sync {
    fn id(&self) -> String;

    fn extract(
        &self,
        sentences: &[Sentence],
        target: EntityType,
    ) -> Result<Vec<SentencePrediction>, ExtractError>;
}

/// Task instruction for one entity type, used in the "Task / Input / Output" template.
pub fn instruction_for(entity: EntityType) -> String {
    format!(
        "Extract every {label} ({desc}) entity from the radiology report sentence. \
         Return a JSON list of objects with keys entity_type, entity_value, \
         start_position and end_position, where positions are character offsets \
         into the input (end exclusive). Return [] if the sentence has no {label} entity.",
        label = entity.as_str(),
        desc = entity.description()
    )
}

/// Render the full instruction-tuning prompt.
pub fn render_prompt(instruction: &str, input: &str) -> String {
    format!("Task: {instruction}\nInput: {input}\nOutput: ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    Replay { path: PathBuf },
    /// `ruleset` is `default` or a path to a ruleset JSON file.
    Rule { ruleset: String },
    Remote(RemoteConfig),
}

/// Which backend serves an entity type, and the instruction it receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    #[serde(flatten)]
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
}

impl BackendDescriptor {
    pub fn instruction(&self, entity: EntityType) -> String {
        self.instruction.clone().unwrap_or_else(|| instruction_for(entity))
    }

    pub fn build(&self, entity: EntityType) -> Result<Box<dyn Extractor>, ExtractError> {
        Ok(match &self.kind {
            BackendKind::Replay { path } => Box::new(ReplayBackend::open(path)?),
            BackendKind::Rule { ruleset } => {
                let rules = if ruleset == "default" {
                    Ruleset::default()
                } else {
                    Ruleset::load(ruleset)?
                };
                Box::new(RuleBackend::new(rules)?)
            }
            BackendKind::Remote(cfg) => {
                let mut cfg = cfg.clone();
                cfg.instruction.get_or_insert_with(|| self.instruction(entity));
                Box::new(RemoteBackend::new(cfg))
            }
        })
    }
}

impl FromStr for BackendDescriptor {
    type Err = ExtractError;

    /// `replay:<path>`, `rule:<ruleset>` or `remote:<base-url>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, param) = s
            .split_once(':')
            .ok_or_else(|| ExtractError::Descriptor(s.to_string()))?;
        if param.is_empty() {
            return Err(ExtractError::Descriptor(s.to_string()));
        }
        let kind = match kind {
            "replay" => BackendKind::Replay { path: param.into() },
            "rule" => BackendKind::Rule {
                ruleset: param.to_string(),
            },
            "remote" => BackendKind::Remote(RemoteConfig::new(param)),
            _ => return Err(ExtractError::Descriptor(s.to_string())),
        };
        Ok(Self {
            kind,
            instruction: None,
        })
    }
}

impl fmt::Display for BackendDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            BackendKind::Replay { path } => write!(f, "replay:{}", path.display()),
            BackendKind::Rule { ruleset } => write!(f, "rule:{ruleset}"),
            BackendKind::Remote(cfg) => write!(f, "remote:{}", cfg.endpoint),
        }
    }
}

/// Map `f` over `items` on at most `limit` threads; output order matches input order.
pub fn parallel_map<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let limit = limit.clamp(1, items.len().max(1));
    if limit == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let chunks: Vec<Vec<(usize, R)>> = std::thread::scope(|scope| {
        let workers: Vec<_> = (0..limit)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            break done;
                        }
                        done.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        workers
            .into_iter()
            .map(|w| w.join().expect("worker panicked"))
            .collect()
    });
    for (i, r) in chunks.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}
