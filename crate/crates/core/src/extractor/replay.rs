use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_output_with_logits, ExtractError, Extractor, PredictionStatus, SentencePrediction};
use crate::corpus::{EntityType, Sentence, SentenceId};
use crate::io::read_jsonl;

/// One line of a replay file.
///
/// `raw_output` is either the generated text or the span list itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub sentence_id: SentenceId,
    pub target_entity: EntityType,
    pub raw_output: serde_json::Value,
    #[serde(default)]
    pub logits: Vec<f64>,
}

impl ReplayRecord {
    pub fn raw_text(&self) -> String {
        match &self.raw_output {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

/// Serves stored generations keyed by (sentence id, entity).
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    id: String,
    records: HashMap<(SentenceId, EntityType), ReplayRecord>,
}

impl ReplayBackend {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ExtractError> {
        let path = path.as_ref();
        let records: Vec<ReplayRecord> = read_jsonl(path).map_err(|e| ExtractError::Replay {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::from_records(format!("replay:{}", path.display()), records)
    }

    pub fn from_records(
        id: impl Into<String>,
        records: impl IntoIterator<Item = ReplayRecord>,
    ) -> Result<Self, ExtractError> {
        let mut map = HashMap::new();
        for rec in records {
            let key = (rec.sentence_id.clone(), rec.target_entity);
            if map.contains_key(&key) {
                return Err(ExtractError::DuplicateReplay {
                    sentence_id: rec.sentence_id.to_string(),
                    entity: rec.target_entity,
                });
            }
            map.insert(key, rec);
        }
        Ok(Self {
            id: id.into(),
            records: map,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Extractor for ReplayBackend {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn extract(
        &self,
        sentences: &[Sentence],
        target: EntityType,
    ) -> Result<Vec<SentencePrediction>, ExtractError> {
        Ok(sentences
            .iter()
            .map(|s| match self.records.get(&(s.id(), target)) {
                None => SentencePrediction::empty(
                    s.id(),
                    target,
                    &self.id,
                    PredictionStatus::Missing,
                    String::new(),
                ),
                Some(rec) => {
                    let raw = rec.raw_text();
                    let parsed = parse_output_with_logits(&raw, &s.text, target, Some(&rec.logits));
                    SentencePrediction::from_parsed(s, target, &self.id, raw, parsed)
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sentence(report: &str, index: usize, text: &str) -> Sentence {
        Sentence {
            report_id: report.into(),
            index,
            text: text.into(),
            report_offset: 0,
            gold: vec![],
        }
    }

    fn record(id: &str, raw: serde_json::Value, logits: Vec<f64>) -> ReplayRecord {
        ReplayRecord {
            sentence_id: id.parse().unwrap(),
            target_entity: EntityType::ObsDa,
            raw_output: raw,
            logits,
        }
    }

    #[test]
    fn string_and_structured_outputs_both_replay() {
        let backend = ReplayBackend::from_records(
            "t",
            vec![
                record(
                    "r#0",
                    json!(r#"[{"entity_type":"OBS-DA","entity_value":"effusion","start_position":3,"end_position":11}]"#),
                    vec![1.0],
                ),
                record(
                    "r#1",
                    json!([{"entity_type":"OBS-DA","entity_value":"pneumothorax","start_position":3,"end_position":15}]),
                    vec![-1.0],
                ),
            ],
        )
        .unwrap();
        let sents = [sentence("r", 0, "no effusion"), sentence("r", 1, "no pneumothorax"), sentence("r", 2, "x")];
        let preds = backend.extract(&sents, EntityType::ObsDa).unwrap();
        assert_eq!(preds.len(), 3);
        assert_eq!(preds[0].spans[0].value, "effusion");
        assert_eq!(preds[0].spans[0].logit, 1.0);
        assert_eq!(preds[1].spans[0].logit, -1.0);
        assert_eq!(preds[1].status, PredictionStatus::Ok);
        assert_eq!(preds[2].status, PredictionStatus::Missing);
        assert!(preds[2].spans.is_empty());
        assert_eq!(preds, backend.extract(&sents, EntityType::ObsDa).unwrap());
    }

    #[test]
    fn other_entity_keys_are_missing() {
        let backend = ReplayBackend::from_records("t", vec![record("r#0", json!([]), vec![])]).unwrap();
        let preds = backend.extract(&[sentence("r", 0, "a")], EntityType::ObsU).unwrap();
        assert_eq!(preds[0].status, PredictionStatus::Missing);
    }

    #[test]
    fn duplicates_are_rejected() {
        let err = ReplayBackend::from_records("t", vec![record("r#0", json!([]), vec![]), record("r#0", json!("[]"), vec![])])
            .unwrap_err();
        assert!(matches!(err, ExtractError::DuplicateReplay { .. }));
    }

    #[test]
    fn unreadable_file_is_an_error() {
        assert!(matches!(
            ReplayBackend::open("/nonexistent/replay.jsonl"),
            Err(ExtractError::Replay { .. })
        ));
    }

    #[test]
    fn malformed_string_is_flagged() {
        let backend = ReplayBackend::from_records("t", vec![record("r#0", json!("sorry"), vec![])]).unwrap();
        let preds = backend.extract(&[sentence("r", 0, "a")], EntityType::ObsDa).unwrap();
        assert_eq!(preds[0].status, PredictionStatus::Malformed);
        assert_eq!(preds[0].raw_output, "sorry");
    }
}
