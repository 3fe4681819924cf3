use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{find_overlap, CorpusError, EntitySpan, EntityType, Report, Split};
use crate::text::{normalize_whitespace, whitespace_tokens, CharIndex};

#[derive(Debug, Deserialize, Serialize)]
struct RawReport {
    text: String,
    #[serde(default)]
    entities: BTreeMap<String, RawEntity>,
    #[serde(default)]
    data_split: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data_source: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawEntity {
    tokens: String,
    label: String,
    start_ix: i64,
    end_ix: i64,
    #[serde(default)]
    relations: serde_json::Value,
}

/// Parse a RadGraph interchange document into reports, ordered by report id.
///
/// Token indices (0-based, `end_ix` inclusive) are resolved against a
/// whitespace tokenization of the report text; relations are dropped.
pub fn parse_radgraph(bytes: &[u8]) -> Result<Vec<Report>, CorpusError> {
    let doc: BTreeMap<String, RawReport> =
        serde_json::from_slice(bytes).map_err(|e| CorpusError::Malformed(e.to_string()))?;
    doc.into_iter().map(|(id, raw)| convert(id, raw)).collect()
}

fn convert(report_id: String, raw: RawReport) -> Result<Report, CorpusError> {
    let tokens = whitespace_tokens(&raw.text);
    let index = CharIndex::new(&raw.text);
    let mut gold = Vec::with_capacity(raw.entities.len());
    let mut ids = Vec::with_capacity(raw.entities.len());
    for (entity_id, ent) in &raw.entities {
        let entity_type: EntityType =
            ent.label
                .parse()
                .map_err(|_| CorpusError::UnknownLabel {
                    report_id: report_id.clone(),
                    entity_id: entity_id.clone(),
                    label: ent.label.clone(),
                })?;
        let in_range = ent.start_ix >= 0
            && ent.start_ix <= ent.end_ix
            && (ent.end_ix as usize) < tokens.len();
        if !in_range {
            return Err(CorpusError::TokenOutOfRange {
                report_id: report_id.clone(),
                entity_id: entity_id.clone(),
                start_ix: ent.start_ix,
                end_ix: ent.end_ix,
                n_tokens: tokens.len(),
            });
        }
        let start = tokens[ent.start_ix as usize].start;
        let end = tokens[ent.end_ix as usize].end;
        let value = index.slice(&raw.text, start, end).unwrap_or_default();
        if normalize_whitespace(value) != normalize_whitespace(&ent.tokens) {
            return Err(CorpusError::Unanchored {
                report_id: report_id.clone(),
                entity_id: entity_id.clone(),
                expected: ent.tokens.clone(),
                found: value.to_string(),
            });
        }
        gold.push(EntitySpan::new(entity_type, value, start, end));
        ids.push(entity_id.clone());
    }
    if let Some((a, b)) = find_overlap(&gold) {
        return Err(CorpusError::Overlap {
            report_id,
            first: ids[a].clone(),
            second: ids[b].clone(),
        });
    }
    gold.sort_by_key(|s| (s.start, s.end));
    let split = match raw.data_split.as_deref() {
        None => Split::Train,
        Some(tag) => Split::parse(tag).ok_or_else(|| {
            CorpusError::Malformed(format!("report {report_id}: unknown data_split {tag:?}"))
        })?,
    };
    Ok(Report {
        id: report_id,
        text: raw.text,
        gold,
        split,
        source: raw.data_source.unwrap_or_default(),
    })
}

/// Serialize reports back to the interchange format.
///
/// Every gold span must cover whole whitespace tokens; entity ids are
/// assigned 1-based in span order.
pub fn to_radgraph_json(reports: &[Report]) -> Result<serde_json::Value, CorpusError> {
    let mut doc = BTreeMap::new();
    for r in reports {
        let tokens = whitespace_tokens(&r.text);
        let mut entities = BTreeMap::new();
        for (i, span) in r.gold.iter().enumerate() {
            let first = tokens.iter().position(|t| t.start == span.start);
            let last = tokens.iter().position(|t| t.end == span.end);
            let (Some(first), Some(last)) = (first, last) else {
                return Err(CorpusError::Malformed(format!(
                    "report {}: span {:?} is not token aligned",
                    r.id, span.value
                )));
            };
            entities.insert(
                (i + 1).to_string(),
                RawEntity {
                    tokens: normalize_whitespace(&span.value),
                    label: span.entity_type.to_string(),
                    start_ix: first as i64,
                    end_ix: last as i64,
                    relations: serde_json::Value::Array(vec![]),
                },
            );
        }
        let split = match r.split {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        };
        doc.insert(
            r.id.clone(),
            RawReport {
                text: r.text.clone(),
                entities,
                data_split: Some(split.to_string()),
                data_source: (!r.source.is_empty()).then(|| r.source.clone()),
            },
        );
    }
    serde_json::to_value(doc).map_err(|e| CorpusError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn parse(v: serde_json::Value) -> Result<Vec<Report>, CorpusError> {
        parse_radgraph(v.to_string().as_bytes())
    }

    #[test]
    fn token_indices_become_char_offsets() {
        let reports = parse(json!({
            "r1": {"text": "no acute pneumonia", "data_split": "test",
                   "entities": {"1": {"tokens": "pneumonia", "label": "OBS-DA",
                                      "start_ix": 2, "end_ix": 2,
                                      "relations": [["modify", "2"]]}}}
        }))
        .unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].gold, vec![EntitySpan::new(EntityType::ObsDa, "pneumonia", 9, 18)]);
        assert_eq!(reports[0].split, Split::Test);
    }

    #[test]
    fn empty_entity_map_yields_no_gold() {
        let reports = parse(json!({"r": {"text": "Normal study .", "entities": {}}})).unwrap();
        assert!(reports[0].gold.is_empty());
    }

    #[test]
    fn multi_token_span_keeps_original_spacing() {
        let reports = parse(json!({"r": {"text": "right  lower lobe", "entities": {
            "1": {"tokens": "right lower lobe", "label": "ANAT-DP", "start_ix": 0, "end_ix": 2}}}}))
        .unwrap();
        assert_eq!(reports[0].gold[0].value, "right  lower lobe");
        assert_eq!((reports[0].gold[0].start, reports[0].gold[0].end), (0, 17));
    }

    #[test]
    fn errors_name_report_and_entity() {
        let err = parse(json!({"r9": {"text": "a b", "entities": {
            "e4": {"tokens": "c", "label": "OBS-DP", "start_ix": 2, "end_ix": 2}}}}))
        .unwrap_err();
        assert!(matches!(err, CorpusError::TokenOutOfRange { ref report_id, ref entity_id, .. }
            if report_id == "r9" && entity_id == "e4"));

        let err = parse(json!({"r9": {"text": "a b", "entities": {
            "e5": {"tokens": "x", "label": "OBS-DP", "start_ix": 1, "end_ix": 1}}}}))
        .unwrap_err();
        assert!(err.to_string().contains("r9") && err.to_string().contains("e5"));

        let err = parse(json!({"r": {"text": "a b", "entities": {
            "1": {"tokens": "a", "label": "FOO", "start_ix": 0, "end_ix": 0}}}}))
        .unwrap_err();
        assert!(matches!(err, CorpusError::UnknownLabel { .. }));

        assert!(matches!(parse(json!([1, 2])), Err(CorpusError::Malformed(_))));
    }

    #[test]
    fn overlapping_gold_is_rejected() {
        let err = parse(json!({"r": {"text": "left lung base", "entities": {
            "1": {"tokens": "left lung", "label": "ANAT-DP", "start_ix": 0, "end_ix": 1},
            "2": {"tokens": "lung base", "label": "ANAT-DP", "start_ix": 1, "end_ix": 2}}}}))
        .unwrap_err();
        assert!(matches!(err, CorpusError::Overlap { .. }));
    }

    #[test]
    fn small_fixture_matches_hand_counts() {
        let bytes = include_bytes!("../../tests/data/radgraph_small.json");
        let reports = parse_radgraph(bytes).unwrap();
        assert_eq!(reports.len(), 5);
        // hand-counted from the fixture file
        let counts: Vec<usize> = reports.iter().map(|r| r.gold.len()).collect();
        assert_eq!(counts, vec![4, 3, 5, 2, 0]);
        for r in &reports {
            super::super::validate_spans(&r.text, &r.gold).unwrap();
        }
    }

    #[test]
    fn serialization_round_trips() {
        let bytes = include_bytes!("../../tests/data/radgraph_small.json");
        let reports = parse_radgraph(bytes).unwrap();
        let json = to_radgraph_json(&reports).unwrap();
        let again = parse_radgraph(json.to_string().as_bytes()).unwrap();
        assert_eq!(reports, again);
    }
}
