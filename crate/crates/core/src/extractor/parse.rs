use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PredictedSpan;
use crate::confidence::logit_to_confidence;
use crate::corpus::{EntityType, Sentence};
use crate::text::{find_all, CharIndex};

/// Logit assigned to a record that carries no score of its own.
pub const DEFAULT_LOGIT: f64 = 0.0;

/// One span record of structured model output, before anchoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub entity_type: String,
    pub entity_value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_position: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_position: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("model output is not a span list: {0}")]
pub struct MalformedOutput(pub String);

/// Pull the span list out of a generation, tolerating surrounding prose.
pub fn parse_records(raw: &str) -> Result<Vec<LabelRecord>, MalformedOutput> {
    let trimmed = raw.trim();
    if let Ok(records) = serde_json::from_str::<Vec<LabelRecord>>(trimmed) {
        return Ok(records);
    }
    let (Some(open), Some(close)) = (trimmed.find('['), trimmed.rfind(']')) else {
        return Err(MalformedOutput(excerpt(trimmed)));
    };
    if open >= close {
        return Err(MalformedOutput(excerpt(trimmed)));
    }
    serde_json::from_str(&trimmed[open..=close]).map_err(|e| MalformedOutput(e.to_string()))
}

fn excerpt(s: &str) -> String {
    s.chars().take(80).collect()
}

/// Resolve `value` to code-point offsets in `text`.
///
/// Claimed offsets win when they slice exactly to `value`; otherwise the
/// occurrence closest to the claimed start is chosen (earliest on ties, first
/// occurrence when nothing is claimed). `None` when `value` does not occur.
pub fn anchor_value(text: &str, value: &str, claimed: Option<(i64, i64)>) -> Option<(usize, usize)> {
    if value.is_empty() {
        return None;
    }
    let len = value.chars().count();
    if let Some((s, e)) = claimed {
        if s >= 0 && e > s {
            let index = CharIndex::new(text);
            if index.slice(text, s as usize, e as usize) == Some(value) {
                return Some((s as usize, e as usize));
            }
        }
    }
    let target = claimed.map_or(0, |(s, _)| s.max(0) as usize);
    find_all(text, value)
        .into_iter()
        .min_by_key(|&o| (o.abs_diff(target), o))
        .map(|o| (o, o + len))
}

/// Anchored spans for one sentence plus counts of everything dropped on the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedOutput {
    pub spans: Vec<PredictedSpan>,
    pub wrong_type: usize,
    pub unanchorable: usize,
    pub reanchored: usize,
    pub malformed: bool,
}

pub fn parse_model_output(raw: &str, sentence: &Sentence, target: EntityType) -> ParsedOutput {
    parse_output_with_logits(raw, &sentence.text, target, None)
}

/// Parse, type-filter, anchor and de-overlap a generation.
///
/// `logits[i]` scores the i-th record of the raw list; a record's own `logit`
/// field takes precedence. Overlapping survivors keep the longer span.
pub fn parse_output_with_logits(
    raw: &str,
    text: &str,
    target: EntityType,
    logits: Option<&[f64]>,
) -> ParsedOutput {
    let records = match parse_records(raw) {
        Ok(r) => r,
        Err(e) => {
            tracing::warn!(error = %e, "malformed model output");
            return ParsedOutput {
                malformed: true,
                ..Default::default()
            };
        }
    };
    let mut out = ParsedOutput::default();
    let mut candidates = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        if rec.entity_type.parse::<EntityType>().ok() != Some(target) {
            out.wrong_type += 1;
            continue;
        }
        let claimed = rec.start_position.zip(rec.end_position);
        let Some((start, end)) = anchor_value(text, &rec.entity_value, claimed) else {
            out.unanchorable += 1;
            continue;
        };
        if claimed != Some((start as i64, end as i64)) {
            out.reanchored += 1;
        }
        let logit = rec
            .logit
            .or_else(|| logits.and_then(|l| l.get(i).copied()))
            .unwrap_or(DEFAULT_LOGIT);
        let Ok(confidence) = logit_to_confidence(logit) else {
            out.unanchorable += 1;
            continue;
        };
        candidates.push(PredictedSpan {
            entity_type: target,
            value: rec.entity_value.clone(),
            start,
            end,
            logit,
            confidence,
            calibrated: None,
        });
    }
    if out.wrong_type > 0 {
        tracing::warn!(count = out.wrong_type, %target, "dropped records of another entity type");
    }
    // longer first, then earlier, then higher score
    candidates.sort_by(|a, b| {
        (b.end - b.start)
            .cmp(&(a.end - a.start))
            .then(a.start.cmp(&b.start))
            .then(b.logit.total_cmp(&a.logit))
    });
    for c in candidates {
        if !out.spans.iter().any(|k| k.start < c.end && c.start < k.end) {
            out.spans.push(c);
        }
    }
    out.spans.sort_by_key(|s| (s.start, s.end));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SpanLike;
    use proptest::prelude::*;

    const OBS_DA: EntityType = EntityType::ObsDa;

    #[test]
    fn direct_record_parses() {
        let raw = r#"[{"entity_type":"OBS-DA","entity_value":"effusion","start_position":3,"end_position":11}]"#;
        let p = parse_output_with_logits(raw, "no effusion", OBS_DA, Some(&[1.5]));
        assert_eq!(p.spans.len(), 1);
        let s = &p.spans[0];
        assert_eq!((s.start, s.end, s.value.as_str()), (3, 11, "effusion"));
        assert_eq!(s.logit, 1.5);
        assert_eq!(p.reanchored, 0);
    }

    #[test]
    fn empty_list_is_not_malformed() {
        let p = parse_output_with_logits("[]", "no effusion", OBS_DA, None);
        assert!(p.spans.is_empty() && !p.malformed);
        let p = parse_output_with_logits("Output: []", "x", OBS_DA, None);
        assert!(!p.malformed);
    }

    #[test]
    fn garbage_is_flagged_malformed() {
        for raw in ["I cannot help", "{\"a\": 1}", "] [", ""] {
            assert!(parse_output_with_logits(raw, "x", OBS_DA, None).malformed, "{raw:?}");
        }
    }

    #[test]
    fn drifted_offsets_are_reanchored() {
        let text = "lungs clear, possible edema";
        // offsets point at "clear"
        let raw = r#"[{"entity_type":"OBS-U","entity_value":"edema","start_position":6,"end_position":11}]"#;
        let p = parse_output_with_logits(raw, text, EntityType::ObsU, None);
        let expected = text.find("edema").unwrap();
        assert_eq!((p.spans[0].start, p.spans[0].end), (expected, expected + 5));
        assert_eq!(p.reanchored, 1);
    }

    #[test]
    fn reanchoring_prefers_closest_occurrence() {
        let text = "edema here, edema there";
        assert_eq!(anchor_value(text, "edema", Some((10, 15))), Some((12, 17)));
        assert_eq!(anchor_value(text, "edema", None), Some((0, 5)));
        assert_eq!(anchor_value(text, "edema", Some((6, 11))), Some((0, 5)));
        assert_eq!(anchor_value(text, "ghost", Some((0, 5))), None);
    }

    #[test]
    fn wrong_type_and_unanchorable_are_counted() {
        let raw = r#"[{"entity_type":"OBS-DP","entity_value":"effusion"},
                      {"entity_type":"OBS-DA","entity_value":"ghost"},
                      {"entity_type":"BOGUS","entity_value":"no"}]"#;
        let p = parse_output_with_logits(raw, "no effusion", OBS_DA, None);
        assert!(p.spans.is_empty());
        assert_eq!((p.wrong_type, p.unanchorable), (2, 1));
    }

    #[test]
    fn overlaps_keep_longer_span() {
        let text = "small left pleural effusion";
        let raw = r#"[{"entity_type":"OBS-DA","entity_value":"pleural effusion"},
                      {"entity_type":"OBS-DA","entity_value":"effusion"},
                      {"entity_type":"OBS-DA","entity_value":"small"}]"#;
        let p = parse_output_with_logits(raw, text, OBS_DA, None);
        let values: Vec<_> = p.spans.iter().map(|s| s.value.as_str()).collect();
        assert_eq!(values, vec!["small", "pleural effusion"]);
    }

    #[test]
    fn record_logit_overrides_side_list() {
        let raw = r#"[{"entity_type":"OBS-DA","entity_value":"effusion","logit":-2.0}]"#;
        let p = parse_output_with_logits(raw, "no effusion", OBS_DA, Some(&[3.0]));
        assert_eq!(p.spans[0].logit, -2.0);
        assert!((p.spans[0].confidence - 1.0 / (1.0 + 2f64.exp())).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn output_spans_anchor_and_never_overlap(
            text in "[a-c ]{0,30}",
            recs in prop::collection::vec(("[a-c]{1,3}", 0i64..35, 0i64..6), 0..8),
        ) {
            let records: Vec<LabelRecord> = recs.iter().map(|(v, s, l)| LabelRecord {
                entity_type: "OBS-DA".into(),
                entity_value: v.clone(),
                start_position: Some(*s),
                end_position: Some(s + l),
                logit: None,
            }).collect();
            let raw = serde_json::to_string(&records).unwrap();
            let p = parse_output_with_logits(&raw, &text, OBS_DA, None);
            for (i, s) in p.spans.iter().enumerate() {
                prop_assert!(s.anchors_in(&text));
                for t in &p.spans[i + 1..] {
                    prop_assert!(!s.overlaps(t));
                }
            }
            prop_assert!(p.spans.len() + p.unanchorable <= records.len());
        }
    }
}
