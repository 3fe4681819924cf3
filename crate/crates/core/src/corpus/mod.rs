//! Corpus ingestion and sentence-level example construction.
//!
//! Reports arrive in the RadGraph interchange format ([`parse_radgraph`]), are
//! split into sentence examples with spans rebased into sentence coordinates
//! ([`split_sentences`]), and become per-entity training sets with explicit
//! empty-list negatives ([`build_entity_dataset`]).

mod dataset;
mod radgraph;
mod sentences;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{self, CharIndex};

pub use dataset::{
    augmentation_plan, build_entity_dataset, mix_datasets, AugmentationEntry, DatasetExample,
    EntityDataset,
};
pub use radgraph::{parse_radgraph, to_radgraph_json};
pub use sentences::{reassemble, split_sentences, split_corpus, reports_from_sentences};
pub use stats::{corpus_stats, CorpusStats, EntityCounts, SplitCounts};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed corpus document: {0}")]
    Malformed(String),
    #[error("report {report_id}: entity {entity_id}: unknown label {label:?}")]
    UnknownLabel {
        report_id: String,
        entity_id: String,
        label: String,
    },
    #[error("report {report_id}: entity {entity_id}: token range [{start_ix}, {end_ix}] outside 0..{n_tokens}")]
    TokenOutOfRange {
        report_id: String,
        entity_id: String,
        start_ix: i64,
        end_ix: i64,
        n_tokens: usize,
    },
    #[error("report {report_id}: entity {entity_id}: span text {found:?} does not match tokens {expected:?}")]
    Unanchored {
        report_id: String,
        entity_id: String,
        expected: String,
        found: String,
    },
    #[error("report {report_id}: gold spans {first} and {second} overlap")]
    Overlap {
        report_id: String,
        first: String,
        second: String,
    },
    #[error("cannot mix datasets for {gold} and {synthetic}")]
    EntityMismatch {
        gold: EntityType,
        synthetic: EntityType,
    },
    #[error("synthetic pool has {available} examples, {requested} requested")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("invalid mixing ratio {0}")]
    InvalidRatio(f64),
    #[error("sentences of report {0} are not contiguous")]
    NonContiguous(String),
}

/// The four RadGraph entity labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "ANAT-DP")]
    AnatDp,
    #[serde(rename = "OBS-DP")]
    ObsDp,
    #[serde(rename = "OBS-DA")]
    ObsDa,
    #[serde(rename = "OBS-U")]
    ObsU,
}

impl EntityType {
    pub const ALL: [EntityType; 4] = [Self::AnatDp, Self::ObsDp, Self::ObsDa, Self::ObsU];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AnatDp => "ANAT-DP",
            Self::ObsDp => "OBS-DP",
            Self::ObsDa => "OBS-DA",
            Self::ObsU => "OBS-U",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::AnatDp => "anatomy, definitely present",
            Self::ObsDp => "observation, definitely present",
            Self::ObsDa => "observation, definitely absent",
            Self::ObsU => "observation, uncertain",
        }
    }

    pub fn is_observation(self) -> bool {
        !matches!(self, Self::AnatDp)
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown entity label {0:?}")]
pub struct UnknownEntityType(pub String);

impl FromStr for EntityType {
    type Err = UnknownEntityType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| UnknownEntityType(s.to_string()))
    }
}

/// Anything with a label and code-point extent in a host text.
pub trait SpanLike {
    fn entity_type(&self) -> EntityType;
    fn value(&self) -> &str;
    fn start(&self) -> usize;
    fn end(&self) -> usize;

    fn overlaps<S: SpanLike + ?Sized>(&self, other: &S) -> bool {
        self.start() < other.end() && other.start() < self.end()
    }

    /// `host[start..end] == value` with `start < end`.
    fn anchors_in(&self, host: &str) -> bool {
        self.start() < self.end()
            && text::slice_chars(host, self.start(), self.end()) == Some(self.value())
    }
}

impl<T: SpanLike> SpanLike for &T {
    fn entity_type(&self) -> EntityType {
        (**self).entity_type()
    }
    fn value(&self) -> &str {
        (**self).value()
    }
    fn start(&self) -> usize {
        (**self).start()
    }
    fn end(&self) -> usize {
        (**self).end()
    }
}

/// A labeled code-point span; the unit of gold and predicted annotation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub entity_type: EntityType,
    #[serde(rename = "entity_value")]
    pub value: String,
    #[serde(rename = "start_position")]
    pub start: usize,
    #[serde(rename = "end_position")]
    pub end: usize,
}

impl EntitySpan {
    pub fn new(entity_type: EntityType, value: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            entity_type,
            value: value.into(),
            start,
            end,
        }
    }

    /// Build a span from offsets, taking the value from `host`.
    pub fn from_host(entity_type: EntityType, host: &str, start: usize, end: usize) -> Option<Self> {
        let value = text::slice_chars(host, start, end)?;
        (start < end).then(|| Self::new(entity_type, value, start, end))
    }

    pub fn shifted(&self, delta: isize) -> Self {
        Self {
            start: (self.start as isize + delta) as usize,
            end: (self.end as isize + delta) as usize,
            ..self.clone()
        }
    }
}

impl SpanLike for EntitySpan {
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

/// First pair of overlapping spans, by index, if any.
pub fn find_overlap<S: SpanLike>(spans: &[S]) -> Option<(usize, usize)> {
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by_key(|&i| (spans[i].start(), spans[i].end()));
    order
        .windows(2)
        .find(|w| spans[w[0]].overlaps(&spans[w[1]]) || spans[w[0]].end() > spans[w[1]].start())
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn parse(tag: &str) -> Option<Self> {
        match tag.trim().to_ascii_lowercase().as_str() {
            "train" => Some(Self::Train),
            "dev" | "val" | "validation" => Some(Self::Dev),
            "test" => Some(Self::Test),
            _ => None,
        }
    }
}

/// A full report with its gold annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub text: String,
    pub gold: Vec<EntitySpan>,
    #[serde(rename = "split_tag")]
    pub split: Split,
    #[serde(rename = "source_tag", default)]
    pub source: String,
}

/// Stable identifier of a sentence: `<report_id>#<index>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentenceId {
    pub report_id: String,
    pub index: usize,
}

impl SentenceId {
    pub fn new(report_id: impl Into<String>, index: usize) -> Self {
        Self {
            report_id: report_id.into(),
            index,
        }
    }
}

impl fmt::Display for SentenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.report_id, self.index)
    }
}

impl FromStr for SentenceId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (report, index) = s
            .rsplit_once('#')
            .ok_or_else(|| CorpusError::Malformed(format!("sentence id {s:?} lacks '#<index>'")))?;
        let index = index
            .parse()
            .map_err(|_| CorpusError::Malformed(format!("sentence id {s:?} has a bad index")))?;
        Ok(Self::new(report, index))
    }
}

impl Serialize for SentenceId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SentenceId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One sentence of a report; the record of the line-delimited corpus format.
///
/// `text` carries any whitespace that follows the sentence in the report, so
/// concatenating a report's sentences reproduces the report exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub report_id: String,
    pub index: usize,
    pub text: String,
    pub report_offset: usize,
    pub gold: Vec<EntitySpan>,
}

impl Sentence {
    pub fn id(&self) -> SentenceId {
        SentenceId::new(self.report_id.clone(), self.index)
    }

    pub fn gold_of(&self, entity: EntityType) -> impl Iterator<Item = &EntitySpan> {
        self.gold.iter().filter(move |s| s.entity_type == entity)
    }

    pub fn has_entity(&self, entity: EntityType) -> bool {
        self.gold_of(entity).next().is_some()
    }

    pub fn char_len(&self) -> usize {
        text::char_len(&self.text)
    }
}

/// Check every span anchors in `host` and no two overlap.
pub fn validate_spans<S: SpanLike>(host: &str, spans: &[S]) -> Result<(), String> {
    let index = CharIndex::new(host);
    for (i, s) in spans.iter().enumerate() {
        if s.start() >= s.end() || index.slice(host, s.start(), s.end()) != Some(s.value()) {
            return Err(format!(
                "span {i} [{}, {}) {:?} does not anchor",
                s.start(),
                s.end(),
                s.value()
            ));
        }
    }
    if let Some((a, b)) = find_overlap(spans) {
        return Err(format!("spans {a} and {b} overlap"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entity_type_round_trips() {
        for e in EntityType::ALL {
            assert_eq!(e.as_str().parse::<EntityType>().unwrap(), e);
            let json = serde_json::to_string(&e).unwrap();
            assert_eq!(json, format!("\"{}\"", e.as_str()));
            assert_eq!(serde_json::from_str::<EntityType>(&json).unwrap(), e);
        }
        assert!("OBS-X".parse::<EntityType>().is_err());
    }

    #[test]
    fn span_serializes_with_model_output_field_names() {
        let s = EntitySpan::new(EntityType::ObsDa, "effusion", 3, 11);
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"entity_type": "OBS-DA", "entity_value": "effusion",
                               "start_position": 3, "end_position": 11})
        );
    }

    #[test]
    fn sentence_id_parses_last_hash() {
        let id: SentenceId = "r#1#12".parse().unwrap();
        assert_eq!(id, SentenceId::new("r#1", 12));
        assert_eq!(id.to_string(), "r#1#12");
        assert!("nohash".parse::<SentenceId>().is_err());
    }

    #[test]
    fn overlap_detection() {
        let a = EntitySpan::new(EntityType::AnatDp, "ab", 0, 2);
        let b = EntitySpan::new(EntityType::ObsDp, "bc", 1, 3);
        let c = EntitySpan::new(EntityType::ObsDp, "cd", 2, 4);
        assert_eq!(find_overlap(&[a.clone(), b.clone()]), Some((0, 1)));
        assert_eq!(find_overlap(&[c, a]), None);
        assert!(validate_spans("abcd", &[b]).is_ok());
    }
}
