use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_output_with_logits, ExtractError, Extractor, LabelRecord, SentencePrediction};
use crate::corpus::{EntityType, Sentence};
use crate::text::{match_phrases, word_forms, CueLexicon, CuePolarity, CueScan};

const BASE_LOGIT: f64 = 2.0;
const NEAR_CUE_BONUS: f64 = 1.0;
const COMPETING_CUE_PENALTY: f64 = 1.0;
const NEAR_CUE_TOKENS: usize = 3;

/// Lexicons and cue lists for the rule baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ruleset {
    pub id: String,
    pub anatomy: Vec<String>,
    pub observations: Vec<String>,
    #[serde(default)]
    pub cues: CueLexicon,
}

fn owned(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for Ruleset {
    fn default() -> Self {
        Self {
            id: "default".into(),
            anatomy: owned(&[
                "lung", "lungs", "lung volumes", "left lung", "right lung", "lobe", "upper lobe",
                "lower lobe", "middle lobe", "lingula", "base", "bases", "apex", "apices", "pleural",
                "heart", "cardiac", "cardiomediastinal", "mediastinum", "mediastinal", "hilar",
                "hila", "silhouette", "costophrenic angle", "costophrenic angles", "diaphragm",
                "hemidiaphragm", "aorta", "aortic", "spine", "thoracic spine", "osseous", "bony",
                "ribs", "rib", "chest", "thorax", "pulmonary", "vascular", "vasculature", "trachea",
                "abdomen", "soft tissues",
            ]),
            observations: owned(&[
                "effusion", "effusions", "pneumothorax", "consolidation", "consolidations", "edema",
                "opacity", "opacities", "opacification", "atelectasis", "pneumonia", "infiltrate",
                "infiltrates", "cardiomegaly", "enlarged", "enlargement", "nodule", "nodules",
                "mass", "fracture", "fractures", "congestion", "clear", "normal", "unremarkable",
                "stable", "unchanged", "tortuous", "calcified", "calcification", "thickening",
                "scarring", "hyperinflation", "emphysema", "infection", "aspiration", "collapse",
                "degenerative changes", "abnormality", "process", "lesion", "tube", "catheter",
            ]),
            cues: CueLexicon::default(),
        }
    }
}

impl Ruleset {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExtractError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| ExtractError::Ruleset(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&bytes).map_err(|e| ExtractError::Ruleset(format!("{}: {e}", path.display())))
    }

    /// Spans with pseudo-logits for every entity type the lexicons find in `text`.
    pub fn label(&self, text: &str) -> Vec<LabelRecord> {
        let scan = CueScan::new(text, &self.cues);
        let words: Vec<String> = scan.tokens.iter().map(|t| t.text.clone()).collect();
        let phrases: Vec<Vec<String>> = self
            .anatomy
            .iter()
            .chain(&self.observations)
            .map(|p| word_forms(p))
            .collect();
        let cue_tokens: Vec<bool> = (0..words.len())
            .map(|i| scan.hits.iter().any(|h| h.first <= i && i <= h.last))
            .collect();
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::new();
        for (first, last, pi) in match_phrases(&words, &phrases) {
            if (first..=last).any(|i| cue_tokens[i]) {
                continue;
            }
            let start = scan.tokens[first].start;
            let end = scan.tokens[last].end;
            let (entity_type, logit) = if pi < self.anatomy.len() {
                (EntityType::AnatDp, BASE_LOGIT)
            } else {
                observation_label(&scan, first, last)
            };
            out.push(LabelRecord {
                entity_type: entity_type.to_string(),
                entity_value: chars[start..end].iter().collect(),
                start_position: Some(start as i64),
                end_position: Some(end as i64),
                logit: Some(logit),
            });
        }
        out
    }
}

fn observation_label(scan: &CueScan, first: usize, last: usize) -> (EntityType, f64) {
    let Some(cue) = scan.governing_cue(first) else {
        let any_cue = scan.clause_has(first, last, CuePolarity::Negation)
            || scan.clause_has(first, last, CuePolarity::Uncertainty);
        let logit = BASE_LOGIT - if any_cue { COMPETING_CUE_PENALTY } else { 0.0 };
        return (EntityType::ObsDp, logit);
    };
    let (entity, competing) = match cue.polarity {
        CuePolarity::Negation => (EntityType::ObsDa, CuePolarity::Uncertainty),
        CuePolarity::Uncertainty => (EntityType::ObsU, CuePolarity::Negation),
    };
    let mut logit = BASE_LOGIT;
    if first - cue.last <= NEAR_CUE_TOKENS {
        logit += NEAR_CUE_BONUS;
    }
    if scan.clause_has(first, last, competing) {
        logit -= COMPETING_CUE_PENALTY;
    }
    (entity, logit)
}

/// Lexicon-and-cue extractor: deterministic, and each prediction depends only on its sentence.
#[derive(Debug, Clone)]
pub struct RuleBackend {
    rules: Ruleset,
}

impl RuleBackend {
    pub fn new(rules: Ruleset) -> Result<Self, ExtractError> {
        if rules.anatomy.is_empty() && rules.observations.is_empty() {
            return Err(ExtractError::EmptyRuleset(rules.id));
        }
        Ok(Self { rules })
    }

    pub fn ruleset(&self) -> &Ruleset {
        &self.rules
    }
}

impl Extractor for RuleBackend {
    fn id(&self) -> String {
        format!("rule:{}", self.rules.id)
    }

    fn extract(
        &self,
        sentences: &[Sentence],
        target: EntityType,
    ) -> Result<Vec<SentencePrediction>, ExtractError> {
        let id = self.id();
        Ok(sentences
            .iter()
            .map(|s| {
                let records: Vec<LabelRecord> = self
                    .rules
                    .label(&s.text)
                    .into_iter()
                    .filter(|r| r.entity_type == target.as_str())
                    .collect();
                let raw = serde_json::to_string(&records).expect("records serialize");
                let parsed = parse_output_with_logits(&raw, &s.text, target, None);
                SentencePrediction::from_parsed(s, target, &id, raw, parsed)
            })
            .collect())
    }
}
