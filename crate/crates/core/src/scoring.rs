//! Exact-span matching and evaluation metrics.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EntityType, Sentence, SentenceId, SpanLike};
use crate::extractor::SentencePrediction;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchStats {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MatchStats {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

impl Add for MatchStats {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl AddAssign for MatchStats {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for MatchStats {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Count exact matches on (type, start, end, value); each gold span matches at most once.
pub fn match_spans<P: SpanLike, G: SpanLike>(predicted: &[P], gold: &[G]) -> MatchStats {
    let mut remaining: HashMap<(EntityType, usize, usize, &str), usize> = HashMap::new();
    for g in gold {
        *remaining.entry((g.entity_type(), g.start(), g.end(), g.value())).or_default() += 1;
    }
    let mut tp = 0;
    for p in predicted {
        if let Some(n) = remaining.get_mut(&(p.entity_type(), p.start(), p.end(), p.value())) {
            if *n > 0 {
                *n -= 1;
                tp += 1;
            }
        }
    }
    MatchStats::new(tp, predicted.len() - tp, gold.len() - tp)
}

/// TP / (TP + FP + FN), with an empty prediction on empty gold scoring 1.
pub fn entity_match_score(stats: MatchStats) -> f64 {
    if stats.is_empty() {
        1.0
    } else {
        stats.tp as f64 / (stats.tp + stats.fp + stats.fn_) as f64
    }
}

/// Precision, recall and F1; an undefined ratio is reported as 0 and flagged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub precision_undefined: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub recall_undefined: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl Prf {
    pub fn flags(&self) -> String {
        let mut f = Vec::new();
        if self.precision_undefined {
            f.push("precision_undefined");
        }
        if self.recall_undefined {
            f.push("recall_undefined");
        }
        f.join(",")
    }
}

pub fn precision_recall_f1(stats: MatchStats) -> Prf {
    let ratio = |num: usize, den: usize| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
    let (precision, precision_undefined) = ratio(stats.tp, stats.tp + stats.fp);
    let (recall, recall_undefined) = ratio(stats.tp, stats.tp + stats.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf {
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Each entity is scored only on sentences holding at least one gold span of that type.
    PresenceConditioned,
    /// Every sentence is scored.
    Full,
}

impl std::str::FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "presence_conditioned" | "presence-conditioned" | "presence" => Ok(Self::PresenceConditioned),
            "full" => Ok(Self::Full),
            _ => Err(format!("unknown evaluation mode {s:?}: expected presence_conditioned or full")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityEval {
    pub entity_type: EntityType,
    /// Sentences scored for this entity.
    pub sentences: usize,
    pub stats: MatchStats,
    #[serde(flatten)]
    pub metrics: Prf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub entities: Vec<EntityEval>,
    pub micro_stats: MatchStats,
    pub micro: Prf,
    /// Unweighted mean of the per-entity metrics.
    #[serde(rename = "macro")]
    pub macro_: MacroMetrics,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoringError {
    #[error("prediction for unknown sentence {0}")]
    UnknownSentence(String),
}

impl EvalReport {
    pub fn entity(&self, entity: EntityType) -> Option<&EntityEval> {
        self.entities.iter().find(|e| e.entity_type == entity)
    }

    /// Tab-separated table: one row per entity, then micro and macro rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("entity_type\tsentences\ttp\tfp\tfn\tprecision\trecall\tf1\tflags\n");
        let mut row = |name: &str, n: String, s: Option<MatchStats>, p: f64, r: f64, f: f64, flags: String| {
            let (tp, fp, fn_) = s.map_or((String::new(), String::new(), String::new()), |s| {
                (s.tp.to_string(), s.fp.to_string(), s.fn_.to_string())
            });
            let _ = writeln!(out, "{name}\t{n}\t{tp}\t{fp}\t{fn_}\t{p:.4}\t{r:.4}\t{f:.4}\t{flags}");
        };
        for e in &self.entities {
            let m = &e.metrics;
            row(e.entity_type.as_str(), e.sentences.to_string(), Some(e.stats), m.precision, m.recall, m.f1, m.flags());
        }
        let total: usize = self.entities.iter().map(|e| e.sentences).sum();
        let m = &self.micro;
        row("micro", total.to_string(), Some(self.micro_stats), m.precision, m.recall, m.f1, m.flags());
        let m = &self.macro_;
        row("macro", String::new(), None, m.precision, m.recall, m.f1, String::new());
        out
    }
}

/// Score predictions against sentence gold, per entity type present in `predictions`.
///
/// A scored sentence without a prediction for the entity counts as an empty prediction.
pub fn evaluate(
    predictions: &[SentencePrediction],
    sentences: &[Sentence],
    mode: EvalMode,
) -> Result<EvalReport, ScoringError> {
    let known: HashMap<SentenceId, &Sentence> = sentences.iter().map(|s| (s.id(), s)).collect();
    let mut by_entity: BTreeMap<EntityType, HashMap<&SentenceId, &SentencePrediction>> = BTreeMap::new();
    for p in predictions {
        if !known.contains_key(&p.sentence_id) {
            return Err(ScoringError::UnknownSentence(p.sentence_id.to_string()));
        }
        by_entity.entry(p.target_entity).or_default().insert(&p.sentence_id, p);
    }
    let mut entities = Vec::with_capacity(by_entity.len());
    for (entity, preds) in &by_entity {
        let mut stats = MatchStats::default();
        let mut scored = 0;
        for s in sentences {
            if mode == EvalMode::PresenceConditioned && !s.has_entity(*entity) {
                continue;
            }
            scored += 1;
            let gold: Vec<_> = s.gold_of(*entity).collect();
            stats += match preds.get(&s.id()) {
                Some(p) => match_spans(&p.spans, &gold),
                None => match_spans::<crate::corpus::EntitySpan, _>(&[], &gold),
            };
        }
        entities.push(EntityEval {
            entity_type: *entity,
            sentences: scored,
            stats,
            metrics: precision_recall_f1(stats),
        });
    }
    Ok(summarize(mode, entities))
}

fn summarize(mode: EvalMode, entities: Vec<EntityEval>) -> EvalReport {
    let micro_stats: MatchStats = entities.iter().map(|e| e.stats).sum();
    let n = entities.len().max(1) as f64;
    let macro_ = MacroMetrics {
        precision: entities.iter().map(|e| e.metrics.precision).sum::<f64>() / n,
        recall: entities.iter().map(|e| e.metrics.recall).sum::<f64>() / n,
        f1: entities.iter().map(|e| e.metrics.f1).sum::<f64>() / n,
    };
    EvalReport {
        mode,
        entities,
        micro_stats,
        micro: precision_recall_f1(micro_stats),
        macro_,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntitySpan;
    use crate::corpus::EntityType::*;
    use crate::extractor::{PredictedSpan, PredictionStatus};
    use proptest::prelude::*;

    fn span(t: EntityType, s: usize, e: usize) -> EntitySpan {
        EntitySpan::new(t, "x".repeat(e - s), s, e)
    }

    #[test]
    fn identity_and_counting() {
        let gold = vec![span(AnatDp, 0, 2), span(ObsDp, 3, 5)];
        assert_eq!(match_spans(&gold, &gold), MatchStats::new(2, 0, 0));
        let gold3 = vec![span(AnatDp, 0, 2), span(ObsDp, 3, 5), span(ObsDp, 6, 8)];
        let pred3 = vec![span(AnatDp, 0, 2), span(ObsDp, 3, 5), span(ObsDa, 6, 8)];
        assert_eq!(match_spans(&pred3, &gold3), MatchStats::new(2, 1, 1));
    }

    #[test]
    fn value_is_part_of_the_key() {
        let g = vec![EntitySpan::new(ObsDp, "edema", 0, 5)];
        let p = vec![EntitySpan::new(ObsDp, "edemx", 0, 5)];
        assert_eq!(match_spans(&p, &g).tp, 0);
    }

    #[test]
    fn match_score_formula() {
        assert_eq!(entity_match_score(MatchStats::new(2, 1, 1)), 0.5);
        assert_eq!(entity_match_score(MatchStats::new(5, 0, 0)), 1.0);
        assert_eq!(entity_match_score(MatchStats::new(0, 0, 0)), 1.0);
    }

    #[test]
    fn prf_and_degenerate_flags() {
        let m = precision_recall_f1(MatchStats::new(2, 1, 1));
        for v in [m.precision, m.recall, m.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
        assert!(!m.precision_undefined);
        let m = precision_recall_f1(MatchStats::new(0, 0, 3));
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.precision_undefined && !m.recall_undefined);
    }

    fn sentence(i: usize, gold: Vec<EntitySpan>) -> Sentence {
        Sentence {
            report_id: "r".into(),
            index: i,
            text: "x".repeat(20),
            report_offset: 0,
            gold,
        }
    }

    fn prediction(i: usize, entity: EntityType, spans: &[EntitySpan]) -> SentencePrediction {
        let mut p = SentencePrediction::empty(
            SentenceId::new("r", i),
            entity,
            "test",
            PredictionStatus::Ok,
            String::new(),
        );
        p.spans = spans
            .iter()
            .map(|s| PredictedSpan {
                entity_type: s.entity_type,
                value: s.value.clone(),
                start: s.start,
                end: s.end,
                logit: 0.0,
                confidence: 0.5,
                calibrated: None,
            })
            .collect();
        p
    }

    #[test]
    fn perfect_single_sentence_in_both_modes() {
        let g = vec![span(ObsU, 0, 3)];
        let sents = vec![sentence(0, g.clone())];
        let preds = vec![prediction(0, ObsU, &g)];
        for mode in [EvalMode::Full, EvalMode::PresenceConditioned] {
            let r = evaluate(&preds, &sents, mode).unwrap();
            assert_eq!(r.entity(ObsU).unwrap().metrics.f1, 1.0);
        }
    }

    #[test]
    fn negative_sentence_false_positives_only_hurt_full_mode() {
        let g = vec![span(ObsU, 0, 3)];
        let sents = vec![sentence(0, g.clone()), sentence(1, vec![]), sentence(2, vec![])];
        let preds = vec![
            prediction(0, ObsU, &g),
            prediction(1, ObsU, &[span(ObsU, 4, 6)]),
            prediction(2, ObsU, &[span(ObsU, 1, 2)]),
        ];
        let pc = evaluate(&preds, &sents, EvalMode::PresenceConditioned).unwrap();
        let full = evaluate(&preds, &sents, EvalMode::Full).unwrap();
        assert_eq!(pc.entity(ObsU).unwrap().sentences, 1);
        assert_eq!(full.entity(ObsU).unwrap().stats, MatchStats::new(1, 2, 0));
        assert!(pc.entity(ObsU).unwrap().metrics.f1 > full.entity(ObsU).unwrap().metrics.f1);
    }

    #[test]
    fn unknown_sentence_is_an_error() {
        let sents = vec![sentence(0, vec![])];
        let preds = vec![prediction(5, ObsU, &[])];
        assert!(matches!(evaluate(&preds, &sents, EvalMode::Full), Err(ScoringError::UnknownSentence(_))));
    }

    #[test]
    fn tsv_has_entity_micro_and_macro_rows() {
        let g = vec![span(ObsU, 0, 3)];
        let r = evaluate(&[prediction(0, ObsU, &g)], &[sentence(0, g.clone())], EvalMode::Full).unwrap();
        let tsv = r.to_tsv();
        let lines: Vec<_> = tsv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("OBS-U\t1\t1\t0\t0\t1.0000"));
        assert!(lines[2].starts_with("micro\t"));
        let back: EvalReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    fn spans_strategy() -> impl Strategy<Value = Vec<EntitySpan>> {
        prop::collection::vec((0usize..4, 0usize..6, 1usize..3), 0..6).prop_map(|v| {
            let mut out: Vec<EntitySpan> = Vec::new();
            for (t, s, l) in v {
                let sp = span(EntityType::ALL[t], s * 3, s * 3 + l);
                if !out.iter().any(|o| o.overlaps(&sp)) {
                    out.push(sp);
                }
            }
            out
        })
    }

    proptest! {
        #[test]
        fn tp_is_symmetric(a in spans_strategy(), b in spans_strategy()) {
            prop_assert_eq!(match_spans(&a, &b).tp, match_spans(&b, &a).tp);
        }

        #[test]
        fn jaccard_below_precision_and_recall(a in spans_strategy(), b in spans_strategy()) {
            let s = match_spans(&a, &b);
            if s.tp > 0 {
                let m = precision_recall_f1(s);
                let j = entity_match_score(s);
                prop_assert!(j <= m.precision + 1e-15 && j <= m.recall + 1e-15);
            }
        }

        #[test]
        fn adding_a_match_never_lowers_score(a in spans_strategy(), b in spans_strategy()) {
            let before = entity_match_score(match_spans(&a, &b));
            let matched = match_spans(&a, &b);
            // append an unmatched gold span to the predictions when one is free of overlap
            if let Some(g) = b.iter().find(|g| !a.contains(g) && !a.iter().any(|p| p.overlaps(*g))) {
                let mut a2 = a.clone();
                a2.push(g.clone());
                let after = entity_match_score(match_spans(&a2, &b));
                prop_assert!(after >= before);
                prop_assert_eq!(match_spans(&a2, &b).tp, matched.tp + 1);
            }
        }

        #[test]
        fn stats_are_additive(parts in prop::collection::vec((spans_strategy(), spans_strategy()), 1..5)) {
            let summed: MatchStats = parts.iter().map(|(p, g)| match_spans(p, g)).sum();
            let mut total = MatchStats::default();
            for (p, g) in &parts {
                total += match_spans(p, g);
            }
            prop_assert_eq!(summed, total);
            let a = precision_recall_f1(summed);
            let b = precision_recall_f1(total);
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        }
    }
}
