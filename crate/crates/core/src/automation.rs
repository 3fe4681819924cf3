//! Report-level selective automation.
//!
//! The four per-entity prediction streams of a report are merged into one
//! non-overlapping span set, then the report is accepted when enough of its
//! spans clear their entity threshold. Everything else goes to review.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EntitySpan, EntityType, Sentence, SentenceId, SpanLike};
use crate::extractor::{PredictedSpan, SentencePrediction};
use crate::scoring::{entity_match_score, match_spans, MatchStats};

/// Proportions below the target by less than this still pass, so that 19/20 meets 0.95.
const PROPORTION_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AutomationError {
    #[error("acceptance proportion {0} is outside (0, 1]")]
    Proportion(f64),
    #[error("threshold {1} for {0} is outside [0, 1]")]
    Threshold(EntityType, f64),
    #[error("minutes per report must be finite and non-negative, got {0}")]
    Minutes(f64),
    #[error("prediction for unknown sentence {0}")]
    UnknownSentence(String),
}

fn default_true() -> bool {
    true
}
fn default_minutes() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutomationPolicy {
    /// Per-entity τ; an entity without an entry uses 0.
    pub thresholds: BTreeMap<EntityType, f64>,
    /// Minimum fraction of a report's spans that must pass.
    pub proportion: f64,
    #[serde(default = "default_true")]
    pub obs_u_force_review: bool,
    #[serde(default = "default_minutes")]
    pub minutes_per_report: f64,
    #[serde(default)]
    pub use_calibrated: bool,
}

impl AutomationPolicy {
    pub fn new(thresholds: BTreeMap<EntityType, f64>, proportion: f64) -> Self {
        Self {
            thresholds,
            proportion,
            obs_u_force_review: true,
            minutes_per_report: default_minutes(),
            use_calibrated: false,
        }
    }

    /// Thresholds given in `EntityType::ALL` order.
    pub fn from_array(thresholds: [f64; 4], proportion: f64) -> Self {
        Self::new(EntityType::ALL.into_iter().zip(thresholds).collect(), proportion)
    }

    pub fn threshold(&self, entity: EntityType) -> f64 {
        self.thresholds.get(&entity).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), AutomationError> {
        if !(self.proportion > 0.0 && self.proportion <= 1.0) {
            return Err(AutomationError::Proportion(self.proportion));
        }
        for (e, t) in &self.thresholds {
            if !(0.0..=1.0).contains(t) {
                return Err(AutomationError::Threshold(*e, *t));
            }
        }
        if !(self.minutes_per_report.is_finite() && self.minutes_per_report >= 0.0) {
            return Err(AutomationError::Minutes(self.minutes_per_report));
        }
        Ok(())
    }
}

/// Tie-break rank after margin: lower wins.
pub fn entity_priority(entity: EntityType) -> u8 {
    match entity {
        EntityType::AnatDp => 0,
        EntityType::ObsDa => 1,
        EntityType::ObsDp => 2,
        EntityType::ObsU => 3,
    }
}

/// A span in report coordinates with the threshold that governs it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedSpan {
    #[serde(flatten)]
    pub span: PredictedSpan,
    pub sentence_index: usize,
    /// The confidence the policy compares (calibrated when requested).
    pub score: f64,
    pub threshold: f64,
}

impl MergedSpan {
    pub fn margin(&self) -> f64 {
        self.score - self.threshold
    }

    pub fn passes(&self) -> bool {
        self.score >= self.threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictLoser {
    pub entity_type: EntityType,
    pub value: String,
    pub start: usize,
    pub end: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub winner_entity: EntityType,
    pub start: usize,
    pub end: usize,
    pub winning_margin: f64,
    pub losers: Vec<ConflictLoser>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedPrediction {
    pub report_id: String,
    /// Non-overlapping, ordered by start.
    pub spans: Vec<MergedSpan>,
    pub conflicts: Vec<Conflict>,
}

/// Merge candidate spans greedily by margin, entity priority, then start offset.
pub fn merge_spans(report_id: &str, mut candidates: Vec<MergedSpan>) -> MergedPrediction {
    candidates.sort_by(|a, b| {
        b.margin()
            .total_cmp(&a.margin())
            .then(entity_priority(a.span.entity_type).cmp(&entity_priority(b.span.entity_type)))
            .then(a.span.start.cmp(&b.span.start))
            .then(a.span.end.cmp(&b.span.end))
            .then(a.span.value.cmp(&b.span.value))
            .then(b.score.total_cmp(&a.score))
            .then(b.span.logit.total_cmp(&a.span.logit))
    });
    let mut kept: Vec<MergedSpan> = Vec::new();
    let mut losers: Vec<Vec<ConflictLoser>> = Vec::new();
    for c in candidates {
        match kept.iter().position(|k| k.span.overlaps(&c.span)) {
            Some(i) => losers[i].push(ConflictLoser {
                entity_type: c.span.entity_type,
                value: c.span.value.clone(),
                start: c.span.start,
                end: c.span.end,
                margin: c.margin(),
            }),
            None => {
                kept.push(c);
                losers.push(Vec::new());
            }
        }
    }
    let mut conflicts: Vec<Conflict> = kept
        .iter()
        .zip(losers)
        .filter(|(_, l)| !l.is_empty())
        .map(|(k, l)| Conflict {
            winner_entity: k.span.entity_type,
            start: k.span.start,
            end: k.span.end,
            winning_margin: k.margin(),
            losers: l,
        })
        .collect();
    conflicts.sort_by_key(|c| (c.start, c.end));
    kept.sort_by_key(|k| (k.span.start, k.span.end));
    MergedPrediction {
        report_id: report_id.to_string(),
        spans: kept,
        conflicts,
    }
}

/// Lift one report's per-entity predictions to report coordinates and merge them.
pub fn merge_predictions(
    report_id: &str,
    sentences: &[&Sentence],
    predictions: &[&SentencePrediction],
    policy: &AutomationPolicy,
) -> Result<MergedPrediction, AutomationError> {
    let offsets: HashMap<SentenceId, (usize, usize)> = sentences
        .iter()
        .map(|s| (s.id(), (s.index, s.report_offset)))
        .collect();
    let mut candidates = Vec::new();
    for p in predictions {
        let &(index, offset) = offsets
            .get(&p.sentence_id)
            .ok_or_else(|| AutomationError::UnknownSentence(p.sentence_id.to_string()))?;
        for s in &p.spans {
            let mut span = s.clone();
            span.start += offset;
            span.end += offset;
            candidates.push(MergedSpan {
                score: s.score(policy.use_calibrated),
                threshold: policy.threshold(s.entity_type),
                span,
                sentence_index: index,
            });
        }
    }
    Ok(merge_spans(report_id, candidates))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Review,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Proportion,
    ObsUOverride,
    NoPredictions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanDecision {
    pub entity_type: EntityType,
    #[serde(rename = "entity_value")]
    pub value: String,
    #[serde(rename = "start_position")]
    pub start: usize,
    #[serde(rename = "end_position")]
    pub end: usize,
    pub score: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutomationDecision {
    pub report_id: String,
    pub verdict: Verdict,
    pub passing_proportion: f64,
    pub trigger: Trigger,
    pub spans: Vec<SpanDecision>,
}

impl AutomationDecision {
    pub fn has_entity(&self, entity: EntityType) -> bool {
        self.spans.iter().any(|s| s.entity_type == entity)
    }

    pub fn entity_spans(&self) -> Vec<EntitySpan> {
        self.spans
            .iter()
            .map(|s| EntitySpan::new(s.entity_type, s.value.clone(), s.start, s.end))
            .collect()
    }
}

/// Accept when the passing fraction reaches `p` and no OBS-U override applies.
pub fn decide_report(merged: &MergedPrediction, policy: &AutomationPolicy) -> AutomationDecision {
    let spans: Vec<SpanDecision> = merged
        .spans
        .iter()
        .map(|m| SpanDecision {
            entity_type: m.span.entity_type,
            value: m.span.value.clone(),
            start: m.span.start,
            end: m.span.end,
            score: m.score,
            threshold: m.threshold,
            passed: m.passes(),
        })
        .collect();
    let decision = |verdict, passing_proportion, trigger, spans| AutomationDecision {
        report_id: merged.report_id.clone(),
        verdict,
        passing_proportion,
        trigger,
        spans,
    };
    if spans.is_empty() {
        return decision(Verdict::Accept, 1.0, Trigger::NoPredictions, spans);
    }
    let passing = spans.iter().filter(|s| s.passed).count() as f64 / spans.len() as f64;
    let has_obs_u = spans.iter().any(|s| s.entity_type == EntityType::ObsU);
    if policy.obs_u_force_review && has_obs_u {
        return decision(Verdict::Review, passing, Trigger::ObsUOverride, spans);
    }
    let verdict = if passing >= policy.proportion - PROPORTION_EPS {
        Verdict::Accept
    } else {
        Verdict::Review
    };
    decision(verdict, passing, Trigger::Proportion, spans)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSavings {
    pub baseline_minutes: f64,
    pub with_automation_minutes: f64,
    /// 1 − with/baseline; 0 and flagged when the baseline is 0.
    pub reduction: f64,
    #[serde(default)]
    pub reduction_undefined: bool,
}

pub fn time_savings(accept_count: usize, review_count: usize, minutes_per_report: f64) -> TimeSavings {
    let baseline = (accept_count + review_count) as f64 * minutes_per_report;
    let with = review_count as f64 * minutes_per_report;
    if baseline == 0.0 {
        return TimeSavings {
            baseline_minutes: 0.0,
            with_automation_minutes: 0.0,
            reduction: 0.0,
            reduction_undefined: true,
        };
    }
    TimeSavings {
        baseline_minutes: baseline,
        with_automation_minutes: with,
        reduction: 1.0 - with / baseline,
        reduction_undefined: false,
    }
}

/// Match score of one routed group, pooled over spans and averaged per report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub pooled: f64,
    pub per_report_mean: f64,
    pub stats: MatchStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutomationReport {
    pub reports: usize,
    pub accept_count: usize,
    pub review_count: usize,
    pub policy: AutomationPolicy,
    /// Absent without gold or when the group is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted_score: Option<GroupScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_score: Option<GroupScore>,
    pub time: TimeSavings,
    pub triggers: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutomationRun {
    pub decisions: Vec<AutomationDecision>,
    pub merged: Vec<MergedPrediction>,
    pub report: AutomationReport,
}

fn group_score(pairs: &[(&AutomationDecision, &Vec<EntitySpan>)]) -> Option<GroupScore> {
    if pairs.is_empty() {
        return None;
    }
    let per: Vec<MatchStats> = pairs.iter().map(|(d, g)| match_spans(&d.entity_spans(), g)).collect();
    let stats: MatchStats = per.iter().copied().sum();
    Some(GroupScore {
        pooled: entity_match_score(stats),
        per_report_mean: per.iter().map(|s| entity_match_score(*s)).sum::<f64>() / per.len() as f64,
        stats,
    })
}

/// Merge, decide and summarize every report represented in `sentences`.
///
/// Reports are the groups of sentences sharing a report id, in first-seen
/// order. With `with_gold == false` the score fields are left empty.
pub fn run_automation(
    sentences: &[Sentence],
    predictions: &[SentencePrediction],
    policy: &AutomationPolicy,
    with_gold: bool,
) -> Result<AutomationRun, AutomationError> {
    policy.validate()?;
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&Sentence>> = HashMap::new();
    for s in sentences {
        let g = groups.entry(&s.report_id).or_default();
        if g.is_empty() {
            order.push(&s.report_id);
        }
        g.push(s);
    }
    let mut preds_by_report: HashMap<&str, Vec<&SentencePrediction>> = HashMap::new();
    for p in predictions {
        if !groups.contains_key(p.sentence_id.report_id.as_str()) {
            return Err(AutomationError::UnknownSentence(p.sentence_id.to_string()));
        }
        preds_by_report.entry(&p.sentence_id.report_id).or_default().push(p);
    }
    let mut decisions = Vec::with_capacity(order.len());
    let mut merged_all = Vec::with_capacity(order.len());
    let mut golds = Vec::with_capacity(order.len());
    for id in &order {
        let sents = &groups[id];
        let preds = preds_by_report.get(id).map(Vec::as_slice).unwrap_or(&[]);
        let merged = merge_predictions(id, sents, preds, policy)?;
        decisions.push(decide_report(&merged, policy));
        merged_all.push(merged);
        golds.push(
            sents
                .iter()
                .flat_map(|s| s.gold.iter().map(|g| g.shifted(s.report_offset as isize)))
                .collect::<Vec<_>>(),
        );
    }
    let accept_count = decisions.iter().filter(|d| d.verdict == Verdict::Accept).count();
    let review_count = decisions.len() - accept_count;
    let (accepted_score, review_score) = if with_gold {
        let pick = |v: Verdict| -> Vec<(&AutomationDecision, &Vec<EntitySpan>)> {
            decisions.iter().zip(&golds).filter(|(d, _)| d.verdict == v).collect()
        };
        (group_score(&pick(Verdict::Accept)), group_score(&pick(Verdict::Review)))
    } else {
        (None, None)
    };
    let mut triggers = BTreeMap::new();
    for d in &decisions {
        let key = serde_json::to_value(d.trigger).expect("trigger serializes");
        let key = format!("{}_{}", key.as_str().unwrap_or_default(), match d.verdict {
            Verdict::Accept => "accept",
            Verdict::Review => "review",
        });
        *triggers.entry(key).or_insert(0) += 1;
    }
    let report = AutomationReport {
        reports: decisions.len(),
        accept_count,
        review_count,
        policy: policy.clone(),
        accepted_score,
        review_score,
        time: time_savings(accept_count, review_count, policy.minutes_per_report),
        triggers,
    };
    Ok(AutomationRun {
        decisions,
        merged: merged_all,
        report,
    })
}

/// Treat every sentence as its own report (id `report#index`).
pub fn sentences_as_reports(sentences: &[Sentence]) -> (Vec<Sentence>, HashMap<SentenceId, SentenceId>) {
    let mut remap = HashMap::new();
    let out = sentences
        .iter()
        .map(|s| {
            let new = Sentence {
                report_id: s.id().to_string(),
                index: 0,
                text: s.text.clone(),
                report_offset: 0,
                gold: s.gold.clone(),
            };
            remap.insert(s.id(), new.id());
            new
        })
        .collect();
    (out, remap)
}

/// Re-key predictions made on original sentences to the ids of [`sentences_as_reports`].
pub fn remap_predictions(
    predictions: &[SentencePrediction],
    remap: &HashMap<SentenceId, SentenceId>,
) -> Vec<SentencePrediction> {
    predictions
        .iter()
        .map(|p| {
            let mut p = p.clone();
            if let Some(id) = remap.get(&p.sentence_id) {
                p.sentence_id = id.clone();
            }
            p
        })
        .collect()
}

/// Split unit ids into (validation, test): even ordinals validate, or a seeded half when `seed` is set.
pub fn validation_split(ids: &[String], seed: Option<u64>) -> (Vec<String>, Vec<String>) {
    let mut ordered: Vec<String> = ids.to_vec();
    if let Some(seed) = seed {
        ordered.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for (i, id) in ordered.into_iter().enumerate() {
        if i % 2 == 0 {
            validation.push(id);
        } else {
            test.push(id);
        }
    }
    (validation, test)
}

impl AutomationReport {
    pub const TSV_HEADER: &'static str = "anat_dp_tau\tobs_dp_tau\tobs_da_tau\tobs_u_tau\tproportion\tobs_u_force_review\taccept\treview\taccept_score\treview_score\taccept_score_mean\treview_score_mean\tbaseline_minutes\twith_automation_minutes\treduction\n";

    /// One summary row in the column order of [`Self::TSV_HEADER`].
    pub fn tsv_row(&self) -> String {
        let score = |g: &Option<GroupScore>, mean: bool| {
            g.map(|g| format!("{:.4}", if mean { g.per_report_mean } else { g.pooled }))
                .unwrap_or_default()
        };
        let mut out = String::new();
        for e in [EntityType::AnatDp, EntityType::ObsDp, EntityType::ObsDa, EntityType::ObsU] {
            let _ = write!(out, "{:.2}\t", self.policy.threshold(e));
        }
        let _ = writeln!(
            out,
            "{:.2}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}",
            self.policy.proportion,
            self.policy.obs_u_force_review,
            self.accept_count,
            self.review_count,
            score(&self.accepted_score, false),
            score(&self.review_score, false),
            score(&self.accepted_score, true),
            score(&self.review_score, true),
            self.time.baseline_minutes,
            self.time.with_automation_minutes,
            self.time.reduction,
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityType::*;
    use proptest::prelude::*;

    fn cand(entity: EntityType, start: usize, end: usize, score: f64, threshold: f64) -> MergedSpan {
        MergedSpan {
            span: PredictedSpan {
                entity_type: entity,
                value: "v".repeat(end - start),
                start,
                end,
                logit: 0.0,
                confidence: score,
                calibrated: None,
            },
            sentence_index: 0,
            score,
            threshold,
        }
    }

    #[test]
    fn margin_beats_raw_confidence() {
        let m = merge_spans("r", vec![cand(ObsDp, 0, 5, 0.8, 0.36), cand(ObsU, 0, 5, 0.9, 0.95)]);
        assert_eq!(m.spans.len(), 1);
        assert_eq!(m.spans[0].span.entity_type, ObsDp);
        assert_eq!(m.conflicts[0].losers[0].entity_type, ObsU);
    }

    #[test]
    fn no_overlap_concatenates() {
        let m = merge_spans("r", vec![cand(ObsU, 6, 8, 0.1, 0.0), cand(AnatDp, 0, 5, 0.2, 0.0)]);
        assert_eq!(m.spans.len(), 2);
        assert!(m.conflicts.is_empty());
        assert_eq!(m.spans[0].span.start, 0);
    }

    #[test]
    fn exact_tie_goes_to_priority() {
        let m = merge_spans("r", vec![cand(ObsDp, 0, 5, 0.7, 0.2), cand(ObsDa, 1, 4, 0.7, 0.2)]);
        assert_eq!(m.spans[0].span.entity_type, ObsDa);
    }

    fn policy(p: f64) -> AutomationPolicy {
        AutomationPolicy::from_array([0.5; 4], p)
    }

    fn merged(spans: Vec<MergedSpan>) -> MergedPrediction {
        MergedPrediction {
            report_id: "r".into(),
            spans,
            conflicts: vec![],
        }
    }

    fn n_passing(total: usize, passing: usize, entity: EntityType) -> Vec<MergedSpan> {
        (0..total)
            .map(|i| cand(entity, 3 * i, 3 * i + 2, if i < passing { 0.9 } else { 0.1 }, 0.5))
            .collect()
    }

    #[test]
    fn proportion_boundaries() {
        let d = decide_report(&merged(n_passing(10, 9, ObsDp)), &policy(0.9));
        assert_eq!((d.verdict, d.trigger), (Verdict::Accept, Trigger::Proportion));
        assert_eq!(decide_report(&merged(n_passing(20, 19, ObsDp)), &policy(0.95)).verdict, Verdict::Accept);
        assert_eq!(decide_report(&merged(n_passing(20, 18, ObsDp)), &policy(0.95)).verdict, Verdict::Review);
    }

    #[test]
    fn obs_u_forces_review() {
        let mut spans = n_passing(19, 19, ObsDp);
        spans.push(cand(ObsU, 100, 102, 0.99, 0.5));
        let d = decide_report(&merged(spans.clone()), &policy(0.9));
        assert_eq!((d.verdict, d.trigger), (Verdict::Review, Trigger::ObsUOverride));
        let mut p = policy(0.9);
        p.obs_u_force_review = false;
        assert_eq!(decide_report(&merged(spans), &p).verdict, Verdict::Accept);
    }

    #[test]
    fn empty_report_accepts() {
        let d = decide_report(&merged(vec![]), &policy(0.95));
        assert_eq!((d.verdict, d.trigger), (Verdict::Accept, Trigger::NoPredictions));
    }

    #[test]
    fn time_savings_arithmetic() {
        let t = time_savings(140, 115, 2.0);
        assert_eq!((t.baseline_minutes, t.with_automation_minutes), (510.0, 230.0));
        assert!((t.reduction - 0.549).abs() < 0.001);
        assert_eq!(time_savings(0, 10, 2.0).reduction, 0.0);
        assert_eq!(time_savings(10, 0, 2.0).reduction, 1.0);
        assert!(time_savings(0, 0, 2.0).reduction_undefined);
    }

    #[test]
    fn policy_validation() {
        assert!(policy(0.0).validate().is_err());
        assert!(policy(1.0).validate().is_ok());
        assert!(AutomationPolicy::from_array([0.0, 1.2, 0.0, 0.0], 0.9).validate().is_err());
    }

    fn sentence(report: &str, index: usize, offset: usize, gold: Vec<EntitySpan>) -> Sentence {
        Sentence {
            report_id: report.into(),
            index,
            text: "possible edema. ".into(),
            report_offset: offset,
            gold,
        }
    }

    fn prediction(id: SentenceId, entity: EntityType, spans: Vec<(usize, usize, f64)>) -> SentencePrediction {
        let mut p = SentencePrediction::empty(id, entity, "t", crate::extractor::PredictionStatus::Ok, String::new());
        p.spans = spans
            .into_iter()
            .map(|(s, e, c)| PredictedSpan {
                entity_type: entity,
                value: "possible edema. ".chars().skip(s).take(e - s).collect(),
                start: s,
                end: e,
                logit: 0.0,
                confidence: c,
                calibrated: None,
            })
            .collect();
        p
    }

    #[test]
    fn run_lifts_offsets_and_scores_groups() {
        let gold = vec![EntitySpan::new(ObsU, "edema", 9, 14)];
        let sents = vec![
            sentence("a", 0, 0, vec![]),
            sentence("a", 1, 16, gold.clone()),
            sentence("b", 0, 0, vec![EntitySpan::new(ObsDp, "edema", 9, 14)]),
        ];
        let preds = vec![
            prediction(SentenceId::new("a", 1), ObsU, vec![(9, 14, 0.9)]),
            prediction(SentenceId::new("b", 0), ObsDp, vec![(9, 14, 0.9)]),
        ];
        let run = run_automation(&sents, &preds, &policy(0.9), true).unwrap();
        assert_eq!(run.decisions[0].spans[0].start, 25);
        assert_eq!(run.decisions[0].verdict, Verdict::Review);
        assert_eq!(run.decisions[1].verdict, Verdict::Accept);
        assert_eq!(run.report.accepted_score.unwrap().pooled, 1.0);
        assert_eq!(run.report.review_score.unwrap().pooled, 1.0);
        let blind = run_automation(&sents, &preds, &policy(0.9), false).unwrap();
        assert!(blind.report.accepted_score.is_none());
        let bad = vec![prediction(SentenceId::new("zz", 0), ObsU, vec![])];
        assert!(run_automation(&sents, &bad, &policy(0.9), true).is_err());
        let empty = run_automation(&[], &[], &policy(0.9), true).unwrap();
        assert_eq!((empty.report.accept_count, empty.report.review_count), (0, 0));
    }

    #[test]
    fn validation_split_halves() {
        let ids: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let (v, t) = validation_split(&ids, None);
        assert_eq!(v, vec!["0", "2", "4"]);
        assert_eq!(t, vec!["1", "3"]);
        let (v2, _) = validation_split(&ids, Some(1));
        assert_eq!(v2.len(), 3);
        assert_eq!(validation_split(&ids, Some(1)), validation_split(&ids, Some(1)));
    }

    fn cands() -> impl Strategy<Value = Vec<MergedSpan>> {
        prop::collection::vec((0usize..4, 0usize..20, 1usize..6, 0u32..=20, 0u32..=20), 0..12).prop_map(|v| {
            v.into_iter()
                .map(|(e, s, l, p, t)| cand(EntityType::ALL[e], s, s + l, f64::from(p) / 20.0, f64::from(t) / 20.0))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn merged_spans_never_overlap(c in cands()) {
            let m = merge_spans("r", c);
            for (i, a) in m.spans.iter().enumerate() {
                for b in &m.spans[i + 1..] {
                    prop_assert!(!a.span.overlaps(&b.span));
                }
            }
        }

        #[test]
        fn merge_ignores_input_order(c in cands(), seed in any::<u64>()) {
            let mut shuffled = c.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(merge_spans("r", c), merge_spans("r", shuffled));
        }

        #[test]
        fn raising_a_threshold_never_raises_passing(c in cands(), e in 0usize..4, bump in 0u32..10) {
            let m = merge_spans("r", c);
            let p = AutomationPolicy::from_array([0.0; 4], 0.5);
            let before = decide_report(&m, &p).passing_proportion;
            let mut raised = m.clone();
            for s in &mut raised.spans {
                if s.span.entity_type == EntityType::ALL[e] {
                    s.threshold = (s.threshold + f64::from(bump) / 10.0).min(1.0);
                }
            }
            prop_assert!(decide_report(&raised, &p).passing_proportion <= before);
        }
    }
}
