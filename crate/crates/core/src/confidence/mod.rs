//! Confidence scores, coverage, threshold discovery and calibration.
//!
//! A sentence is *covered* at threshold τ when every span predicted in it has
//! confidence at least τ; sentences without predictions are covered. The
//! match score at τ is pooled over covered sentences only.

mod calibration;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EntitySpan, EntityType, Sentence, SentenceId};
use crate::extractor::SentencePrediction;
use crate::scoring::{entity_match_score, match_spans, precision_recall_f1, MatchStats};

pub use calibration::{
    apply_calibration, calibrate_cv, calibration_report, calibration_samples, ece_bins,
    expected_calibration_error, fit_isotonic, CalibrationBin, CalibrationReport, CvCalibration,
    EntityCalibration, IsotonicModel, Sample, DEFAULT_BINS, DEFAULT_FOLDS,
};

/// Target match-score levels of the threshold table.
pub const DEFAULT_TARGETS: [f64; 4] = [0.80, 0.85, 0.90, 0.95];

/// Number of steps of the threshold grid: τ = k / 100 for k in 0..=100.
pub const GRID_STEPS: u32 = 100;

#[derive(Debug, Error, PartialEq)]
pub enum ConfidenceError {
    #[error("logit {0} is not finite")]
    NonFinite(f64),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("{folds} folds leave a training fold with fewer than 2 of {samples} samples")]
    TooManyFolds { folds: usize, samples: usize },
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("prediction for unknown sentence {0}")]
    UnknownSentence(String),
}

/// Sigmoid of `logit`.
pub fn logit_to_confidence(logit: f64) -> Result<f64, ConfidenceError> {
    if !logit.is_finite() {
        return Err(ConfidenceError::NonFinite(logit));
    }
    Ok(if logit >= 0.0 {
        1.0 / (1.0 + (-logit).exp())
    } else {
        let e = logit.exp();
        e / (1.0 + e)
    })
}

/// The 101 grid thresholds 0.00, 0.01, ..., 1.00.
pub fn threshold_grid() -> Vec<f64> {
    (0..=GRID_STEPS).map(|k| f64::from(k) / f64::from(GRID_STEPS)).collect()
}

/// One sentence's predicted spans (with scores) and gold spans for a single entity type.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceUnit {
    pub sentence_id: SentenceId,
    pub predicted: Vec<(EntitySpan, f64)>,
    pub gold: Vec<EntitySpan>,
}

impl SentenceUnit {
    pub fn covered_at(&self, tau: f64) -> bool {
        self.predicted.iter().all(|(_, p)| *p >= tau)
    }

    /// Stats after removing spans scored below `tau`.
    pub fn stats_at(&self, tau: f64) -> MatchStats {
        let kept: Vec<&EntitySpan> = self.predicted.iter().filter(|(_, p)| *p >= tau).map(|(s, _)| s).collect();
        match_spans(&kept, &self.gold)
    }
}

/// Pair every sentence with its predictions for `entity`; missing predictions are empty.
pub fn sentence_units(
    predictions: &[SentencePrediction],
    sentences: &[Sentence],
    entity: EntityType,
    use_calibrated: bool,
) -> Result<Vec<SentenceUnit>, ConfidenceError> {
    let mut by_id: HashMap<&SentenceId, &SentencePrediction> = HashMap::new();
    for p in predictions.iter().filter(|p| p.target_entity == entity) {
        by_id.insert(&p.sentence_id, p);
    }
    let ids: std::collections::HashSet<SentenceId> = sentences.iter().map(|s| s.id()).collect();
    if let Some(p) = by_id.keys().find(|id| !ids.contains(**id)) {
        return Err(ConfidenceError::UnknownSentence(p.to_string()));
    }
    Ok(sentences
        .iter()
        .map(|s| {
            let id = s.id();
            let predicted = by_id
                .get(&id)
                .map(|p| {
                    p.spans
                        .iter()
                        .map(|sp| (sp.to_entity_span(), sp.score(use_calibrated)))
                        .collect()
                })
                .unwrap_or_default();
            SentenceUnit {
                sentence_id: id,
                predicted,
                gold: s.gold_of(entity).cloned().collect(),
            }
        })
        .collect())
}

/// Fraction of sentences covered at `tau`; 0 for an empty sentence set.
pub fn coverage_at(tau: f64, units: &[SentenceUnit]) -> f64 {
    if units.is_empty() {
        return 0.0;
    }
    units.iter().filter(|u| u.covered_at(tau)).count() as f64 / units.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    /// Entity match score pooled over covered sentences.
    pub score: f64,
    pub coverage: f64,
    pub precision: f64,
    pub recall: f64,
    pub covered: usize,
    pub stats: MatchStats,
    /// No sentence is covered; `score` is set to 0.
    #[serde(default)]
    pub empty_coverage: bool,
}

pub fn curve_point(tau: f64, units: &[SentenceUnit]) -> CurvePoint {
    let covered: Vec<&SentenceUnit> = units.iter().filter(|u| u.covered_at(tau)).collect();
    let stats: MatchStats = covered.iter().map(|u| u.stats_at(tau)).sum();
    let prf = precision_recall_f1(stats);
    let empty_coverage = covered.is_empty();
    CurvePoint {
        threshold: tau,
        score: if empty_coverage { 0.0 } else { entity_match_score(stats) },
        coverage: coverage_at(tau, units),
        precision: prf.precision,
        recall: prf.recall,
        covered: covered.len(),
        stats,
        empty_coverage,
    }
}

/// Sweep the full 0.01 grid.
pub fn threshold_curve(units: &[SentenceUnit]) -> Vec<CurvePoint> {
    threshold_grid().into_iter().map(|t| curve_point(t, units)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub entity_type: EntityType,
    pub target: f64,
    pub threshold: f64,
    pub score: f64,
    pub coverage: f64,
    pub precision: f64,
    pub recall: f64,
    /// The target is unreachable and `threshold` maximizes the score instead.
    pub fallback: bool,
    /// The entity had no predicted spans at all.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub targets: Vec<f64>,
    pub rows: Vec<ThresholdRow>,
    pub curves: BTreeMap<EntityType, Vec<CurvePoint>>,
}

/// Lowest grid τ whose score reaches `target`, else the argmax-score τ (lowest on ties).
pub fn select_threshold(curve: &[CurvePoint], target: f64) -> (usize, bool) {
    if let Some(i) = curve.iter().position(|p| p.score >= target) {
        return (i, false);
    }
    let mut best = 0;
    for (i, p) in curve.iter().enumerate() {
        if p.score > curve[best].score {
            best = i;
        }
    }
    (best, true)
}

/// Build curves and the threshold table for every entity type present in `predictions`.
pub fn discover_thresholds(
    predictions: &[SentencePrediction],
    sentences: &[Sentence],
    targets: &[f64],
    use_calibrated: bool,
) -> Result<ThresholdTable, ConfidenceError> {
    let entities: std::collections::BTreeSet<EntityType> = predictions.iter().map(|p| p.target_entity).collect();
    let mut rows = Vec::new();
    let mut curves = BTreeMap::new();
    for entity in entities {
        let units = sentence_units(predictions, sentences, entity, use_calibrated)?;
        let degenerate = units.iter().all(|u| u.predicted.is_empty());
        let curve = threshold_curve(&units);
        for &target in targets {
            let (i, fallback) = if degenerate {
                (0, true)
            } else {
                select_threshold(&curve, target)
            };
            let p = &curve[i];
            rows.push(ThresholdRow {
                entity_type: entity,
                target,
                threshold: p.threshold,
                score: p.score,
                coverage: p.coverage,
                precision: p.precision,
                recall: p.recall,
                fallback,
                degenerate,
            });
        }
        curves.insert(entity, curve);
    }
    Ok(ThresholdTable {
        targets: targets.to_vec(),
        rows,
        curves,
    })
}

impl ThresholdTable {
    pub fn row(&self, entity: EntityType, target: f64) -> Option<&ThresholdRow> {
        self.rows
            .iter()
            .find(|r| r.entity_type == entity && (r.target - target).abs() < 1e-9)
    }

    /// Per-entity thresholds for one target level.
    pub fn thresholds_for(&self, target: f64) -> BTreeMap<EntityType, f64> {
        self.rows
            .iter()
            .filter(|r| (r.target - target).abs() < 1e-9)
            .map(|r| (r.entity_type, r.threshold))
            .collect()
    }

    /// Every curve point: entity, τ, score, coverage, precision, recall, covered sentence count.
    pub fn curves_tsv(&self) -> String {
        let mut out = String::from("entity_type\tthreshold\tscore\tcoverage\tprecision\trecall\tcovered\n");
        for (entity, curve) in &self.curves {
            for p in curve {
                let _ = writeln!(
                    out,
                    "{entity}\t{:.2}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
                    p.threshold, p.score, p.coverage, p.precision, p.recall, p.covered
                );
            }
        }
        out
    }

    /// One row per (entity, target).
    pub fn table_tsv(&self) -> String {
        let mut out =
            String::from("entity_type\ttarget\tthreshold\tscore\tcoverage\tprecision\trecall\tfallback\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{:.2}\t{:.2}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}",
                r.entity_type, r.target, r.threshold, r.score, r.coverage, r.precision, r.recall, r.fallback
            );
        }
        out
    }

    /// Entities by target levels; fallback cells are marked with `*`.
    pub fn summary_tsv(&self) -> String {
        let mut out = String::from("entity_type");
        for t in &self.targets {
            let _ = write!(out, "\t{t:.2}");
        }
        out.push('\n');
        for entity in self.curves.keys() {
            out.push_str(entity.as_str());
            for &t in &self.targets {
                match self.row(*entity, t) {
                    Some(r) => {
                        let _ = write!(out, "\t{:.2}{}", r.threshold, if r.fallback { "*" } else { "" });
                    }
                    None => out.push('\t'),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityType::*;

    #[test]
    fn sigmoid_closed_forms() {
        assert!((logit_to_confidence(0.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((logit_to_confidence(3f64.ln()).unwrap() - 0.75).abs() < 1e-12);
        assert!((logit_to_confidence(-(3f64.ln())).unwrap() - 0.25).abs() < 1e-12);
        assert!(logit_to_confidence(f64::NAN).is_err());
        assert!(logit_to_confidence(f64::INFINITY).is_err());
        assert_eq!(logit_to_confidence(-800.0).unwrap(), 0.0);
        assert_eq!(logit_to_confidence(800.0).unwrap(), 1.0);
        for x in [-30.0, -2.5, -0.1, 0.7, 4.0, 19.0] {
            let s = logit_to_confidence(x).unwrap() + logit_to_confidence(-x).unwrap();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_is_exact_hundredths() {
        let g = threshold_grid();
        assert_eq!(g.len(), 101);
        assert_eq!(g[36], 0.36);
        assert_eq!(g[100], 1.0);
    }

    fn unit(i: usize, scores: &[f64]) -> SentenceUnit {
        SentenceUnit {
            sentence_id: SentenceId::new("r", i),
            predicted: scores
                .iter()
                .enumerate()
                .map(|(k, p)| (EntitySpan::new(ObsDp, "ab", 3 * k, 3 * k + 2), *p))
                .collect(),
            gold: vec![],
        }
    }

    #[test]
    fn coverage_counting() {
        let units = vec![unit(0, &[0.5]), unit(1, &[0.9]), unit(2, &[]), unit(3, &[0.7, 0.8])];
        assert_eq!(coverage_at(0.0, &units), 1.0);
        assert_eq!(coverage_at(0.6, &units), 0.75);
        assert_eq!(coverage_at(1.01, &units), 0.25);
    }

    #[test]
    fn fallback_picks_argmax() {
        // a correct span at p=0.8 and a wrong one at p=0.3 in another sentence
        let mut a = unit(0, &[0.8]);
        a.gold = vec![a.predicted[0].0.clone()];
        let b = unit(1, &[0.3]);
        let curve = threshold_curve(&[a, b]);
        assert_eq!(curve[0].score, 0.5);
        assert_eq!(select_threshold(&curve, 0.95), (31, false));
        // with only the wrong span scored high, 1.0 is unreachable
        let mut v = unit(0, &[0.8, 0.3]);
        v.gold = vec![v.predicted[1].0.clone(), EntitySpan::new(ObsDp, "zz", 20, 22)];
        let curve = threshold_curve(&[v]);
        let (i, fallback) = select_threshold(&curve, 0.8);
        assert!(fallback);
        assert_eq!(i, 0);
    }

    #[test]
    fn empty_coverage_scores_zero() {
        let u = unit(0, &[0.2]);
        let p = curve_point(0.5, &[u]);
        assert!(p.empty_coverage);
        assert_eq!((p.score, p.coverage, p.covered), (0.0, 0.0, 0));
    }

    #[test]
    fn tables_serialize() {
        let s = Sentence {
            report_id: "r".into(),
            index: 0,
            text: "possible edema".into(),
            report_offset: 0,
            gold: vec![EntitySpan::new(ObsU, "edema", 9, 14)],
        };
        let mut p = SentencePrediction::empty(s.id(), ObsU, "t", crate::extractor::PredictionStatus::Ok, String::new());
        p.spans.push(crate::extractor::PredictedSpan {
            entity_type: ObsU,
            value: "edema".into(),
            start: 9,
            end: 14,
            logit: 1.0,
            confidence: 0.7,
            calibrated: None,
        });
        let table = discover_thresholds(&[p], &[s], &DEFAULT_TARGETS, false).unwrap();
        assert_eq!(table.rows.len(), 4);
        assert!(table.rows.iter().all(|r| r.threshold == 0.0 && !r.fallback));
        assert_eq!(table.curves_tsv().lines().count(), 102);
        assert_eq!(table.summary_tsv(), "entity_type\t0.80\t0.85\t0.90\t0.95\nOBS-U\t0.00\t0.00\t0.00\t0.00\n");
        assert_eq!(table.thresholds_for(0.9)[&ObsU], 0.0);
    }
}
