use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sentence_units, ConfidenceError};
use crate::corpus::{EntityType, Sentence};
use crate::extractor::SentencePrediction;

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_FOLDS: usize = 3;

/// A confidence paired with whether the span was correct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub confidence: f64,
    pub correct: bool,
}

impl Sample {
    pub fn new(confidence: f64, correct: bool) -> Self {
        Self { confidence, correct }
    }
}

/// Monotone map from raw to calibrated confidence.
///
/// Linear interpolation between breakpoints, clamped to the end values outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicModel {
    pub breakpoints: Vec<(f64, f64)>,
}

impl IsotonicModel {
    pub fn identity() -> Self {
        Self {
            breakpoints: vec![(0.0, 0.0), (1.0, 1.0)],
        }
    }

    pub fn apply(&self, p: f64) -> f64 {
        let bp = &self.breakpoints;
        let (first, last) = (bp[0], bp[bp.len() - 1]);
        if p <= first.0 {
            return first.1;
        }
        if p >= last.0 {
            return last.1;
        }
        let i = bp.partition_point(|(x, _)| *x <= p);
        let (x0, y0) = bp[i - 1];
        let (x1, y1) = bp[i];
        if x1 == x0 {
            return y1;
        }
        y0 + (y1 - y0) * (p - x0) / (x1 - x0)
    }
}

/// Weighted pool-adjacent-violators on samples grouped by equal confidence.
pub fn fit_isotonic(samples: &[Sample]) -> Result<IsotonicModel, ConfidenceError> {
    if samples.len() < 2 {
        return Err(ConfidenceError::TooFewSamples {
            need: 2,
            got: samples.len(),
        });
    }
    let mut sorted: Vec<Sample> = samples.to_vec();
    sorted.sort_by(|a, b| a.confidence.total_cmp(&b.confidence));
    // (x, weight, mean) per distinct confidence
    let mut groups: Vec<(f64, f64, f64)> = Vec::new();
    for s in &sorted {
        let y = if s.correct { 1.0 } else { 0.0 };
        match groups.last_mut() {
            Some(g) if g.0 == s.confidence => {
                g.2 = (g.2 * g.1 + y) / (g.1 + 1.0);
                g.1 += 1.0;
            }
            _ => groups.push((s.confidence, 1.0, y)),
        }
    }
    let xs: Vec<f64> = groups.iter().map(|g| g.0).collect();
    let weighted: Vec<(f64, f64)> = groups.iter().map(|g| (g.2, g.1)).collect();
    let fitted = pav(&weighted);
    Ok(IsotonicModel {
        breakpoints: xs.into_iter().zip(fitted).collect(),
    })
}

/// Least-squares non-decreasing fit of `(value, weight)` points.
pub(crate) fn pav(points: &[(f64, f64)]) -> Vec<f64> {
    // blocks of (mean, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(points.len());
    for &(y, w) in points {
        blocks.push((y, w, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (y2, w2, n2) = blocks.pop().expect("len > 1");
            let (y1, w1, n1) = blocks.pop().expect("len > 1");
            let w = w1 + w2;
            blocks.push(((y1 * w1 + y2 * w2) / w, w, n1 + n2));
        }
    }
    blocks.iter().flat_map(|&(y, _, n)| std::iter::repeat_n(y, n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean confidence in the bin; 0 when empty.
    pub confidence: f64,
    /// Fraction correct in the bin; 0 when empty.
    pub accuracy: f64,
}

fn bin_index(p: f64, bins: usize) -> usize {
    ((p * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// Equal-width bins on [0, 1]; confidence 1.0 falls in the last bin.
pub fn ece_bins(samples: &[Sample], bins: usize) -> Result<Vec<CalibrationBin>, ConfidenceError> {
    if bins == 0 {
        return Err(ConfidenceError::ZeroBins);
    }
    let mut sums = vec![(0usize, 0.0f64, 0usize); bins];
    for s in samples {
        let b = &mut sums[bin_index(s.confidence, bins)];
        b.0 += 1;
        b.1 += s.confidence;
        b.2 += usize::from(s.correct);
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (n, conf, ok))| CalibrationBin {
            lower: i as f64 / bins as f64,
            upper: (i + 1) as f64 / bins as f64,
            count: n,
            confidence: if n == 0 { 0.0 } else { conf / n as f64 },
            accuracy: if n == 0 { 0.0 } else { ok as f64 / n as f64 },
        })
        .collect())
}

/// Σ_b (n_b / N) |accuracy_b − confidence_b|.
pub fn expected_calibration_error(samples: &[Sample], bins: usize) -> Result<f64, ConfidenceError> {
    if samples.is_empty() {
        return Err(ConfidenceError::TooFewSamples { need: 1, got: 0 });
    }
    let n = samples.len() as f64;
    Ok(ece_bins(samples, bins)?
        .iter()
        .map(|b| b.count as f64 / n * (b.accuracy - b.confidence).abs())
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCalibration {
    /// Out-of-fold calibrated confidence, aligned with the input samples.
    pub calibrated: Vec<f64>,
    pub folds: Vec<usize>,
    /// Fitted on every sample; the model to deploy.
    pub model: IsotonicModel,
}

/// Cross-validated isotonic calibration.
///
/// Samples are shuffled with `seed` and dealt round-robin into `folds`.
pub fn calibrate_cv(samples: &[Sample], folds: usize, seed: u64) -> Result<CvCalibration, ConfidenceError> {
    let n = samples.len();
    if folds < 2 || folds > n {
        return Err(ConfidenceError::TooManyFolds { folds, samples: n });
    }
    let largest = n.div_ceil(folds);
    if n - largest < 2 {
        return Err(ConfidenceError::TooManyFolds { folds, samples: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let mut calibrated = vec![0.0; n];
    for f in 0..folds {
        let train: Vec<Sample> = (0..n).filter(|&i| fold_of[i] != f).map(|i| samples[i]).collect();
        let model = fit_isotonic(&train)?;
        for i in (0..n).filter(|&i| fold_of[i] == f) {
            calibrated[i] = model.apply(samples[i].confidence);
        }
    }
    Ok(CvCalibration {
        calibrated,
        folds: fold_of,
        model: fit_isotonic(samples)?,
    })
}

/// One sample per predicted span of `entity`; correct when it exactly matches a gold span.
pub fn calibration_samples(
    predictions: &[SentencePrediction],
    sentences: &[Sentence],
    entity: EntityType,
) -> Result<Vec<Sample>, ConfidenceError> {
    let units = sentence_units(predictions, sentences, entity, false)?;
    Ok(units
        .iter()
        .flat_map(|u| {
            u.predicted
                .iter()
                .map(|(span, p)| Sample::new(*p, u.gold.contains(span)))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityCalibration {
    pub entity_type: EntityType,
    pub samples: usize,
    pub ece_before: f64,
    pub ece_after: f64,
    pub bins_before: Vec<CalibrationBin>,
    pub bins_after: Vec<CalibrationBin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Fraction of spans at or above `threshold`, raw and calibrated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance_before: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance_after: Option<f64>,
    pub model: IsotonicModel,
}

impl EntityCalibration {
    pub fn acceptance_delta(&self) -> Option<f64> {
        Some(self.acceptance_after? - self.acceptance_before?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub folds: usize,
    pub bins: usize,
    pub seed: u64,
    pub entities: Vec<EntityCalibration>,
    /// Entities skipped for having too few spans to cross-validate.
    #[serde(default)]
    pub skipped: Vec<EntityType>,
}

/// Cross-validated calibration per entity type present in `predictions`.
///
/// ECE after calibration uses the out-of-fold values. Acceptance rates are
/// computed when `thresholds` has an entry for the entity.
pub fn calibration_report(
    predictions: &[SentencePrediction],
    sentences: &[Sentence],
    folds: usize,
    bins: usize,
    seed: u64,
    thresholds: Option<&BTreeMap<EntityType, f64>>,
) -> Result<CalibrationReport, ConfidenceError> {
    let present: BTreeSet<EntityType> = predictions.iter().map(|p| p.target_entity).collect();
    let mut entities = Vec::new();
    let mut skipped = Vec::new();
    for entity in present {
        let samples = calibration_samples(predictions, sentences, entity)?;
        let cv = match calibrate_cv(&samples, folds, crate::seed::derive_seed(seed, entity.as_str())) {
            Ok(cv) => cv,
            Err(ConfidenceError::TooManyFolds { .. }) => {
                tracing::warn!(%entity, samples = samples.len(), "too few spans to calibrate");
                skipped.push(entity);
                continue;
            }
            Err(e) => return Err(e),
        };
        let after: Vec<Sample> = samples
            .iter()
            .zip(&cv.calibrated)
            .map(|(s, c)| Sample::new(*c, s.correct))
            .collect();
        let threshold = thresholds.and_then(|t| t.get(&entity).copied());
        let rate = |xs: &[Sample], t: f64| xs.iter().filter(|s| s.confidence >= t).count() as f64 / xs.len() as f64;
        entities.push(EntityCalibration {
            entity_type: entity,
            samples: samples.len(),
            ece_before: expected_calibration_error(&samples, bins)?,
            ece_after: expected_calibration_error(&after, bins)?,
            bins_before: ece_bins(&samples, bins)?,
            bins_after: ece_bins(&after, bins)?,
            threshold,
            acceptance_before: threshold.map(|t| rate(&samples, t)),
            acceptance_after: threshold.map(|t| rate(&after, t)),
            model: cv.model,
        });
    }
    Ok(CalibrationReport {
        folds,
        bins,
        seed,
        entities,
        skipped,
    })
}

impl CalibrationReport {
    pub fn models(&self) -> BTreeMap<EntityType, IsotonicModel> {
        self.entities.iter().map(|e| (e.entity_type, e.model.clone())).collect()
    }

    /// Summary rows: entity, samples, ECE before and after, acceptance before, after and delta.
    pub fn summary_tsv(&self) -> String {
        let mut out = String::from(
            "entity_type\tsamples\tece_before\tece_after\tthreshold\tacceptance_before\tacceptance_after\tacceptance_delta\n",
        );
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        for e in &self.entities {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.4}\t{:.4}\t{}\t{}\t{}\t{}",
                e.entity_type,
                e.samples,
                e.ece_before,
                e.ece_after,
                opt(e.threshold),
                opt(e.acceptance_before),
                opt(e.acceptance_after),
                opt(e.acceptance_delta()),
            );
        }
        out
    }

    /// Per-bin rows for both stages.
    pub fn bins_tsv(&self) -> String {
        let mut out = String::from("entity_type\tstage\tbin\tlower\tupper\tcount\tconfidence\taccuracy\n");
        for e in &self.entities {
            for (stage, bins) in [("before", &e.bins_before), ("after", &e.bins_after)] {
                for (i, b) in bins.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{}\t{stage}\t{i}\t{:.2}\t{:.2}\t{}\t{:.4}\t{:.4}",
                        e.entity_type, b.lower, b.upper, b.count, b.confidence, b.accuracy
                    );
                }
            }
        }
        out
    }
}

/// Fill `calibrated` on every span whose entity has a model.
pub fn apply_calibration(predictions: &mut [SentencePrediction], models: &BTreeMap<EntityType, IsotonicModel>) {
    for p in predictions {
        for s in &mut p.spans {
            if let Some(m) = models.get(&s.entity_type) {
                s.calibrated = Some(m.apply(s.confidence));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn samples(xs: &[(f64, bool)]) -> Vec<Sample> {
        xs.iter().map(|&(p, c)| Sample::new(p, c)).collect()
    }

    #[test]
    fn monotone_rates_are_reproduced() {
        let s = samples(&[(0.1, false), (0.1, false), (0.5, true), (0.5, false), (0.9, true)]);
        let m = fit_isotonic(&s).unwrap();
        assert_eq!(m.breakpoints, vec![(0.1, 0.0), (0.5, 0.5), (0.9, 1.0)]);
    }

    #[test]
    fn single_violation_pools() {
        let m = fit_isotonic(&samples(&[(0.9, false), (0.1, true)])).unwrap();
        assert_eq!(m.breakpoints, vec![(0.1, 0.5), (0.9, 0.5)]);
        assert!(fit_isotonic(&samples(&[(0.5, true)])).is_err());
    }

    #[test]
    fn apply_interpolates_and_clamps() {
        let id = IsotonicModel::identity();
        for p in [0.0, 0.13, 0.5, 0.99, 1.0] {
            assert!((id.apply(p) - p).abs() < 1e-15);
        }
        let m = IsotonicModel {
            breakpoints: vec![(0.2, 0.1), (0.6, 0.5)],
        };
        assert_eq!(m.apply(0.0), 0.1);
        assert_eq!(m.apply(0.9), 0.5);
        assert!((m.apply(0.4) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ece_cases() {
        assert_eq!(expected_calibration_error(&samples(&[(1.0, true), (1.0, true)]), 10).unwrap(), 0.0);
        let e = expected_calibration_error(&samples(&[(0.95, true), (0.95, false)]), 10).unwrap();
        assert!((e - 0.45).abs() < 1e-12);
        assert!(expected_calibration_error(&[], 10).is_err());
        assert_eq!(ece_bins(&[], 0), Err(ConfidenceError::ZeroBins));
    }

    #[test]
    fn three_samples_three_folds() {
        let s = samples(&[(0.2, false), (0.5, true), (0.8, true)]);
        let cv = calibrate_cv(&s, 3, 9).unwrap();
        let mut folds = cv.folds.clone();
        folds.sort();
        assert_eq!(folds, vec![0, 1, 2]);
        assert_eq!(cv.calibrated.len(), 3);
        assert!(calibrate_cv(&s, 4, 9).is_err());
        assert!(calibrate_cv(&s[..2], 2, 9).is_err());
        assert_eq!(cv, calibrate_cv(&s, 3, 9).unwrap());
    }

    #[test]
    fn bin_counts_sum_to_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<Sample> = (0..500).map(|_| Sample::new(rng.random(), rng.random())).collect();
        let bins = ece_bins(&s, 10).unwrap();
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 500);
        let one = expected_calibration_error(&s, 1).unwrap();
        let acc = s.iter().filter(|x| x.correct).count() as f64 / 500.0;
        let conf = s.iter().map(|x| x.confidence).sum::<f64>() / 500.0;
        assert!((one - (acc - conf).abs()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn applied_model_is_monotone(
            pts in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..40),
            xs in prop::collection::vec(-0.2f64..1.2, 2..20),
        ) {
            let m = fit_isotonic(&samples(&pts)).unwrap();
            let mut xs = xs;
            xs.sort_by(f64::total_cmp);
            for w in xs.windows(2) {
                prop_assert!(m.apply(w[0]) <= m.apply(w[1]) + 1e-15);
            }
            for w in m.breakpoints.windows(2) {
                prop_assert!(w[0].0 < w[1].0 && w[0].1 <= w[1].1 + 1e-15);
            }
        }
    }
}
