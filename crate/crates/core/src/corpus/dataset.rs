use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, EntitySpan, EntityType, Sentence};
use crate::seed::derive_seed;

/// One instruction-tuning example for a single target entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetExample {
    /// Sentence id for gold examples, synthetic report id otherwise.
    pub example_id: String,
    pub text: String,
    pub target_entity: EntityType,
    pub expected_output: Vec<EntitySpan>,
}

impl DatasetExample {
    pub fn is_positive(&self) -> bool {
        !self.expected_output.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityDataset {
    pub target_entity: EntityType,
    pub examples: Vec<DatasetExample>,
    pub positive_count: usize,
    pub negative_count: usize,
}

impl EntityDataset {
    pub fn new(target_entity: EntityType, examples: Vec<DatasetExample>) -> Self {
        let positive_count = examples.iter().filter(|e| e.is_positive()).count();
        let negative_count = examples.len() - positive_count;
        Self {
            target_entity,
            examples,
            positive_count,
            negative_count,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Per-entity dataset: positives carry the target spans, negatives an empty list.
///
/// With `include_negatives == false` only sentences containing the target are kept.
pub fn build_entity_dataset(
    sentences: &[Sentence],
    target: EntityType,
    include_negatives: bool,
) -> EntityDataset {
    let examples = sentences
        .iter()
        .map(|s| DatasetExample {
            example_id: s.id().to_string(),
            text: s.text.clone(),
            target_entity: target,
            expected_output: s.gold_of(target).cloned().collect(),
        })
        .filter(|e| include_negatives || e.is_positive())
        .collect();
    EntityDataset::new(target, examples)
}

/// Number of synthetic examples added for `ratio` of `gold_positives`, rounded down.
pub fn synthetic_quota(gold_positives: usize, ratio: f64) -> usize {
    // the epsilon absorbs representation error such as 0.29 * 100 = 28.999…
    (ratio * gold_positives as f64 + 1e-9).floor() as usize
}

/// All gold examples plus `floor(ratio × gold positives)` synthetic examples drawn without replacement.
pub fn mix_datasets(
    gold: &EntityDataset,
    synthetic: &EntityDataset,
    ratio: f64,
    seed: u64,
) -> Result<EntityDataset, CorpusError> {
    if gold.target_entity != synthetic.target_entity {
        return Err(CorpusError::EntityMismatch {
            gold: gold.target_entity,
            synthetic: synthetic.target_entity,
        });
    }
    if !ratio.is_finite() || ratio < 0.0 {
        return Err(CorpusError::InvalidRatio(ratio));
    }
    let requested = synthetic_quota(gold.positive_count, ratio);
    if requested > synthetic.len() {
        return Err(CorpusError::PoolTooSmall {
            requested,
            available: synthetic.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, synthetic.len(), requested);
    let mut examples = gold.examples.clone();
    examples.extend(picked.into_iter().map(|i| synthetic.examples[i].clone()));
    Ok(EntityDataset::new(gold.target_entity, examples))
}

/// One training-set specification of an augmentation-ratio sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationEntry {
    pub gold_count: usize,
    pub ratio_percent: u32,
    pub synthetic_count: usize,
    pub run: usize,
    pub seed: u64,
}

/// Cartesian product of ratios (in percent) and `runs` seeds for a fixed gold seed set.
pub fn augmentation_plan(
    gold_count: usize,
    ratios_percent: &[u32],
    runs: usize,
    root_seed: u64,
) -> Vec<AugmentationEntry> {
    let mut out = Vec::with_capacity(ratios_percent.len() * runs);
    for &pct in ratios_percent {
        for run in 0..runs {
            out.push(AugmentationEntry {
                gold_count,
                ratio_percent: pct,
                synthetic_count: gold_count * pct as usize / 100,
                run,
                seed: derive_seed(root_seed, &format!("augment/{pct}/{run}")),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityType::*;

    fn sentence(i: usize, gold: Vec<EntitySpan>) -> Sentence {
        Sentence {
            report_id: "r".into(),
            index: i,
            text: "possible edema".into(),
            report_offset: 0,
            gold,
        }
    }

    fn three() -> Vec<Sentence> {
        vec![
            sentence(0, vec![EntitySpan::new(ObsU, "edema", 9, 14)]),
            sentence(1, vec![EntitySpan::new(ObsDp, "edema", 9, 14)]),
            sentence(2, vec![]),
        ]
    }

    #[test]
    fn negatives_are_empty_lists() {
        let ds = build_entity_dataset(&three(), ObsU, true);
        assert_eq!((ds.positive_count, ds.negative_count, ds.len()), (1, 2, 3));
        assert!(ds.examples[1].expected_output.is_empty());
        assert!(ds.examples.iter().all(|e| e.expected_output.iter().all(|s| s.entity_type == ObsU)));
    }

    #[test]
    fn presence_conditioned_keeps_positives_only() {
        let ds = build_entity_dataset(&three(), ObsU, false);
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.negative_count, 0);
    }

    fn pool(n: usize, entity: EntityType) -> EntityDataset {
        let examples = (0..n)
            .map(|i| DatasetExample {
                example_id: format!("x{i}"),
                text: "no effusion".into(),
                target_entity: entity,
                expected_output: vec![EntitySpan::new(entity, "effusion", 3, 11)],
            })
            .collect();
        EntityDataset::new(entity, examples)
    }

    #[test]
    fn mixing_quota_follows_floor() {
        let gold = pool(50, ObsU);
        let syn = pool(200, ObsU);
        for (ratio, added) in [(0.0, 0), (0.25, 12), (0.5, 25), (0.75, 37), (1.0, 50), (1.25, 62), (1.5, 75)] {
            let mixed = mix_datasets(&gold, &syn, ratio, 7).unwrap();
            assert_eq!(mixed.len(), 50 + added, "ratio {ratio}");
        }
        assert_eq!(synthetic_quota(100, 0.29), 29);
        assert_eq!(mix_datasets(&gold, &syn, 0.0, 1).unwrap(), gold);
    }

    #[test]
    fn mixing_is_deterministic_and_without_replacement() {
        let gold = pool(50, ObsU);
        let syn = pool(80, ObsU);
        let a = mix_datasets(&gold, &syn, 1.5, 11).unwrap();
        let b = mix_datasets(&gold, &syn, 1.5, 11).unwrap();
        assert_eq!(a, b);
        let mut ids: Vec<_> = a.examples[50..].iter().map(|e| e.example_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 75);
    }

    #[test]
    fn mixing_errors() {
        let gold = pool(50, ObsU);
        assert!(matches!(
            mix_datasets(&gold, &pool(10, ObsU), 0.5, 1),
            Err(CorpusError::PoolTooSmall { requested: 25, available: 10 })
        ));
        assert!(matches!(
            mix_datasets(&gold, &pool(10, ObsDa), 0.1, 1),
            Err(CorpusError::EntityMismatch { .. })
        ));
        assert!(matches!(mix_datasets(&gold, &pool(10, ObsU), -0.1, 1), Err(CorpusError::InvalidRatio(_))));
    }

    #[test]
    fn plan_matches_sweep_counts() {
        let plan = augmentation_plan(50, &[0, 25, 50, 75, 100, 125, 150], 5, 42);
        assert_eq!(plan.len(), 35);
        let mut counts: Vec<usize> = plan.iter().map(|e| e.synthetic_count).collect();
        counts.dedup();
        assert_eq!(counts, vec![0, 12, 25, 37, 50, 62, 75]);
        let mut seeds: Vec<u64> = plan.iter().map(|e| e.seed).collect();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 35);
    }
}
