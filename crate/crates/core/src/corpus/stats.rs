use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{split_sentences, EntityType, Report, Split};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCounts {
    pub spans: usize,
    pub sentences: usize,
    pub reports: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub reports: usize,
    pub sentences: usize,
}

/// Exact corpus counts, keyed in entity-type and split order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub reports: usize,
    pub sentences: usize,
    pub by_entity: BTreeMap<EntityType, EntityCounts>,
    pub by_split: BTreeMap<Split, SplitCounts>,
}

pub fn corpus_stats(reports: &[Report]) -> CorpusStats {
    let mut by_entity: BTreeMap<EntityType, EntityCounts> =
        EntityType::ALL.into_iter().map(|e| (e, EntityCounts::default())).collect();
    let mut by_split: BTreeMap<Split, SplitCounts> = [Split::Train, Split::Dev, Split::Test]
        .into_iter()
        .map(|s| (s, SplitCounts::default()))
        .collect();
    let mut sentences = 0;
    for r in reports {
        let split = by_split.get_mut(&r.split).expect("all splits present");
        let pieces = split_sentences(r);
        split.reports += 1;
        split.sentences += pieces.len();
        sentences += pieces.len();
        let mut in_report = BTreeSet::new();
        for s in &pieces {
            let kinds: BTreeSet<EntityType> = s.gold.iter().map(|g| g.entity_type).collect();
            for e in kinds {
                by_entity.get_mut(&e).expect("all types present").sentences += 1;
                in_report.insert(e);
            }
        }
        for g in &r.gold {
            by_entity.get_mut(&g.entity_type).expect("all types present").spans += 1;
        }
        for e in in_report {
            by_entity.get_mut(&e).expect("all types present").reports += 1;
        }
    }
    CorpusStats {
        reports: reports.len(),
        sentences,
        by_entity,
        by_split,
    }
}
