use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{GoldLexicon, SyntheticReport};
use crate::corpus::{EntityType, SpanLike};
use crate::text::{match_phrases, normalize_whitespace, word_tokens};

/// A ratio with its counts; `undefined` marks a zero denominator, where `rate` is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub numerator: usize,
    pub denominator: usize,
    pub rate: f64,
    pub undefined: bool,
}

impl RateCell {
    pub fn new(numerator: usize, denominator: usize) -> Self {
        Self {
            numerator,
            denominator,
            rate: if denominator == 0 { 0.0 } else { numerator as f64 / denominator as f64 },
            undefined: denominator == 0,
        }
    }
}

/// Whitespace runs collapsed, ends trimmed, case kept.
pub fn normalize_for_dedup(text: &str) -> String {
    normalize_whitespace(text)
}

/// Remove synthetic reports whose normalized text equals a normalized gold text.
pub fn dedup_exact<I, S>(synthetic: Vec<SyntheticReport>, gold_texts: I) -> (Vec<SyntheticReport>, usize)
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let gold: HashSet<String> = gold_texts.into_iter().map(|t| normalize_for_dedup(t.as_ref())).collect();
    let before = synthetic.len();
    let kept: Vec<SyntheticReport> = synthetic
        .into_iter()
        .filter(|r| !gold.contains(&normalize_for_dedup(&r.text)))
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

fn live(reports: &[SyntheticReport]) -> impl Iterator<Item = &SyntheticReport> {
    reports.iter().filter(|r| !r.is_rejected())
}

/// Per type, labels whose value does not sit at their offsets, over all labels; rejected reports are skipped.
pub fn unanchorable_rate(reports: &[SyntheticReport]) -> BTreeMap<EntityType, RateCell> {
    let mut counts: BTreeMap<EntityType, (usize, usize)> = EntityType::ALL.iter().map(|t| (*t, (0, 0))).collect();
    for r in live(reports) {
        for l in &r.gold {
            let c = counts.get_mut(&l.entity_type).expect("all types present");
            c.1 += 1;
            if !l.anchors_in(&r.text) {
                c.0 += 1;
            }
        }
    }
    counts.into_iter().map(|(t, (n, d))| (t, RateCell::new(n, d))).collect()
}

/// Per type, whole-token case-insensitive matches of that type's top `size`
/// gold strings that no same-type label overlaps, over all matches.
pub fn lexicon_coverage_check(
    reports: &[SyntheticReport],
    lexicon: &GoldLexicon,
    size: usize,
) -> BTreeMap<EntityType, RateCell> {
    let mut out = BTreeMap::new();
    for t in EntityType::ALL {
        let phrases: Vec<Vec<String>> = lexicon
            .top_for(t, size)
            .into_iter()
            .map(|term| term.split(' ').map(str::to_string).collect())
            .collect();
        let (mut matched, mut missing) = (0, 0);
        for r in live(reports) {
            let tokens = word_tokens(&r.text);
            let words: Vec<String> = tokens.iter().map(|tok| tok.text.clone()).collect();
            for (first, last, _) in match_phrases(&words, &phrases) {
                let (start, end) = (tokens[first].start, tokens[last].end);
                matched += 1;
                let labeled = r
                    .gold
                    .iter()
                    .any(|l| l.entity_type == t && l.start < end && start < l.end);
                if !labeled {
                    missing += 1;
                }
            }
        }
        out.insert(t, RateCell::new(missing, matched));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    pub unanchorable: BTreeMap<EntityType, RateCell>,
    pub lexicon_missing: BTreeMap<EntityType, RateCell>,
    pub lexicon_size: usize,
    pub dedup_removed: usize,
    pub rejected: usize,
    /// Reports that survived judging and dedup.
    pub final_size: usize,
}

impl QaReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("entity_type\tmetric\tnumerator\tdenominator\trate\tundefined\n");
        for (metric, table) in [("unanchorable", &self.unanchorable), ("lexicon_missing", &self.lexicon_missing)] {
            for (t, c) in table {
                out.push_str(&format!(
                    "{t}\t{metric}\t{}\t{}\t{:.6}\t{}\n",
                    c.numerator, c.denominator, c.rate, c.undefined
                ));
            }
        }
        out
    }
}

pub fn qa_report(reports: &[SyntheticReport], lexicon: &GoldLexicon, size: usize, dedup_removed: usize) -> QaReport {
    let rejected = reports.iter().filter(|r| r.is_rejected()).count();
    QaReport {
        unanchorable: unanchorable_rate(reports),
        lexicon_missing: lexicon_coverage_check(reports, lexicon, size),
        lexicon_size: size,
        dedup_removed,
        rejected,
        final_size: reports.len() - rejected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntitySpan, Sentence};
    use crate::corpus::EntityType::*;
    use crate::synth::{build_gold_lexicon, Provenance};

    fn report(id: &str, text: &str, gold: Vec<EntitySpan>) -> SyntheticReport {
        SyntheticReport {
            report_id: id.into(),
            index: 0,
            text: text.into(),
            report_offset: 0,
            gold,
            provenance: Provenance::default(),
            verdict: None,
            qa_flags: vec![],
        }
    }

    #[test]
    fn dedup_is_exact_after_whitespace_normalization() {
        let synth = vec![
            report("s1", "No  effusion. ", vec![]),
            report("s2", "No large effusion.", vec![]),
            report("s3", "no effusion.", vec![]),
        ];
        let (kept, removed) = dedup_exact(synth, ["No effusion."]);
        assert_eq!(removed, 1);
        assert_eq!(kept.iter().map(|r| r.report_id.as_str()).collect::<Vec<_>>(), vec!["s2", "s3"]);
    }

    #[test]
    fn one_hallucination_in_ten_labels() {
        let mut gold: Vec<EntitySpan> = (0..9).map(|i| EntitySpan::new(ObsDp, "x", i * 2, i * 2 + 1)).collect();
        gold.push(EntitySpan::new(ObsDp, "ghost", 0, 5));
        let rates = unanchorable_rate(&[report("s", "x x x x x x x x x", gold)]);
        assert!((rates[&ObsDp].rate - 0.1).abs() < 1e-12);
        assert!(rates[&AnatDp].undefined);
        assert_eq!(rates[&AnatDp].rate, 0.0);
    }

    #[test]
    fn lexicon_coverage_counts_unlabeled_matches() {
        let gold_corpus = vec![Sentence {
            report_id: "g".into(),
            index: 0,
            text: "Edema.".into(),
            report_offset: 0,
            gold: vec![EntitySpan::new(ObsDp, "Edema", 0, 5)],
        }];
        let lex = build_gold_lexicon(&gold_corpus);
        let synth = vec![
            report("a", "Edema and edema.", vec![EntitySpan::new(ObsDp, "Edema", 0, 5), EntitySpan::new(ObsDp, "edema", 10, 15)]),
            report("b", "Mild edema, edema.", vec![EntitySpan::new(ObsDp, "edema", 5, 10)]),
        ];
        let rates = lexicon_coverage_check(&synth, &lex, 500);
        assert_eq!((rates[&ObsDp].numerator, rates[&ObsDp].denominator), (1, 4));
        assert!((rates[&ObsDp].rate - 0.25).abs() < 1e-12);
    }
}
