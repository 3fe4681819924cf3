use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{
    parse_generation, render_generation, Exemplar, FiringAction, RuleFiring, SyntheticReport, Verdict,
    VerdictKind,
};
use crate::corpus::{EntitySpan, EntityType, Sentence, SpanLike};
use crate::extractor::{anchor_value, parallel_map, RemoteBackend};
use crate::text::{match_phrases, word_forms, word_tokens, CueLexicon, CuePolarity, CueScan};

pub const DEFAULT_LEXICON_SIZE: usize = 500;

/// A gold entity string with its label counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    /// Lowercased word forms joined by single spaces.
    pub term: String,
    pub counts: BTreeMap<EntityType, usize>,
    pub total: usize,
}

fn tie_rank(t: EntityType) -> u8 {
    match t {
        EntityType::ObsU => 0,
        EntityType::ObsDa => 1,
        EntityType::ObsDp => 2,
        EntityType::AnatDp => 3,
    }
}

impl LexiconEntry {
    /// Most frequent gold type; ties prefer OBS-U, then OBS-DA, OBS-DP, ANAT-DP.
    pub fn majority_type(&self) -> EntityType {
        *self
            .counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(tie_rank(*b.0).cmp(&tie_rank(*a.0))))
            .expect("entry has counts")
            .0
    }
}

/// Entity strings of a gold corpus, most frequent first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLexicon {
    pub entries: Vec<LexiconEntry>,
}

impl GoldLexicon {
    pub fn top(&self, n: usize) -> &[LexiconEntry] {
        &self.entries[..n.min(self.entries.len())]
    }

    /// The `n` most frequent strings labeled `entity`, by that type's count.
    pub fn top_for(&self, entity: EntityType, n: usize) -> Vec<&str> {
        let mut typed: Vec<(&str, usize)> = self
            .entries
            .iter()
            .filter_map(|e| e.counts.get(&entity).map(|c| (e.term.as_str(), *c)))
            .collect();
        typed.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        typed.truncate(n);
        typed.into_iter().map(|(t, _)| t).collect()
    }
}

pub fn build_gold_lexicon(sentences: &[Sentence]) -> GoldLexicon {
    let mut map: BTreeMap<String, BTreeMap<EntityType, usize>> = BTreeMap::new();
    for span in sentences.iter().flat_map(|s| &s.gold) {
        let term = word_forms(&span.value).join(" ");
        if !term.is_empty() {
            *map.entry(term).or_default().entry(span.entity_type).or_default() += 1;
        }
    }
    let mut entries: Vec<LexiconEntry> = map
        .into_iter()
        .map(|(term, counts)| LexiconEntry {
            total: counts.values().sum(),
            term,
            counts,
        })
        .collect();
    entries.sort_by(|a, b| b.total.cmp(&a.total));
    GoldLexicon { entries }
}

/// Everything the deterministic judge consults.
#[derive(Debug, Clone)]
pub struct JudgeContext {
    phrases: Vec<Vec<String>>,
    types: Vec<EntityType>,
    pub cues: CueLexicon,
    pub stopwords: HashSet<String>,
}

impl JudgeContext {
    /// Uses the `size` most frequent gold strings, skipping stopword-only ones.
    pub fn new(lexicon: &GoldLexicon, size: usize, cues: CueLexicon, stopwords: HashSet<String>) -> Self {
        let mut phrases = Vec::new();
        let mut types = Vec::new();
        for e in lexicon.top(size) {
            let words: Vec<String> = e.term.split(' ').map(str::to_string).collect();
            if words.iter().all(|w| stopwords.contains(w)) {
                continue;
            }
            phrases.push(words);
            types.push(e.majority_type());
        }
        Self {
            phrases,
            types,
            cues,
            stopwords,
        }
    }

    fn stopword_only(&self, value: &str) -> bool {
        word_forms(value).iter().all(|w| self.stopwords.contains(w))
    }
}

/// Validates and corrects candidate labels.
pub trait Judge: Send + Sync {
    fn id(&self) -> String;
    /// `exemplars` are the gold demonstrations the candidate was generated from.
    fn judge(&self, candidate: &SyntheticReport, exemplars: &[Exemplar]) -> SyntheticReport;
}

fn firing(rule: u8, action: FiringAction, span: &EntitySpan, from: Option<EntityType>) -> RuleFiring {
    RuleFiring {
        rule,
        action,
        entity_type: span.entity_type,
        value: span.value.clone(),
        from,
    }
}

/// Re-anchor or drop each label, then drop overlaps keeping the longer span.
fn anchor_labels(text: &str, labels: &[EntitySpan], firings: &mut Vec<RuleFiring>) -> Vec<EntitySpan> {
    let mut anchored = Vec::with_capacity(labels.len());
    for l in labels {
        if l.anchors_in(text) {
            anchored.push(l.clone());
            continue;
        }
        let claim = Some((l.start as i64, l.end as i64));
        match anchor_value(text, &l.value, claim).filter(|(s, e)| s < e) {
            Some((s, e)) => {
                firings.push(firing(1, FiringAction::Reanchored, l, None));
                anchored.push(EntitySpan::new(l.entity_type, l.value.clone(), s, e));
            }
            None => firings.push(firing(1, FiringAction::Dropped, l, None)),
        }
    }
    anchored.sort_by(|a, b| (b.end - b.start).cmp(&(a.end - a.start)).then(a.start.cmp(&b.start)));
    let mut kept: Vec<EntitySpan> = Vec::with_capacity(anchored.len());
    for l in anchored {
        if kept.iter().any(|k| k.overlaps(&l)) {
            firings.push(firing(1, FiringAction::Dropped, &l, None));
        } else {
            kept.push(l);
        }
    }
    kept
}

/// Rule 4 as a postcondition: anything that still fails to anchor goes.
fn enforce_anchoring(text: &str, labels: Vec<EntitySpan>, firings: &mut Vec<RuleFiring>) -> Vec<EntitySpan> {
    labels
        .into_iter()
        .filter(|l| {
            let ok = l.anchors_in(text);
            if !ok {
                firings.push(firing(4, FiringAction::Dropped, l, None));
            }
            ok
        })
        .collect()
}

fn finish(
    candidate: &SyntheticReport,
    judge: String,
    mut labels: Vec<EntitySpan>,
    firings: Vec<RuleFiring>,
) -> SyntheticReport {
    labels.sort_by(|a, b| a.start.cmp(&b.start).then(a.end.cmp(&b.end)));
    if firings.is_empty() && labels == candidate.gold {
        if let Some(v) = &candidate.verdict {
            // already judged and nothing changed: keep the earlier verdict
            if v.verdict != VerdictKind::Rejected {
                return candidate.clone();
            }
        }
    }
    let (verdict, reason) = if labels.is_empty() {
        (VerdictKind::Rejected, Some("no valid labels".to_string()))
    } else if firings.is_empty() {
        (VerdictKind::Accepted, None)
    } else {
        (VerdictKind::Corrected, None)
    };
    SyntheticReport {
        gold: labels,
        verdict: Some(Verdict {
            verdict,
            judge,
            firings,
            reason,
        }),
        ..candidate.clone()
    }
}

fn reject(candidate: &SyntheticReport, judge: String, reason: &str) -> SyntheticReport {
    SyntheticReport {
        gold: Vec::new(),
        verdict: Some(Verdict {
            verdict: VerdictKind::Rejected,
            judge,
            firings: Vec::new(),
            reason: Some(reason.to_string()),
        }),
        ..candidate.clone()
    }
}

/// The built-in rule engine.
#[derive(Debug, Clone)]
pub struct DeterministicJudge {
    pub context: JudgeContext,
}

impl DeterministicJudge {
    pub fn new(context: JudgeContext) -> Self {
        Self { context }
    }

    pub fn validate(&self, candidate: &SyntheticReport) -> SyntheticReport {
        if candidate.is_rejected() {
            return candidate.clone();
        }
        let text = &candidate.text;
        if text.trim().is_empty() {
            return reject(candidate, self.id(), "empty text");
        }
        let ctx = &self.context;
        let mut firings = Vec::new();
        let mut labels = anchor_labels(text, &candidate.gold, &mut firings);

        labels.retain(|l| {
            let stop = ctx.stopword_only(&l.value);
            if stop {
                firings.push(firing(2, FiringAction::Dropped, l, None));
            }
            !stop
        });

        let tokens = word_tokens(text);
        let words: Vec<String> = tokens.iter().map(|t| t.text.clone()).collect();
        for (first, last, pi) in match_phrases(&words, &ctx.phrases) {
            let (start, end) = (tokens[first].start, tokens[last].end);
            if labels.iter().any(|l| l.start < end && start < l.end) {
                continue;
            }
            if let Some(span) = EntitySpan::from_host(ctx.types[pi], text, start, end) {
                firings.push(firing(5, FiringAction::Added, &span, None));
                labels.push(span);
            }
        }

        let scan = CueScan::new(text, &ctx.cues);
        for l in labels.iter_mut().filter(|l| l.entity_type == EntityType::ObsDp) {
            let Some((first, _)) = scan.token_range(l.start, l.end) else {
                continue;
            };
            if let Some(cue) = scan.governing_cue(first) {
                let to = match cue.polarity {
                    CuePolarity::Negation => EntityType::ObsDa,
                    CuePolarity::Uncertainty => EntityType::ObsU,
                };
                l.entity_type = to;
                firings.push(firing(3, FiringAction::Relabeled, l, Some(EntityType::ObsDp)));
            }
        }

        let labels = enforce_anchoring(text, labels, &mut firings);
        finish(candidate, self.id(), labels, firings)
    }
}

impl Judge for DeterministicJudge {
    fn id(&self) -> String {
        "deterministic".into()
    }

    fn judge(&self, candidate: &SyntheticReport, _exemplars: &[Exemplar]) -> SyntheticReport {
        self.validate(candidate)
    }
}

const JUDGE_INSTRUCTION: &str = "You validate entity labels of a synthetic radiology sentence. \
Apply these rules: (1) drop labels whose value does not occur in the sentence; \
(2) drop labels made only of stopwords; (3) relabel OBS-DP as OBS-DA or OBS-U when a negation \
or uncertainty cue governs it; (4) never add a term absent from the sentence; (5) add labels for \
clinical terms that are present but unlabeled. Reply with the corrected JSON object \
{\"text\": ..., \"labels\": [...]}.";

/// Delegates to a model over the `/extract` contract, then re-checks anchoring locally.
pub struct RemoteJudge {
    backend: RemoteBackend,
}

impl RemoteJudge {
    pub fn new(backend: RemoteBackend) -> Self {
        Self { backend }
    }

    fn instruction(exemplars: &[Exemplar]) -> String {
        let mut s = String::from(JUDGE_INSTRUCTION);
        for (i, ex) in exemplars.iter().take(3).enumerate() {
            s.push_str(&format!(
                "\nReference {}: {}",
                i + 1,
                render_generation(ex.text.trim_end(), &ex.labels)
            ));
        }
        s
    }
}

impl Judge for RemoteJudge {
    fn id(&self) -> String {
        format!("remote:{}", self.backend.config().endpoint)
    }

    fn judge(&self, candidate: &SyntheticReport, exemplars: &[Exemplar]) -> SyntheticReport {
        if candidate.is_rejected() {
            return candidate.clone();
        }
        if candidate.text.trim().is_empty() {
            return reject(candidate, self.id(), "empty text");
        }
        let input = render_generation(&candidate.text, &candidate.gold);
        let parsed = match self.backend.call(&Self::instruction(exemplars), &input) {
            Ok(resp) => parse_generation(&resp.output),
            Err(e) => return reject(candidate, self.id(), &format!("judge backend: {e}")),
        };
        let parsed = match parsed {
            Ok(p) => p,
            Err(e) => return reject(candidate, self.id(), &format!("unparseable judge output: {e}")),
        };
        let mut firings = Vec::new();
        let labels = anchor_labels(&candidate.text, &parsed.labels, &mut firings);
        let labels = enforce_anchoring(&candidate.text, labels, &mut firings);
        for l in candidate.gold.iter().filter(|l| !labels.contains(l)) {
            firings.push(firing(0, FiringAction::Dropped, l, None));
        }
        for l in labels.iter().filter(|l| !candidate.gold.contains(l)) {
            firings.push(firing(0, FiringAction::Added, l, None));
        }
        finish(candidate, self.id(), labels, firings)
    }
}

/// Judge every candidate against the exemplars it was generated from.
pub fn judge_corpus(
    judge: &dyn Judge,
    candidates: &[SyntheticReport],
    exemplars: &BTreeMap<String, Exemplar>,
    concurrency: usize,
) -> Vec<SyntheticReport> {
    parallel_map(candidates, concurrency, |c| {
        let demos: Vec<Exemplar> = c
            .provenance
            .exemplar_ids
            .iter()
            .filter_map(|id| exemplars.get(id).cloned())
            .take(3)
            .collect();
        judge.judge(c, &demos)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityType::*;
    use crate::synth::{default_stopwords, Provenance};

    fn gold() -> Vec<Sentence> {
        let mk = |id: &str, text: &str, gold: Vec<EntitySpan>| Sentence {
            report_id: id.into(),
            index: 0,
            text: text.into(),
            report_offset: 0,
            gold,
        };
        vec![
            mk("a", "Cardiomegaly.", vec![EntitySpan::new(ObsDp, "Cardiomegaly", 0, 12)]),
            mk("b", "Mild cardiomegaly.", vec![EntitySpan::new(ObsDp, "cardiomegaly", 5, 17)]),
            mk("c", "Possible cardiomegaly.", vec![EntitySpan::new(ObsU, "cardiomegaly", 9, 21)]),
            mk("d", "The heart.", vec![EntitySpan::new(AnatDp, "heart", 4, 9)]),
            mk("e", "Effusion or edema.", vec![
                EntitySpan::new(ObsU, "Effusion", 0, 8),
                EntitySpan::new(ObsU, "edema", 12, 17),
            ]),
            mk("f", "Effusion.", vec![EntitySpan::new(ObsDa, "Effusion", 0, 8)]),
        ]
    }

    fn judge() -> DeterministicJudge {
        let lex = build_gold_lexicon(&gold());
        DeterministicJudge::new(JudgeContext::new(&lex, DEFAULT_LEXICON_SIZE, CueLexicon::default(), default_stopwords()))
    }

    fn candidate(text: &str, gold: Vec<EntitySpan>) -> SyntheticReport {
        SyntheticReport {
            report_id: "syn-000000".into(),
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
    fn majority_type_and_ties() {
        let lex = build_gold_lexicon(&gold());
        let find = |t: &str| lex.entries.iter().find(|e| e.term == t).unwrap().majority_type();
        assert_eq!(find("cardiomegaly"), ObsDp);
        assert_eq!(find("effusion"), ObsU);
        assert_eq!(lex.entries[0].term, "cardiomegaly");
        assert_eq!(lex.top_for(ObsU, 10), vec!["cardiomegaly", "edema", "effusion"]);
    }

    #[test]
    fn negated_observation_is_relabeled() {
        let out = judge().validate(&candidate("no effusion", vec![EntitySpan::new(ObsDp, "effusion", 3, 11)]));
        assert_eq!(out.gold, vec![EntitySpan::new(ObsDa, "effusion", 3, 11)]);
        let v = out.verdict.unwrap();
        assert_eq!(v.verdict, VerdictKind::Corrected);
        assert_eq!(v.firings[0].rule, 3);
    }

    #[test]
    fn hallucinated_label_is_dropped() {
        let out = judge().validate(&candidate(
            "Mild edema.",
            vec![EntitySpan::new(ObsDp, "edema", 5, 10), EntitySpan::new(ObsDp, "ghost", 0, 5)],
        ));
        assert_eq!(out.gold, vec![EntitySpan::new(ObsDp, "edema", 5, 10)]);
        assert!(out.verdict.unwrap().firings.iter().any(|f| f.rule == 1 && f.value == "ghost"));
    }

    #[test]
    fn missing_lexicon_term_is_added_with_majority_type() {
        let out = judge().validate(&candidate(
            "The heart shows cardiomegaly.",
            vec![EntitySpan::new(AnatDp, "heart", 4, 9)],
        ));
        assert!(out.gold.contains(&EntitySpan::new(ObsDp, "cardiomegaly", 16, 28)));
    }

    #[test]
    fn drifted_offsets_and_stopword_labels() {
        let out = judge().validate(&candidate(
            "The heart is big.",
            vec![EntitySpan::new(AnatDp, "heart", 0, 5), EntitySpan::new(ObsDp, "is", 10, 12)],
        ));
        assert_eq!(out.gold, vec![EntitySpan::new(AnatDp, "heart", 4, 9)]);
    }

    #[test]
    fn empty_results_are_rejected() {
        assert!(judge().validate(&candidate("  ", vec![])).is_rejected());
        assert!(judge().validate(&candidate("Nothing here.", vec![])).is_rejected());
    }

    #[test]
    fn judging_is_idempotent() {
        let once = judge().validate(&candidate(
            "Possible edema and cardiomegaly without effusion.",
            vec![EntitySpan::new(ObsDp, "edema", 0, 5)],
        ));
        assert!(once.gold.iter().all(|l| l.anchors_in(&once.text)));
        assert_eq!(judge().validate(&once), once);
    }
}
