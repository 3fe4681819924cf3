//! Deterministic fixture corpora for tests, examples and demos.
//!
//! Reports are written in the space-tokenized style of RadGraph (`"clear ."`),
//! so every gold span is whitespace-token aligned and the corpus can be
//! exported with [`crate::corpus::to_radgraph_json`].

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{split_corpus, EntitySpan, EntityType, Report, Sentence, Split};
use crate::extractor::{Extractor, LabelRecord, ReplayBackend, ReplayRecord, SentencePrediction};
use crate::text::char_len;

/// Render a template where `[TYPE|text]` marks a gold span.
///
/// Panics on an unknown type or an unclosed marker; templates are static.
pub fn render_marked(template: &str) -> (String, Vec<EntitySpan>) {
    let mut text = String::new();
    let mut spans = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('[') {
        text.push_str(&rest[..open]);
        let close = rest[open..].find(']').expect("unclosed marker") + open;
        let (label, value) = rest[open + 1..close].split_once('|').expect("marker needs TYPE|text");
        let entity_type: EntityType = label.parse().expect("known entity type");
        let start = char_len(&text);
        text.push_str(value);
        spans.push(EntitySpan::new(entity_type, value, start, start + char_len(value)));
        rest = &rest[close + 1..];
    }
    text.push_str(rest);
    (text, spans)
}

const FINDINGS: &[&str] = &[
    "effusion",
    "pneumothorax",
    "consolidation",
    "edema",
    "atelectasis",
    "opacity",
    "pneumonia",
    "nodule",
    "infiltrate",
    "congestion",
    "scarring",
];

const ANATOMY: &[&str] = &[
    "left lung",
    "right lung",
    "right lower lobe",
    "left lower lobe",
    "right upper lobe",
    "lung bases",
    "left base",
    "right apex",
    "mediastinum",
    "left hemithorax",
    "costophrenic angle",
    "lingula",
];

const DESCRIPTORS: &[&str] = &["Mild", "Small", "Moderate", "Patchy", "Minimal"];

const SENTENCES: &[&str] = &[
    "The [ANAT-DP|lungs] are [OBS-DP|clear] .",
    "No [ANAT-DP|pleural] [OBS-DA|effusion] or [OBS-DA|pneumothorax] .",
    "[ANAT-DP|Heart] size is [OBS-DP|normal] .",
    "There is no [OBS-DA|{F}] .",
    "No evidence of [OBS-DA|{F}] in the [ANAT-DP|{A}] .",
    "{D} [OBS-DP|{F}] is seen in the [ANAT-DP|{A}] .",
    "Possible [OBS-U|{F}] at the [ANAT-DP|{A}] .",
    "[OBS-DP|{F}] at the [ANAT-DP|{A}] may represent [OBS-U|{G}] .",
    "The [ANAT-DP|cardiomediastinal silhouette] is [OBS-DP|stable] .",
    "A 2 × 3 cm [OBS-DP|mass] projects over the [ANAT-DP|{A}] .",
    "[OBS-DP|Degenerative changes] of the [ANAT-DP|thoracic spine] .",
    "Findings could be [OBS-U|{F}] versus [OBS-U|{G}] .",
    "The [ANAT-DP|{A}] is [OBS-DP|unremarkable] .",
    "[ANAT-DP|Lung volumes] are [OBS-DP|low] .",
    "Free of [OBS-DA|{F}] .",
    "There is [OBS-DP|{F}] in the [ANAT-DP|{A}] , [OBS-DP|unchanged] .",
    "Comparison is made to the prior study .",
];

const SEPARATORS: &[&str] = &[" ", " ", " ", "  ", "\n", " \n"];

fn fill(template: &str, rng: &mut ChaCha8Rng) -> String {
    let f = *FINDINGS.choose(rng).expect("non-empty");
    let g = *FINDINGS.iter().filter(|x| **x != f).collect::<Vec<_>>().choose(rng).expect("non-empty");
    template
        .replace("{F}", f)
        .replace("{G}", g)
        .replace("{A}", ANATOMY.choose(rng).expect("non-empty"))
        .replace("{D}", DESCRIPTORS.choose(rng).expect("non-empty"))
}

fn split_for(i: usize) -> Split {
    match i % 10 {
        0 => Split::Test,
        1 => Split::Dev,
        _ => Split::Train,
    }
}

/// `n` chest radiograph reports of 3 to 8 sentences each, reproducible from `seed`.
pub fn generate_reports(n: usize, seed: u64) -> Vec<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut text = String::new();
            let mut gold = Vec::new();
            if rng.random_bool(0.5) {
                text.push_str("FINDINGS : ");
            }
            let count = rng.random_range(3..=8);
            for k in 0..count {
                if k > 0 {
                    text.push_str(SEPARATORS.choose(&mut rng).expect("non-empty"));
                }
                let template = fill(SENTENCES.choose(&mut rng).expect("non-empty"), &mut rng);
                let (sentence, spans) = render_marked(&template);
                let offset = char_len(&text) as isize;
                gold.extend(spans.iter().map(|s| s.shifted(offset)));
                text.push_str(&sentence);
            }
            Report {
                id: format!("fx{i:05}"),
                text,
                gold,
                split: split_for(i),
                source: "fixture".into(),
            }
        })
        .collect()
}

/// Threshold rows `[ANAT-DP, OBS-DP, OBS-DA, OBS-U]` of the automation fixture.
pub const AUTOMATION_POLICY_ROWS: [[f64; 4]; 4] = [
    [0.0, 0.36, 0.0, 0.0],
    [0.0, 0.91, 0.79, 0.0],
    [0.74, 0.91, 0.95, 0.0],
    [0.74, 0.91, 0.97, 0.0],
];

/// Expected `(accept, review)` per policy row at p = 0.90 and p = 0.95.
pub const AUTOMATION_EXPECTED: [[(usize, usize); 4]; 2] = [
    [(229, 26), (161, 94), (141, 114), (138, 117)],
    [(228, 27), (160, 95), (140, 115), (137, 118)],
];

pub const AUTOMATION_REPORTS: usize = 255;

/// Report classes of the automation fixture, by the strictest policy row they pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Class {
    /// Carries an OBS-U prediction.
    Uncertain,
    /// OBS-DP below every OBS-DP threshold.
    Low,
    /// Passes row 1 only.
    Row1,
    /// Passes rows 1 and 2.
    Row2,
    /// Passes rows 1 to 3.
    Row3,
    /// Passes every row.
    All,
    /// Ten spans with one failure: accepted at 0.90, reviewed at 0.95.
    Borderline,
}

const BASE: &[&str] = &[
    "The [ANAT-DP|lungs] are [OBS-DP|clear] .",
    "No [ANAT-DP|pleural] [OBS-DA|effusion] .",
    "[ANAT-DP|Heart] size is [OBS-DP|normal] .",
    "No [OBS-DA|pneumothorax] .",
];
const UNCERTAIN: &str = "Possible [OBS-U|atelectasis] at the [ANAT-DP|left base] .";
const EXTRA: &[&str] = &["The [ANAT-DP|mediastinum] is [OBS-DP|unremarkable] .", "No [OBS-DA|edema] ."];

fn class_plan() -> Vec<(Class, f64)> {
    // (class, count, pooled match score the error assignment aims at)
    let counts = [
        (Class::Uncertain, 14, 0.71),
        (Class::Low, 12, 0.71),
        (Class::Row1, 68, 0.80),
        (Class::Row2, 20, 0.75),
        (Class::Row3, 3, 0.90),
        (Class::All, 137, 0.92),
        (Class::Borderline, 1, 1.0),
    ];
    counts
        .iter()
        .flat_map(|&(c, n, target)| std::iter::repeat_n((c, target), n))
        .collect()
}

fn default_confidence(t: EntityType) -> f64 {
    match t {
        EntityType::AnatDp => 0.90,
        EntityType::ObsDp => 0.95,
        EntityType::ObsDa => 0.98,
        EntityType::ObsU => 0.90,
    }
}

fn confidence_for(class: Class, span: &EntitySpan) -> f64 {
    match (class, span.entity_type, span.value.as_str()) {
        (Class::Low | Class::Borderline, EntityType::ObsDp, "clear") => 0.20,
        (Class::Row1, EntityType::ObsDp, "clear") => 0.60,
        (Class::Row2, EntityType::AnatDp, "lungs") => 0.60,
        (Class::Row3, EntityType::ObsDa, "effusion") => 0.96,
        _ => default_confidence(span.entity_type),
    }
}

/// A report corpus with stored model outputs for all four entity types.
#[derive(Debug, Clone)]
pub struct ReplayFixture {
    pub reports: Vec<Report>,
    pub sentences: Vec<Sentence>,
    pub replay: Vec<ReplayRecord>,
}

impl ReplayFixture {
    pub fn backend(&self) -> ReplayBackend {
        ReplayBackend::from_records("replay:fixture", self.replay.clone()).expect("unique fixture records")
    }

    /// Parsed predictions for every sentence and entity type.
    pub fn predictions(&self) -> Vec<SentencePrediction> {
        let backend = self.backend();
        EntityType::ALL
            .iter()
            .flat_map(|t| backend.extract(&self.sentences, *t).expect("replay never fails"))
            .collect()
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Predicted spans for one report under `errors` injected mistakes:
/// 1 widens "Heart" to "Heart size", 2 also drops "pneumothorax".
fn predicted(class: Class, gold: &[EntitySpan], text: &str, errors: usize) -> Vec<(EntitySpan, f64)> {
    let mut out = Vec::with_capacity(gold.len());
    for g in gold {
        let conf = confidence_for(class, g);
        if errors >= 1 && g.value == "Heart" {
            let widened = EntitySpan::from_host(g.entity_type, text, g.start, g.start + "Heart size".len())
                .expect("template has Heart size");
            out.push((widened, conf));
        } else if errors >= 2 && g.value == "pneumothorax" {
            continue;
        } else {
            out.push((g.clone(), conf));
        }
    }
    out
}

fn pooled_counts(gold: usize, errors: usize) -> (usize, usize) {
    match errors {
        0 => (gold, gold),
        1 => (gold - 1, gold + 1),
        _ => (gold - 2, gold + 1),
    }
}

/// 255 reports whose stored predictions reproduce [`AUTOMATION_EXPECTED`]
/// under [`AUTOMATION_POLICY_ROWS`], with lower match scores on reviewed reports.
pub fn automation_fixture() -> ReplayFixture {
    let mut plan = class_plan();
    debug_assert_eq!(plan.len(), AUTOMATION_REPORTS);
    plan.shuffle(&mut ChaCha8Rng::seed_from_u64(0x7ab1e6));

    // per class running (tp, tp + fp + fn)
    let mut running: std::collections::HashMap<Class, (usize, usize)> = Default::default();
    let mut reports = Vec::with_capacity(plan.len());
    let mut planned: Vec<(Class, usize)> = Vec::with_capacity(plan.len());
    for (i, (class, target)) in plan.iter().copied().enumerate() {
        let mut parts: Vec<&str> = BASE.to_vec();
        match class {
            Class::Uncertain => parts.push(UNCERTAIN),
            Class::Borderline => parts.extend(EXTRA),
            _ => {}
        }
        let mut text = String::new();
        let mut gold = Vec::new();
        for (k, part) in parts.iter().enumerate() {
            if k > 0 {
                text.push(' ');
            }
            let (s, spans) = render_marked(part);
            let offset = char_len(&text) as isize;
            gold.extend(spans.iter().map(|sp| sp.shifted(offset)));
            text.push_str(&s);
        }
        let errors = if class == Class::Borderline {
            0
        } else {
            let (tp, denom) = running.get(&class).copied().unwrap_or((0, 0));
            (0..=2)
                .min_by(|&a, &b| {
                    let score = |e: usize| {
                        let (t, d) = pooled_counts(gold.len(), e);
                        ((tp + t) as f64 / (denom + d) as f64 - target).abs()
                    };
                    score(a).total_cmp(&score(b))
                })
                .expect("non-empty range")
        };
        let (t, d) = pooled_counts(gold.len(), errors);
        let entry = running.entry(class).or_default();
        entry.0 += t;
        entry.1 += d;
        planned.push((class, errors));
        reports.push(Report {
            id: format!("t{i:03}"),
            text,
            gold,
            split: Split::Test,
            source: "fixture".into(),
        });
    }

    let sentences = split_corpus(&reports);
    let mut replay = Vec::new();
    for (report, (class, errors)) in reports.iter().zip(&planned) {
        let preds = predicted(*class, &report.gold, &report.text, *errors);
        for s in sentences.iter().filter(|s| s.report_id == report.id) {
            let end = s.report_offset + s.char_len();
            for t in EntityType::ALL {
                let local: Vec<&(EntitySpan, f64)> = preds
                    .iter()
                    .filter(|(p, _)| p.entity_type == t && p.start >= s.report_offset && p.end <= end)
                    .collect();
                let records: Vec<LabelRecord> = local
                    .iter()
                    .map(|(p, _)| LabelRecord {
                        entity_type: t.as_str().to_string(),
                        entity_value: p.value.clone(),
                        start_position: Some((p.start - s.report_offset) as i64),
                        end_position: Some((p.end - s.report_offset) as i64),
                        logit: None,
                    })
                    .collect();
                replay.push(ReplayRecord {
                    sentence_id: s.id(),
                    target_entity: t,
                    raw_output: serde_json::to_value(&records).expect("records serialize"),
                    logits: local.iter().map(|(_, c)| logit(*c)).collect(),
                });
            }
        }
    }
    ReplayFixture {
        reports,
        sentences,
        replay,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automation::{run_automation, AutomationPolicy, Verdict};
    use crate::corpus::{reassemble, to_radgraph_json, SpanLike};

    #[test]
    fn marked_templates_anchor() {
        let (text, spans) = render_marked("A 2 × 3 cm [OBS-DP|mass] in the [ANAT-DP|left lung] .");
        assert_eq!(text, "A 2 × 3 cm mass in the left lung .");
        assert!(spans.iter().all(|s| s.anchors_in(&text)));
        assert_eq!(spans[0].start, 11);
    }

    #[test]
    fn generated_reports_are_reproducible_and_round_trip() {
        let a = generate_reports(50, 9);
        assert_eq!(a, generate_reports(50, 9));
        assert_ne!(a, generate_reports(50, 10));
        to_radgraph_json(&a).unwrap();
        for r in &a {
            assert!(r.gold.iter().all(|s| s.anchors_in(&r.text)));
            let sentences: Vec<Sentence> = crate::corpus::split_sentences(r);
            let (text, gold) = reassemble(&sentences).unwrap();
            assert_eq!(text, r.text);
            assert_eq!(gold, r.gold);
        }
    }

    #[test]
    fn automation_fixture_hits_every_row() {
        let fx = automation_fixture();
        assert_eq!(fx.reports.len(), AUTOMATION_REPORTS);
        let preds = fx.predictions();
        for (pi, p) in [0.90, 0.95].into_iter().enumerate() {
            for (ri, row) in AUTOMATION_POLICY_ROWS.iter().enumerate() {
                let policy = AutomationPolicy::from_array(*row, p);
                let run = run_automation(&fx.sentences, &preds, &policy, true).unwrap();
                let r = &run.report;
                assert_eq!((r.accept_count, r.review_count), AUTOMATION_EXPECTED[pi][ri], "p={p} row={ri}");
                let acc = r.accepted_score.as_ref().unwrap().pooled;
                let rev = r.review_score.as_ref().unwrap().pooled;
                assert!(acc > rev, "p={p} row={ri}: {acc} vs {rev}");
                assert!(run
                    .decisions
                    .iter()
                    .filter(|d| d.verdict == Verdict::Accept)
                    .all(|d| !d.has_entity(EntityType::ObsU)));
            }
        }
    }
}
