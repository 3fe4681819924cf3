use std::collections::{BTreeMap, HashSet};

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_prompt, parse_generation, render_generation, Embedder, Exemplar, GenerationPrompt, KeywordTable,
    Provenance, RetrievalIndex, SynthError, SyntheticReport, Verdict, VerdictKind, OUTPUT_SCHEMA,
};
use crate::corpus::{EntitySpan, EntityType};
use crate::extractor::{parallel_map, RemoteBackend};
use crate::seed::derive_seed;
use crate::text::{char_len, word_forms};

/// Produces one raw generation per prompt.
pub trait Generator: Send + Sync {
    fn id(&self) -> String;
    fn generate(&self, prompt: &GenerationPrompt, seed: u64) -> Result<String, String>;
}

pub const MOCK_FINDINGS: &[&str] = &[
    "effusion",
    "pneumothorax",
    "consolidation",
    "edema",
    "atelectasis",
    "opacity",
    "pneumonia",
    "nodule",
    "cardiomegaly",
    "fracture",
    "infiltrate",
    "congestion",
];

pub const MOCK_ANATOMY: &[&str] = &[
    "left lung",
    "right lung",
    "lung bases",
    "right lower lobe",
    "left lower lobe",
    "mediastinum",
    "heart",
    "left hemithorax",
    "right apex",
    "costophrenic angle",
];

enum Slot {
    Lit(&'static str),
    Term(&'static str, EntityType),
    Finding(EntityType),
    Anatomy,
}

use Slot::*;

const TEMPLATES: &[&[Slot]] = &[
    &[Lit("No "), Finding(EntityType::ObsDa), Lit(" is seen.")],
    &[Lit("There is a small "), Finding(EntityType::ObsDp), Lit(" in the "), Anatomy, Lit(".")],
    &[Lit("Possible "), Finding(EntityType::ObsU), Lit(" in the "), Anatomy, Lit(".")],
    &[Lit("The "), Anatomy, Lit(" is "), Term("clear", EntityType::ObsDp), Lit(".")],
    &[Lit("No evidence of "), Finding(EntityType::ObsDa), Lit(".")],
    &[Lit("Findings may represent "), Finding(EntityType::ObsU), Lit(".")],
    &[Lit("Mild "), Finding(EntityType::ObsDp), Lit(" at the "), Anatomy, Lit(" is unchanged.")],
];

/// Built-in template generator: fills finding and anatomy slots, preferring prompt keywords.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockGenerator;

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str], keywords: &[String]) -> &'a str {
    let preferred: Vec<&str> = options
        .iter()
        .copied()
        .filter(|o| word_forms(o).iter().any(|w| keywords.contains(w)))
        .collect();
    if preferred.is_empty() {
        options.choose(rng).expect("non-empty slot list")
    } else {
        preferred.choose(rng).expect("non-empty")
    }
}

impl MockGenerator {
    /// The text and labels the mock emits for `keywords` under `seed`.
    pub fn sentence(&self, keywords: &[String], seed: u64) -> (String, Vec<EntitySpan>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keywords: Vec<String> = keywords.iter().map(|k| k.to_lowercase()).collect();
        let template = TEMPLATES[rng.random_range(0..TEMPLATES.len())];
        let finding = pick(&mut rng, MOCK_FINDINGS, &keywords);
        let anatomy = pick(&mut rng, MOCK_ANATOMY, &keywords);
        let mut text = String::new();
        let mut labels = Vec::new();
        for slot in template {
            let (value, label) = match slot {
                Lit(s) => (*s, None),
                Term(s, t) => (*s, Some(*t)),
                Finding(t) => (finding, Some(*t)),
                Anatomy => (anatomy, Some(EntityType::AnatDp)),
            };
            let start = char_len(&text);
            text.push_str(value);
            if let Some(t) = label {
                labels.push(EntitySpan::new(t, value, start, start + char_len(value)));
            }
        }
        (text, labels)
    }
}

impl Generator for MockGenerator {
    fn id(&self) -> String {
        "mock-template".into()
    }

    fn generate(&self, prompt: &GenerationPrompt, seed: u64) -> Result<String, String> {
        let (text, labels) = self.sentence(&prompt.keywords, seed);
        Ok(render_generation(&text, &labels))
    }
}

/// Generation over the extractor's `/extract` contract: the prompt is the
/// instruction and the keywords are the input.
pub struct RemoteGenerator {
    backend: RemoteBackend,
}

impl RemoteGenerator {
    pub fn new(backend: RemoteBackend) -> Self {
        Self { backend }
    }
}

impl Generator for RemoteGenerator {
    fn id(&self) -> String {
        format!("remote:{}", self.backend.config().endpoint)
    }

    fn generate(&self, prompt: &GenerationPrompt, _seed: u64) -> Result<String, String> {
        self.backend
            .call(&prompt.text, &prompt.keywords.join(", "))
            .map(|r| r.output)
    }
}

fn default_batch_size() -> usize {
    20
}
fn default_keywords_per_prompt() -> usize {
    3
}
fn default_exemplars() -> usize {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_prefix() -> String {
    "syn".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub count: usize,
    pub seed: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_keywords_per_prompt")]
    pub keywords_per_prompt: usize,
    /// k, 2 or 3.
    #[serde(default = "default_exemplars")]
    pub exemplars_per_prompt: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

impl GenerationConfig {
    pub fn new(count: usize, seed: u64) -> Self {
        Self {
            count,
            seed,
            batch_size: default_batch_size(),
            keywords_per_prompt: default_keywords_per_prompt(),
            exemplars_per_prompt: default_exemplars(),
            concurrency: default_concurrency(),
            id_prefix: default_prefix(),
        }
    }
}

/// A prompt scheduled for generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPrompt {
    pub report_id: String,
    pub batch: usize,
    pub seed: u64,
    pub prompt: GenerationPrompt,
}

/// Sample keywords per batch, retrieve exemplars, and build every prompt.
///
/// Each batch draws from its own RNG derived from the seed, so a batch's
/// prompts do not depend on how many batches precede it.
pub fn plan_prompts(
    keywords: &KeywordTable,
    index: &RetrievalIndex,
    embedder: &dyn Embedder,
    exemplars: &BTreeMap<String, Exemplar>,
    pool: Option<&HashSet<String>>,
    cfg: &GenerationConfig,
) -> Result<Vec<PlannedPrompt>, SynthError> {
    if keywords.is_empty() {
        return Err(SynthError::NoKeywords);
    }
    if cfg.batch_size == 0 || cfg.keywords_per_prompt == 0 {
        return Err(SynthError::Config("batch size and keywords per prompt must be positive".into()));
    }
    if !(2..=3).contains(&cfg.exemplars_per_prompt) {
        return Err(SynthError::ExemplarCount(cfg.exemplars_per_prompt));
    }
    let words = keywords.words();
    let per_prompt = cfg.keywords_per_prompt.min(words.len());
    let mut chosen: Vec<Vec<String>> = Vec::with_capacity(cfg.count);
    for batch_start in (0..cfg.count).step_by(cfg.batch_size) {
        let batch = batch_start / cfg.batch_size;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("synth/batch/{batch}")));
        for _ in batch_start..(batch_start + cfg.batch_size).min(cfg.count) {
            let mut picked: Vec<usize> = index::sample(&mut rng, words.len(), per_prompt).into_vec();
            picked.sort_unstable();
            chosen.push(picked.into_iter().map(|i| words[i].clone()).collect());
        }
    }
    let queries: Vec<String> = chosen.iter().map(|k| k.join(" ")).collect();
    let vectors = embedder.embed(&queries)?;
    let mut out = Vec::with_capacity(cfg.count);
    for (i, (kw, q)) in chosen.into_iter().zip(vectors).enumerate() {
        let hits = index.retrieve_top_k(&q, cfg.exemplars_per_prompt, pool)?;
        let demos = hits
            .into_iter()
            .map(|h| exemplars.get(&h.id).cloned().ok_or(SynthError::UnknownExemplar(h.id)))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(PlannedPrompt {
            report_id: format!("{}-{:06}", cfg.id_prefix, i),
            batch: i / cfg.batch_size,
            seed: derive_seed(cfg.seed, &format!("synth/item/{i}")),
            prompt: build_prompt(&kw, demos, OUTPUT_SCHEMA)?,
        });
    }
    Ok(out)
}

fn rejected(planned: &PlannedPrompt, provenance: Provenance, text: String, reason: String) -> SyntheticReport {
    SyntheticReport {
        report_id: planned.report_id.clone(),
        index: 0,
        text,
        report_offset: 0,
        gold: Vec::new(),
        provenance,
        verdict: Some(Verdict {
            verdict: VerdictKind::Rejected,
            judge: "parser".into(),
            firings: Vec::new(),
            reason: Some(reason),
        }),
        qa_flags: Vec::new(),
    }
}

/// Run every prompt through `backend`; one outcome per prompt, in order.
///
/// Unparseable generations and per-item backend failures come back as
/// rejected reports. The call errors only when every item failed in the backend.
pub fn generate_batch(
    backend: &dyn Generator,
    prompts: &[PlannedPrompt],
    concurrency: usize,
) -> Result<Vec<SyntheticReport>, SynthError> {
    let generator = backend.id();
    let outcomes = parallel_map(prompts, concurrency, |p| {
        let provenance = Provenance {
            keywords: p.prompt.keywords.clone(),
            exemplar_ids: p.prompt.exemplar_ids(),
            seed: p.seed,
            batch: p.batch,
            generator: generator.clone(),
        };
        match backend.generate(&p.prompt, p.seed) {
            Err(e) => (Some(e.clone()), rejected(p, provenance, String::new(), format!("backend: {e}"))),
            Ok(raw) => match parse_generation(&raw) {
                Err(e) => (None, rejected(p, provenance, String::new(), format!("unparseable generation: {e}"))),
                Ok(parsed) => {
                    let mut qa_flags = Vec::new();
                    if parsed.unknown_labels > 0 {
                        qa_flags.push(format!("unknown_labels:{}", parsed.unknown_labels));
                    }
                    (
                        None,
                        SyntheticReport {
                            report_id: p.report_id.clone(),
                            index: 0,
                            text: parsed.text,
                            report_offset: 0,
                            gold: parsed.labels,
                            provenance,
                            verdict: None,
                            qa_flags,
                        },
                    )
                }
            },
        }
    });
    let failures: Vec<&String> = outcomes.iter().filter_map(|(e, _)| e.as_ref()).collect();
    if !prompts.is_empty() && failures.len() == prompts.len() {
        return Err(SynthError::Backend(failures[0].clone()));
    }
    if !failures.is_empty() {
        tracing::warn!(failed = failures.len(), "generation backend failed for some prompts");
    }
    Ok(outcomes.into_iter().map(|(_, r)| r).collect())
}
