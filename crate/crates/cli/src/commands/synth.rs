use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use radlabel::corpus::{augmentation_plan, mix_datasets, DatasetExample, EntityDataset};
use radlabel::extractor::{RemoteBackend, RemoteConfig};
use radlabel::synth::{
    build_gold_lexicon, dedup_exact, default_stopwords, extract_keywords, generate_batch, judge_corpus, plan_prompts,
    qa_report, DeterministicJudge, Embedder, Exemplar, GenerationConfig, Generator, HashedEmbedder, Judge,
    JudgeContext, KeywordTable, MockGenerator, RemoteEmbedder, RemoteGenerator, RemoteJudge, RetrievalIndex,
    SyntheticReport, VerdictKind, DEFAULT_DIM, DEFAULT_LEXICON_SIZE, DEFAULT_TOP_N, STOPWORD_LIST_ID,
};
use radlabel::text::CueLexicon;
use radlabel::Sentence;
use serde::Serialize;

use super::read_corpus;
use crate::error::CliResult;
use crate::settings::RunConfig;
use crate::stage::Stage;

const REMOTE_TIMEOUT_MS: u64 = 30_000;

pub(crate) fn build_embedder(stage: &Stage, spec: &str) -> CliResult<Box<dyn Embedder>> {
    match spec.split_once(':') {
        None if spec == "hashed" => Ok(Box::new(HashedEmbedder { dim: DEFAULT_DIM })),
        Some(("hashed", dim)) => {
            let dim: usize = dim.parse().map_err(|_| stage.config(format!("embedder {spec:?}: bad dimension")))?;
            if dim == 0 {
                return Err(stage.config("embedder dimension must be positive"));
            }
            Ok(Box::new(HashedEmbedder { dim }))
        }
        Some(("remote", url)) if !url.is_empty() => Ok(Box::new(RemoteEmbedder::new(url, REMOTE_TIMEOUT_MS))),
        _ => Err(stage.config(format!("embedder {spec:?}: expected hashed, hashed:<dim> or remote:<url>"))),
    }
}

fn remote_backend(url: &str) -> RemoteBackend {
    RemoteBackend::new(RemoteConfig::new(url))
}

fn exemplar_pool(sentences: &[Sentence]) -> BTreeMap<String, Exemplar> {
    sentences
        .iter()
        .filter(|s| !s.gold.is_empty())
        .map(|s| {
            let id = s.id().to_string();
            (
                id.clone(),
                Exemplar {
                    id,
                    text: s.text.clone(),
                    labels: s.gold.clone(),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KeywordsArgs {
    #[arg(long, default_value_t = DEFAULT_TOP_N)]
    pub top_n: usize,
}

pub fn keywords(cfg: &RunConfig, args: &KeywordsArgs) -> CliResult<()> {
    let mut st = Stage::new("synth-keywords", cfg);
    let sentences = read_corpus(&mut st)?;
    let texts: Vec<&str> = sentences.iter().map(|s| s.text.as_str()).collect();
    let table = extract_keywords(&texts, args.top_n, &default_stopwords(), STOPWORD_LIST_ID).map_err(|e| st.module(e))?;
    if table.is_empty() {
        tracing::warn!("no keywords survived filtering");
    }
    st.write_json("keywords.json", &table)?;
    st.write("keywords.tsv", table.to_tsv().as_bytes())?;
    st.finish(args)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    /// `keywords.json` from `synth-keywords`.
    #[arg(long)]
    pub keywords: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Exemplars per prompt, 2 or 3.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 20)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3)]
    pub keywords_per_prompt: usize,
    /// `mock` or `remote:<url>`.
    #[arg(long, default_value = "mock")]
    pub generator: String,
    /// `hashed`, `hashed:<dim>` or `remote:<url>`.
    #[arg(long, default_value = "hashed")]
    pub embedder: String,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
}

pub fn generate(cfg: &RunConfig, args: &GenerateArgs) -> CliResult<()> {
    let mut st = Stage::new("synth-generate", cfg);
    let generator: Box<dyn Generator> = match args.generator.split_once(':') {
        None if args.generator == "mock" => Box::new(MockGenerator),
        Some(("remote", url)) if !url.is_empty() => Box::new(RemoteGenerator::new(remote_backend(url))),
        _ => return Err(st.config(format!("generator {:?}: expected mock or remote:<url>", args.generator))),
    };
    let embedder = build_embedder(&st, &args.embedder)?;
    let table: KeywordTable = st.read_json(&args.keywords)?;
    let sentences = read_corpus(&mut st)?;
    let pool = exemplar_pool(&sentences);
    let docs: Vec<(String, String)> = pool.values().map(|e| (e.id.clone(), e.text.clone())).collect();
    let index = RetrievalIndex::build(embedder.as_ref(), &docs).map_err(|e| st.module(e))?;
    let mut gen_cfg = GenerationConfig::new(args.count, st.seed("generate"));
    gen_cfg.batch_size = args.batch_size;
    gen_cfg.keywords_per_prompt = args.keywords_per_prompt;
    gen_cfg.exemplars_per_prompt = args.k;
    gen_cfg.concurrency = args.concurrency;
    let prompts =
        plan_prompts(&table, &index, embedder.as_ref(), &pool, None, &gen_cfg).map_err(|e| st.module(e))?;
    let candidates = generate_batch(generator.as_ref(), &prompts, args.concurrency).map_err(|e| st.module(e))?;
    st.write_jsonl("prompts.jsonl", &prompts)?;
    st.write_jsonl("candidates.jsonl", &candidates)?;
    st.finish(args)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct JudgeArgs {
    /// `candidates.jsonl` from `synth-generate`.
    #[arg(long)]
    pub candidates: PathBuf,
    /// `deterministic` or `remote:<url>`.
    #[arg(long, default_value = "deterministic")]
    pub judge: String,
    #[arg(long, default_value_t = DEFAULT_LEXICON_SIZE)]
    pub lexicon_size: usize,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
}

fn judge_summary(reports: &[SyntheticReport]) -> String {
    let mut verdicts: BTreeMap<String, usize> = BTreeMap::new();
    let mut firings: BTreeMap<(u8, String), usize> = BTreeMap::new();
    for r in reports {
        let kind = match r.verdict.as_ref().map(|v| v.verdict) {
            Some(VerdictKind::Accepted) => "accepted",
            Some(VerdictKind::Corrected) => "corrected",
            Some(VerdictKind::Rejected) => "rejected",
            None => "unjudged",
        };
        *verdicts.entry(kind.to_string()).or_default() += 1;
        for f in r.verdict.iter().flat_map(|v| &v.firings) {
            let action = serde_json::to_value(f.action).expect("action serializes");
            *firings.entry((f.rule, action.as_str().unwrap_or_default().to_string())).or_default() += 1;
        }
    }
    let mut out = String::from("kind\tkey\tcount\n");
    for (k, n) in verdicts {
        out.push_str(&format!("verdict\t{k}\t{n}\n"));
    }
    for ((rule, action), n) in firings {
        out.push_str(&format!("rule_{rule}\t{action}\t{n}\n"));
    }
    out
}

pub fn judge(cfg: &RunConfig, args: &JudgeArgs) -> CliResult<()> {
    let mut st = Stage::new("synth-judge", cfg);
    let candidates: Vec<SyntheticReport> = st.read_jsonl(&args.candidates)?;
    let sentences = read_corpus(&mut st)?;
    let judge: Box<dyn Judge> = match args.judge.split_once(':') {
        None if args.judge == "deterministic" => {
            let lexicon = build_gold_lexicon(&sentences);
            let ctx = JudgeContext::new(&lexicon, args.lexicon_size, CueLexicon::default(), default_stopwords());
            Box::new(DeterministicJudge::new(ctx))
        }
        Some(("remote", url)) if !url.is_empty() => Box::new(RemoteJudge::new(remote_backend(url))),
        _ => return Err(st.config(format!("judge {:?}: expected deterministic or remote:<url>", args.judge))),
    };
    let judged = judge_corpus(judge.as_ref(), &candidates, &exemplar_pool(&sentences), args.concurrency);
    st.write_jsonl("judged.jsonl", &judged)?;
    st.write("judge.tsv", judge_summary(&judged).as_bytes())?;
    st.finish(args)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QaArgs {
    /// `judged.jsonl` from `synth-judge`.
    #[arg(long)]
    pub synthetic: PathBuf,
    #[arg(long, default_value_t = DEFAULT_LEXICON_SIZE)]
    pub lexicon_size: usize,
}

pub fn qa(cfg: &RunConfig, args: &QaArgs) -> CliResult<()> {
    let mut st = Stage::new("synth-qa", cfg);
    let synthetic: Vec<SyntheticReport> = st.read_jsonl(&args.synthetic)?;
    let gold = read_corpus(&mut st)?;
    let (kept, removed) = dedup_exact(synthetic, gold.iter().map(|s| s.text.as_str()));
    let lexicon = build_gold_lexicon(&gold);
    let report = qa_report(&kept, &lexicon, args.lexicon_size, removed);
    let accepted: Vec<SyntheticReport> = kept.into_iter().filter(|r| !r.is_rejected()).collect();
    let as_sentences: Vec<Sentence> = accepted.iter().map(SyntheticReport::to_sentence).collect();
    st.write_json("qa.json", &report)?;
    st.write("qa.tsv", report.to_tsv().as_bytes())?;
    st.write_jsonl("synthetic-final.jsonl", &accepted)?;
    st.write_jsonl("synthetic-sentences.jsonl", &as_sentences)?;
    st.finish(args)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AugmentationArgs {
    /// Gold positive count; taken from `--gold-dataset` when omitted.
    #[arg(long)]
    pub gold: Option<usize>,
    /// Synthetic-to-gold ratios in percent.
    #[arg(long, value_delimiter = ',', default_value = "0,25,50,75,100,125,150")]
    pub ratios: Vec<u32>,
    /// Independently seeded runs per ratio.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    /// Gold dataset file from `build-dataset`; with `--synthetic-dataset`, mixes are written too.
    #[arg(long)]
    pub gold_dataset: Option<PathBuf>,
    #[arg(long)]
    pub synthetic_dataset: Option<PathBuf>,
}

fn load_dataset(st: &mut Stage, path: &std::path::Path) -> CliResult<EntityDataset> {
    let examples: Vec<DatasetExample> = st.read_jsonl(path)?;
    let target = examples
        .first()
        .map(|e| e.target_entity)
        .ok_or_else(|| st.invalid(format!("{}: empty dataset", path.display())))?;
    if examples.iter().any(|e| e.target_entity != target) {
        return Err(st.invalid(format!("{}: mixed target entities", path.display())));
    }
    Ok(EntityDataset::new(target, examples))
}

pub fn augmentation(cfg: &RunConfig, args: &AugmentationArgs) -> CliResult<()> {
    let mut st = Stage::new("augmentation-manifest", cfg);
    if args.seeds == 0 || args.ratios.is_empty() {
        return Err(st.config("--seeds and --ratios must be non-empty"));
    }
    let datasets = match (&args.gold_dataset, &args.synthetic_dataset) {
        (Some(g), Some(s)) => Some((load_dataset(&mut st, g)?, load_dataset(&mut st, s)?)),
        (None, None) => None,
        _ => return Err(st.config("--gold-dataset and --synthetic-dataset go together")),
    };
    let gold_count = match (args.gold, &datasets) {
        (Some(n), Some((g, _))) if n != g.positive_count => {
            return Err(st.config(format!("--gold {n} but the gold dataset has {} positives", g.positive_count)))
        }
        (Some(n), _) => n,
        (None, Some((g, _))) => g.positive_count,
        (None, None) => return Err(st.config("--gold or --gold-dataset is required")),
    };
    let plan = augmentation_plan(gold_count, &args.ratios, args.seeds, st.seed("plan"));
    let mut tsv = String::from("ratio_percent\trun\tgold_count\tsynthetic_count\tseed\n");
    for entry in &plan {
        let stem = format!("augmentation/ratio{:03}-run{}", entry.ratio_percent, entry.run);
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            entry.ratio_percent, entry.run, entry.gold_count, entry.synthetic_count, entry.seed
        ));
        st.write_json(&format!("{stem}.json"), entry)?;
        if let Some((gold, synth)) = &datasets {
            let mixed = mix_datasets(gold, synth, entry.ratio_percent as f64 / 100.0, entry.seed)
                .map_err(|e| st.module(format!("{stem}: {e}")))?;
            st.write_jsonl(&format!("{stem}.jsonl"), &mixed.examples)?;
        }
    }
    st.write("augmentation.tsv", tsv.as_bytes())?;
    st.finish(args)?;
    Ok(())
}
