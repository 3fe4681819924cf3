//! Keywords, retrieval-grounded prompts, mock generation, judging and QA.

use std::collections::BTreeMap;

use radlabel::corpus::split_corpus;
use radlabel::fixtures::generate_reports;
use radlabel::synth::{
    build_gold_lexicon, dedup_exact, default_stopwords, extract_keywords, generate_batch, judge_corpus, plan_prompts,
    qa_report, DeterministicJudge, Exemplar, GenerationConfig, HashedEmbedder, JudgeContext, MockGenerator,
    RetrievalIndex, STOPWORD_LIST_ID,
};
use radlabel::text::CueLexicon;

fn main() {
    let gold = split_corpus(&generate_reports(40, 4));
    let texts: Vec<&str> = gold.iter().map(|s| s.text.as_str()).collect();
    let keywords = extract_keywords(&texts, 30, &default_stopwords(), STOPWORD_LIST_ID).unwrap();
    println!("top keywords: {:?}", &keywords.words()[..5]);

    let pool: BTreeMap<String, Exemplar> = gold
        .iter()
        .filter(|s| !s.gold.is_empty())
        .map(|s| {
            let id = s.id().to_string();
            (id.clone(), Exemplar { id, text: s.text.clone(), labels: s.gold.clone() })
        })
        .collect();
    let embedder = HashedEmbedder { dim: 128 };
    let docs: Vec<(String, String)> = pool.values().map(|e| (e.id.clone(), e.text.clone())).collect();
    let index = RetrievalIndex::build(&embedder, &docs).unwrap();
    let prompts = plan_prompts(&keywords, &index, &embedder, &pool, None, &GenerationConfig::new(20, 5)).unwrap();
    let candidates = generate_batch(&MockGenerator, &prompts, 4).unwrap();

    let lexicon = build_gold_lexicon(&gold);
    let judge = DeterministicJudge::new(JudgeContext::new(&lexicon, 500, CueLexicon::default(), default_stopwords()));
    let judged = judge_corpus(&judge, &candidates, &pool, 4);
    for r in judged.iter().take(3) {
        println!("{}: {:?} {:?}", r.report_id, r.text, r.verdict.as_ref().map(|v| v.verdict));
    }
    let (kept, removed) = dedup_exact(judged, texts.iter().copied());
    print!("{}", qa_report(&kept, &lexicon, 500, removed).to_tsv());
}
