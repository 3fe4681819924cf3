//! Coherence, cross-set similarity and leakage between real and synthetic text.

use radlabel::corpus::split_corpus;
use radlabel::fixtures::generate_reports;
use radlabel::similarity::{similarity_report, Embedded, DEFAULT_FLAG_THRESHOLD, DEFAULT_K};
use radlabel::synth::HashedEmbedder;

fn embed(embedder: &HashedEmbedder, prefix: &str, texts: &[String]) -> Vec<Embedded> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| Embedded::new(format!("{prefix}{i}"), embedder.embed_one(t)))
        .collect()
}

fn main() {
    let embedder = HashedEmbedder { dim: 256 };
    let real: Vec<String> = split_corpus(&generate_reports(30, 6)).into_iter().map(|s| s.text).collect();
    let mut synthetic: Vec<String> = split_corpus(&generate_reports(30, 7)).into_iter().map(|s| s.text).collect();
    // a verbatim copy of a real sentence should be flagged
    synthetic.push(real[0].clone());
    let report = similarity_report(
        "hashed",
        &embed(&embedder, "syn", &synthetic),
        &embed(&embedder, "real", &real),
        DEFAULT_K,
        DEFAULT_FLAG_THRESHOLD,
    )
    .unwrap();
    println!("coherence real {:.3}", report.internal_coherence_real);
    println!("coherence synthetic {:.3}", report.internal_coherence_synthetic);
    println!("cross-set {:.3}", report.cross_set_similarity);
    for f in report.flagged.iter().take(5) {
        println!("flagged {} ~ {} ({:.3})", f.synthetic_id, f.real_id, f.similarity);
    }
}
