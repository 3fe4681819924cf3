//! Generate reports, write them as RadGraph JSON, parse them back and split into sentences.

use radlabel::corpus::{corpus_stats, parse_radgraph, reassemble, split_corpus, split_sentences, to_radgraph_json};
use radlabel::fixtures::generate_reports;

fn main() {
    let reports = generate_reports(20, 1);
    let json = serde_json::to_vec(&to_radgraph_json(&reports).unwrap()).unwrap();
    let parsed = parse_radgraph(&json).unwrap();
    let sentences = split_corpus(&parsed);
    println!("{} reports, {} sentences", parsed.len(), sentences.len());

    let first = &parsed[0];
    for s in split_sentences(first) {
        println!("  {}#{} @{}: {:?} ({} spans)", s.report_id, s.index, s.report_offset, s.text, s.gold.len());
    }
    let (text, gold) = reassemble(&split_sentences(first)).unwrap();
    assert_eq!(text, first.text);
    println!("reassembled {} chars and {} spans", text.chars().count(), gold.len());

    let stats = corpus_stats(&parsed);
    for (entity, c) in &stats.by_entity {
        println!("{entity}\tspans={}\tsentences={}", c.spans, c.sentences);
    }
}
