//! Per-entity datasets and the synthetic mixing plan over ratios and seeds.

use radlabel::corpus::{augmentation_plan, build_entity_dataset, mix_datasets, split_corpus};
use radlabel::fixtures::generate_reports;
use radlabel::EntityType;

fn main() {
    let gold = build_entity_dataset(&split_corpus(&generate_reports(40, 8)), EntityType::ObsDp, true);
    let synthetic = build_entity_dataset(&split_corpus(&generate_reports(80, 9)), EntityType::ObsDp, false);
    println!("gold: {} positive, {} negative", gold.positive_count, gold.negative_count);
    for entry in augmentation_plan(gold.positive_count, &[0, 50, 100, 150], 2, 10) {
        let mixed = mix_datasets(&gold, &synthetic, f64::from(entry.ratio_percent) / 100.0, entry.seed).unwrap();
        println!(
            "ratio {:>3}% run {}: +{} synthetic, {} examples",
            entry.ratio_percent,
            entry.run,
            entry.synthetic_count,
            mixed.examples.len()
        );
    }
}
