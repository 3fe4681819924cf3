//! Run the rule baseline over a generated corpus and score it with exact span matching.

use radlabel::corpus::split_corpus;
use radlabel::extractor::BackendDescriptor;
use radlabel::fixtures::generate_reports;
use radlabel::scoring::{evaluate, EvalMode};
use radlabel::EntityType;

fn main() {
    let sentences = split_corpus(&generate_reports(50, 2));
    let backend: BackendDescriptor = "rule:default".parse().unwrap();
    let mut preds = Vec::new();
    for entity in EntityType::ALL {
        preds.extend(backend.build(entity).unwrap().extract(&sentences, entity).unwrap());
    }
    for mode in [EvalMode::PresenceConditioned, EvalMode::Full] {
        let report = evaluate(&preds, &sentences, mode).unwrap();
        println!("{mode:?}: micro F1 {:.3}", report.micro.f1);
        for e in &report.entities {
            println!("  {}\tP {:.3}\tR {:.3}\tF1 {:.3}", e.entity_type, e.metrics.precision, e.metrics.recall, e.metrics.f1);
        }
    }
}
