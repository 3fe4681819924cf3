//! Sweep confidence thresholds and pick the lowest one meeting each target score.

use radlabel::confidence::{discover_thresholds, DEFAULT_TARGETS};
use radlabel::fixtures::automation_fixture;

fn main() {
    let fx = automation_fixture();
    let table = discover_thresholds(&fx.predictions(), &fx.sentences, &DEFAULT_TARGETS, false).unwrap();
    print!("{}", table.table_tsv());
    for target in DEFAULT_TARGETS {
        println!("target {target:.2}: {:?}", table.thresholds_for(target));
    }
}
