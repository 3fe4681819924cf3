//! Route fixture reports to accept or review under several threshold policies.

use radlabel::automation::{run_automation, AutomationPolicy};
use radlabel::fixtures::{automation_fixture, AUTOMATION_POLICY_ROWS};

fn main() {
    let fx = automation_fixture();
    let preds = fx.predictions();
    println!("thresholds\tp\taccept\treview\tminutes\treduction");
    for p in [0.90, 0.95] {
        for row in AUTOMATION_POLICY_ROWS {
            let policy = AutomationPolicy::from_array(row, p);
            let r = run_automation(&fx.sentences, &preds, &policy, true).unwrap().report;
            println!(
                "{row:?}\t{p:.2}\t{}\t{}\t{} -> {}\t{:.3}",
                r.accept_count, r.review_count, r.time.baseline_minutes, r.time.with_automation_minutes, r.time.reduction
            );
        }
    }
}
