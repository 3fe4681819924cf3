//! Load an automation run into a queue, claim items and submit corrections.

use std::sync::Arc;

use radlabel::automation::{run_automation, AutomationPolicy};
use radlabel::EntitySpan;
use radlabel::fixtures::{automation_fixture, AUTOMATION_POLICY_ROWS};
use radlabel_review::{report_texts, ManualClock, Queue, RunRecord};

fn main() {
    let fx = automation_fixture();
    let policy = AutomationPolicy::from_array(AUTOMATION_POLICY_ROWS[2], 0.95);
    let run = run_automation(&fx.sentences, &fx.predictions(), &policy, true).unwrap();

    let clock = ManualClock::new(0);
    let queue = Queue::in_memory(Arc::new(clock.clone()), 60_000);
    let record = RunRecord::new("demo", &run.report, "corpus", "predictions");
    queue.enqueue_run(record, &run.decisions, &report_texts(&fx.sentences).unwrap()).unwrap();

    // alice accepts the predicted spans as they are
    let item = queue.claim("alice").unwrap().unwrap();
    let spans = item.spans.iter().map(|s| EntitySpan::new(s.entity_type, s.value.clone(), s.start, s.end)).collect();
    let done = queue.submit(&item.report_id, "alice", item.version, spans).unwrap();
    println!("{} corrected by alice, version {}", done.report_id, done.version);

    // bob's claim lapses and he loses the item
    let item = queue.claim("bob").unwrap().unwrap();
    clock.advance(60_000);
    let err = queue.submit(&item.report_id, "bob", item.version, vec![]).unwrap_err();
    println!("late submit for {}: {}", item.report_id, err.code());

    let s = queue.summary(None).unwrap();
    println!(
        "accepted {} / review {}; pending {}, completed {}; progress {:.3}",
        s.accept_count, s.review_count, s.pending, s.completed, s.progress
    );
    println!("minutes {} -> {}", s.time.baseline_minutes, s.time.with_automation_minutes);
}
