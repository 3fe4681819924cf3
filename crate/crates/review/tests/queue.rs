use std::collections::HashSet;
use std::sync::{Arc, Barrier};
use std::thread;

use radlabel::automation::{run_automation, AutomationDecision, AutomationPolicy, Trigger, Verdict};
use radlabel::fixtures::{automation_fixture, AUTOMATION_POLICY_ROWS};
use radlabel_review::{report_texts, ItemStatus, ManualClock, Queue, QueueOptions, RunRecord};

fn fixture_run(queue: &Queue, row: usize, p: f64) -> RunRecord {
    let fx = automation_fixture();
    let policy = AutomationPolicy::from_array(AUTOMATION_POLICY_ROWS[row], p);
    let run = run_automation(&fx.sentences, &fx.predictions(), &policy, true).unwrap();
    let record = RunRecord::new(format!("row{row}"), &run.report, "corpus", "preds");
    let texts = report_texts(&fx.sentences).unwrap();
    queue.enqueue_run(record.clone(), &run.decisions, &texts).unwrap();
    record
}

fn synthetic_run(queue: &Queue, n: usize) {
    let decisions: Vec<AutomationDecision> = (0..n)
        .map(|i| AutomationDecision {
            report_id: format!("r{i:03}"),
            verdict: Verdict::Review,
            passing_proportion: 0.5,
            trigger: Trigger::Proportion,
            spans: vec![],
        })
        .collect();
    let texts = decisions.iter().map(|d| (d.report_id.clone(), "Heart size normal.".to_string())).collect();
    let fx_policy = AutomationPolicy::from_array([0.5; 4], 0.9);
    let report = run_automation(&[], &[], &fx_policy, false).unwrap().report;
    let mut record = RunRecord::new("synthetic", &report, "c", "p");
    record.reports = n;
    record.review_count = n;
    queue.enqueue_run(record, &decisions, &texts).unwrap();
}

#[test]
fn fixture_run_fills_queue_and_summary() {
    let queue = Queue::in_memory(Arc::new(ManualClock::new(0)), 60_000);
    fixture_run(&queue, 2, 0.95);
    let s = queue.summary(None).unwrap();
    assert_eq!((s.accept_count, s.review_count), (140, 115));
    assert_eq!((s.pending, s.auto_completed), (115, 140));
    assert_eq!(s.time.baseline_minutes, 510.0);
    assert_eq!(s.time.with_automation_minutes, 230.0);
    assert!((s.time.reduction - 280.0 / 510.0).abs() < 1e-12);
    let accepted = queue.list(Some(ItemStatus::AutoCompleted)).unwrap();
    assert!(accepted.iter().all(|i| i.final_spans.is_some()));
}

#[test]
fn hundred_concurrent_claims_are_a_bijection() {
    let queue = Arc::new(Queue::in_memory(Arc::new(ManualClock::new(0)), 60_000));
    synthetic_run(&queue, 100);
    let barrier = Arc::new(Barrier::new(100));
    let handles: Vec<_> = (0..100)
        .map(|i| {
            let (queue, barrier) = (queue.clone(), barrier.clone());
            thread::spawn(move || {
                barrier.wait();
                queue.claim(&format!("reviewer{i}")).unwrap().unwrap().report_id
            })
        })
        .collect();
    let claimed: HashSet<String> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(claimed.len(), 100);
    assert!(queue.claim("late").unwrap().is_none());
    for item in queue.list(None).unwrap() {
        assert_eq!(item.status, ItemStatus::Claimed);
    }
}

#[test]
fn racing_submissions_on_one_version_yield_one_success() {
    let queue = Arc::new(Queue::in_memory(Arc::new(ManualClock::new(0)), 60_000));
    synthetic_run(&queue, 1);
    let item = queue.claim("alice").unwrap().unwrap();
    let barrier = Arc::new(Barrier::new(8));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let (queue, barrier, id) = (queue.clone(), barrier.clone(), item.report_id.clone());
            thread::spawn(move || {
                barrier.wait();
                queue.submit(&id, "alice", item.version, vec![])
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    for r in results.iter().filter_map(|r| r.as_ref().err()) {
        assert_eq!(r.code(), "version_conflict");
    }
}

#[test]
fn reopening_replays_to_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let clock = ManualClock::new(1_000);
    let opts = QueueOptions {
        claim_ttl_ms: 5_000,
        snapshot_every: 7,
        fsync: false,
    };
    let before = {
        let queue = Queue::open(dir.path(), Arc::new(clock.clone()), opts.clone()).unwrap();
        fixture_run(&queue, 0, 0.9);
        for r in 0..5 {
            let item = queue.claim(&format!("r{r}")).unwrap().unwrap();
            if r % 2 == 0 {
                queue.submit(&item.report_id, &format!("r{r}"), item.version, vec![]).unwrap();
            }
        }
        clock.advance(6_000);
        queue.snapshot().unwrap()
    };
    assert!(dir.path().join("snapshot.json").exists());
    let reopened = Queue::open(dir.path(), Arc::new(clock.clone()), opts.clone()).unwrap();
    assert_eq!(reopened.snapshot().unwrap(), before);
    let counts = before.status_counts(None);
    assert_eq!(counts[&ItemStatus::Claimed], 0);
    assert_eq!(counts[&ItemStatus::Completed], 3);

    std::fs::remove_file(dir.path().join("snapshot.json")).unwrap();
    let from_log = Queue::open(dir.path(), Arc::new(clock), opts).unwrap();
    assert_eq!(from_log.snapshot().unwrap(), before);
}

#[test]
fn torn_final_log_line_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(0));
    let opts = QueueOptions {
        snapshot_every: 0,
        fsync: false,
        ..QueueOptions::default()
    };
    let before = {
        let queue = Queue::open(dir.path(), clock.clone(), opts.clone()).unwrap();
        synthetic_run(&queue, 3);
        queue.snapshot().unwrap()
    };
    let log = dir.path().join("events.jsonl");
    let mut bytes = std::fs::read(&log).unwrap();
    bytes.extend_from_slice(b"{\"seq\":5,\"event\":\"clai");
    std::fs::write(&log, bytes).unwrap();
    let queue = Queue::open(dir.path(), clock.clone(), opts.clone()).unwrap();
    assert_eq!(queue.snapshot().unwrap(), before);
    queue.claim("bob").unwrap().unwrap();
    let after = queue.snapshot().unwrap();
    drop(queue);
    assert_eq!(Queue::open(dir.path(), clock, opts).unwrap().snapshot().unwrap(), after);
}

#[test]
fn expired_claim_cannot_be_submitted() {
    let clock = ManualClock::new(0);
    let queue = Queue::in_memory(Arc::new(clock.clone()), 1_000);
    synthetic_run(&queue, 1);
    let item = queue.claim("alice").unwrap().unwrap();
    clock.advance(1_000);
    let err = queue.submit(&item.report_id, "alice", item.version, vec![]).unwrap_err();
    assert_eq!(err.code(), "version_conflict");
    let current = queue.item(&item.report_id).unwrap();
    assert_eq!(current.status, ItemStatus::Pending);
    let err = queue.submit(&item.report_id, "alice", current.version, vec![]).unwrap_err();
    assert_eq!(err.code(), "not_claimed");
}
