//! Serve a queue seeded with the automation fixture.
//!
//! ```text
//! cargo run -p radlabel-review --example serve_fixture
//! curl -H 'Authorization: Bearer demo-token' localhost:8080/api/summary
//! ```

use std::sync::Arc;

use radlabel::automation::{run_automation, AutomationPolicy};
use radlabel::fixtures::{automation_fixture, AUTOMATION_POLICY_ROWS};
use radlabel_review::{report_texts, serve_blocking, Queue, RunRecord, ServiceConfig, SystemClock};

fn main() {
    let config = ServiceConfig {
        data_dir: std::env::temp_dir().join("radlabel-serve-fixture"),
        tokens: vec!["demo-token".into()],
        ..ServiceConfig::default()
    };
    {
        let queue = Queue::open(&config.data_dir, Arc::new(SystemClock), config.queue_options()).unwrap();
        let fx = automation_fixture();
        let policy = AutomationPolicy::from_array(AUTOMATION_POLICY_ROWS[2], 0.95);
        let run = run_automation(&fx.sentences, &fx.predictions(), &policy, true).unwrap();
        let record = RunRecord::new("fixture", &run.report, "fixture", "fixture");
        let created = queue.enqueue_run(record, &run.decisions, &report_texts(&fx.sentences).unwrap()).unwrap();
        println!("run fixture {}", if created { "loaded" } else { "already present" });
    }
    println!("listening on {}:{} (data in {})", config.bind, config.port, config.data_dir.display());
    serve_blocking(config).unwrap();
}
