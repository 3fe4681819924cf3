//! Review queue and HTTP service for reports routed to manual annotation.
//!
//! The queue is an append-only event log (`events.jsonl`) plus a periodic
//! snapshot; reopening a data directory replays both. [`api::router`] exposes
//! the queue over JSON with bearer-token auth.

pub mod api;
pub mod clock;
pub mod config;
pub mod queue;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use radlabel::automation::{run_automation, AutomationDecision, AutomationPolicy};
use radlabel::confidence::ThresholdTable;
use radlabel::io::read_jsonl;
use radlabel::{Sentence, SentencePrediction};
use sha2::{Digest, Sha256};

pub use api::{router, serve, serve_blocking, AppState};
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::ServiceConfig;
pub use queue::{
    report_texts, Event, ItemStatus, Queue, QueueError, QueueOptions, QueueState, ReviewItem, RunRecord, Summary,
    ThresholdsView,
};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files and policy for one automation run.
#[derive(Debug, Clone)]
pub struct RunInputs {
    pub sentences: PathBuf,
    pub predictions: Vec<PathBuf>,
    pub policy: AutomationPolicy,
    pub threshold_table: Option<PathBuf>,
    /// Derived from the input hashes and policy when absent.
    pub run_id: Option<String>,
    pub with_gold: bool,
}

/// Everything [`Queue::enqueue_run`] needs.
pub struct PreparedRun {
    pub record: RunRecord,
    pub decisions: Vec<AutomationDecision>,
    pub texts: HashMap<String, String>,
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

/// Identifier that changes whenever the inputs or the policy change.
pub fn derive_run_id(policy: &AutomationPolicy, corpus_hash: &str, predictions_hash: &str) -> String {
    let policy = serde_json::to_string(policy).expect("policy serializes");
    let digest = sha256_hex(format!("{corpus_hash}\n{predictions_hash}\n{policy}").as_bytes());
    format!("run-{}", &digest[..16])
}

/// Load inputs, run automation and package the result for the queue.
pub fn prepare_run(inputs: &RunInputs) -> Result<PreparedRun, String> {
    let started = Instant::now();
    let corpus_hash = sha256_hex(&read(&inputs.sentences)?);
    let sentences: Vec<Sentence> = read_jsonl(&inputs.sentences).map_err(|e| e.to_string())?;
    let mut predictions: Vec<SentencePrediction> = Vec::new();
    let mut pred_hashes = Vec::new();
    for p in &inputs.predictions {
        pred_hashes.push(sha256_hex(&read(p)?));
        predictions.extend(read_jsonl::<SentencePrediction>(p).map_err(|e| e.to_string())?);
    }
    let predictions_hash = sha256_hex(pred_hashes.join("\n").as_bytes());
    let table = match &inputs.threshold_table {
        Some(p) => Some(
            serde_json::from_slice::<ThresholdTable>(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?,
        ),
        None => None,
    };
    let run = run_automation(&sentences, &predictions, &inputs.policy, inputs.with_gold).map_err(|e| e.to_string())?;
    let run_id = inputs
        .run_id
        .clone()
        .unwrap_or_else(|| derive_run_id(&inputs.policy, &corpus_hash, &predictions_hash));
    let mut record = RunRecord::new(run_id, &run.report, corpus_hash, predictions_hash);
    record.threshold_table = table.map(|t| t.rows);
    record.automation_ms = started.elapsed().as_millis() as u64;
    Ok(PreparedRun {
        texts: report_texts(&sentences).map_err(|e| e.to_string())?,
        record,
        decisions: run.decisions,
    })
}
