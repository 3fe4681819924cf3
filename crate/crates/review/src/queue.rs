use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use parking_lot::Mutex;
use radlabel::automation::{
    AutomationDecision, AutomationPolicy, AutomationReport, GroupScore, SpanDecision, TimeSavings, Trigger,
    Verdict,
};
use radlabel::confidence::ThresholdRow;
use radlabel::corpus::{find_overlap, reassemble, EntitySpan, EntityType, Sentence, SpanLike};
use radlabel::text::slice_chars;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;

pub const DEFAULT_CLAIM_TTL_MS: u64 = 30 * 60 * 1000;
pub const DEFAULT_SNAPSHOT_EVERY: usize = 500;

const LOG_FILE: &str = "events.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum QueueError {
    #[error("report {0} is not in the queue")]
    NotFound(String),
    #[error("run {0} does not exist")]
    RunNotFound(String),
    #[error("no automation run has been enqueued")]
    NoRuns,
    #[error("run {0} already exists with different inputs")]
    DuplicateRun(String),
    #[error("report {report_id} is already queued by run {run_id}")]
    DuplicateReport { report_id: String, run_id: String },
    #[error("report {report_id}: base version {base} but current version is {current}")]
    VersionConflict { report_id: String, base: u64, current: u64 },
    #[error("report {report_id} is not claimed by {reviewer}")]
    NotClaimed { report_id: String, reviewer: String },
    #[error("{0}")]
    Anchor(String),
    #[error("{0}")]
    Overlap(String),
    #[error("storage: {0}")]
    Storage(String),
}

impl QueueError {
    /// Machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::NotFound(_) | Self::RunNotFound(_) => "not_found",
            Self::NoRuns => "no_runs",
            Self::DuplicateRun(_) => "duplicate_run",
            Self::DuplicateReport { .. } => "duplicate_report",
            Self::VersionConflict { .. } => "version_conflict",
            Self::NotClaimed { .. } => "not_claimed",
            Self::Anchor(_) => "anchor_failure",
            Self::Overlap(_) => "overlap",
            Self::Storage(_) => "storage",
        }
    }
}

fn storage(e: impl std::fmt::Display) -> QueueError {
    QueueError::Storage(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Pending,
    Claimed,
    Completed,
    AutoCompleted,
}

impl FromStr for ItemStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(Self::Pending),
            "claimed" => Ok(Self::Claimed),
            "completed" => Ok(Self::Completed),
            "auto_completed" => Ok(Self::AutoCompleted),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub owner: String,
    pub expires_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub report_id: String,
    pub run_id: String,
    pub text: String,
    pub verdict: Verdict,
    pub trigger: Trigger,
    pub passing_proportion: f64,
    /// Merged predicted spans with their confidence, threshold and pass flag.
    pub spans: Vec<SpanDecision>,
    pub status: ItemStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<Claim>,
    pub version: u64,
    /// Position in the queue; claims take the lowest pending one.
    pub enqueued_seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_spans: Option<Vec<EntitySpan>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_at_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub policy: AutomationPolicy,
    pub reports: usize,
    pub accept_count: usize,
    pub review_count: usize,
    pub time: TimeSavings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted_score: Option<GroupScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_score: Option<GroupScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_table: Option<Vec<ThresholdRow>>,
    pub corpus_hash: String,
    pub predictions_hash: String,
    pub created_at_ms: u64,
    /// Wall time of the automation pass, when the service ran it.
    #[serde(default)]
    pub automation_ms: u64,
}

impl RunRecord {
    pub fn new(
        run_id: impl Into<String>,
        report: &AutomationReport,
        corpus_hash: impl Into<String>,
        predictions_hash: impl Into<String>,
    ) -> Self {
        Self {
            run_id: run_id.into(),
            policy: report.policy.clone(),
            reports: report.reports,
            accept_count: report.accept_count,
            review_count: report.review_count,
            time: report.time,
            accepted_score: report.accepted_score.clone(),
            review_score: report.review_score.clone(),
            threshold_table: None,
            corpus_hash: corpus_hash.into(),
            predictions_hash: predictions_hash.into(),
            created_at_ms: 0,
            automation_ms: 0,
        }
    }

    fn same_inputs(&self, other: &RunRecord) -> bool {
        self.policy == other.policy
            && self.corpus_hash == other.corpus_hash
            && self.predictions_hash == other.predictions_hash
    }
}

/// One entry of the durable log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    RunCreated { run: RunRecord },
    ItemEnqueued { item: ReviewItem },
    Claimed { report_id: String, owner: String, expires_at_ms: u64 },
    Expired { report_id: String },
    Corrected { report_id: String, reviewer: String, spans: Vec<EntitySpan>, at_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LogEntry {
    seq: u64,
    #[serde(flatten)]
    event: Event,
}

/// Everything the event log implies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub runs: BTreeMap<String, RunRecord>,
    pub run_order: Vec<String>,
    pub items: BTreeMap<String, ReviewItem>,
    /// Sequence number of the last applied event.
    pub seq: u64,
}

impl QueueState {
    fn apply(&mut self, seq: u64, event: Event) {
        self.seq = seq;
        match event {
            Event::RunCreated { run } => {
                self.run_order.push(run.run_id.clone());
                self.runs.insert(run.run_id.clone(), run);
            }
            Event::ItemEnqueued { mut item } => {
                item.enqueued_seq = seq;
                self.items.insert(item.report_id.clone(), item);
            }
            Event::Claimed { report_id, owner, expires_at_ms } => {
                if let Some(item) = self.items.get_mut(&report_id) {
                    item.status = ItemStatus::Claimed;
                    item.claim = Some(Claim { owner, expires_at_ms });
                    item.version += 1;
                }
            }
            Event::Expired { report_id } => {
                if let Some(item) = self.items.get_mut(&report_id) {
                    item.status = ItemStatus::Pending;
                    item.claim = None;
                    item.version += 1;
                }
            }
            Event::Corrected { report_id, reviewer, spans, at_ms } => {
                if let Some(item) = self.items.get_mut(&report_id) {
                    item.status = ItemStatus::Completed;
                    item.claim = None;
                    item.final_spans = Some(spans);
                    item.completed_by = Some(reviewer);
                    item.completed_at_ms = Some(at_ms);
                    item.version += 1;
                }
            }
        }
    }

    pub fn latest_run(&self) -> Option<&RunRecord> {
        self.run_order.last().and_then(|id| self.runs.get(id))
    }

    pub fn status_counts(&self, run_id: Option<&str>) -> BTreeMap<ItemStatus, usize> {
        let mut counts: BTreeMap<ItemStatus, usize> = [
            ItemStatus::Pending,
            ItemStatus::Claimed,
            ItemStatus::Completed,
            ItemStatus::AutoCompleted,
        ]
        .into_iter()
        .map(|s| (s, 0))
        .collect();
        for item in self.items.values().filter(|i| run_id.is_none_or(|r| i.run_id == r)) {
            *counts.entry(item.status).or_default() += 1;
        }
        counts
    }
}

/// Dashboard payload for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run_id: String,
    pub reports: usize,
    pub accept_count: usize,
    pub review_count: usize,
    pub pending: usize,
    pub claimed: usize,
    pub completed: usize,
    pub auto_completed: usize,
    /// Completed reviews over routed reports; 1 and flagged when nothing was routed.
    pub progress: f64,
    pub progress_undefined: bool,
    pub minutes_per_report: f64,
    pub time: TimeSavings,
    pub thresholds: BTreeMap<EntityType, f64>,
    pub proportion: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted_score: Option<GroupScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_score: Option<GroupScore>,
}

/// Thresholds in force for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdsView {
    pub run_id: String,
    pub thresholds: BTreeMap<EntityType, f64>,
    pub proportion: f64,
    pub use_calibrated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<ThresholdRow>>,
}

struct EventLog {
    dir: PathBuf,
    file: File,
    fsync: bool,
    snapshot_every: usize,
    since_snapshot: usize,
}

impl EventLog {
    fn append(&mut self, entry: &LogEntry) -> Result<(), QueueError> {
        let mut line = serde_json::to_string(entry).map_err(storage)?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(storage)?;
        if self.fsync {
            self.file.sync_data().map_err(storage)?;
        }
        self.since_snapshot += 1;
        Ok(())
    }

    fn write_snapshot(&mut self, state: &QueueState) -> Result<(), QueueError> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec(state).map_err(storage)?).map_err(storage)?;
        fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE)).map_err(storage)?;
        self.since_snapshot = 0;
        Ok(())
    }
}

struct Inner {
    state: QueueState,
    log: Option<EventLog>,
}

impl Inner {
    fn commit(&mut self, event: Event) -> Result<(), QueueError> {
        let seq = self.state.seq + 1;
        let entry = LogEntry { seq, event };
        if let Some(log) = self.log.as_mut() {
            log.append(&entry)?;
        }
        self.state.apply(seq, entry.event);
        if let Some(log) = self.log.as_mut() {
            if log.snapshot_every > 0 && log.since_snapshot >= log.snapshot_every {
                log.write_snapshot(&self.state)?;
            }
        }
        Ok(())
    }

    fn sweep(&mut self, now_ms: u64) -> Result<(), QueueError> {
        let expired: Vec<String> = self
            .state
            .items
            .values()
            .filter(|i| {
                i.status == ItemStatus::Claimed && i.claim.as_ref().is_some_and(|c| c.expires_at_ms <= now_ms)
            })
            .map(|i| i.report_id.clone())
            .collect();
        for report_id in expired {
            self.commit(Event::Expired { report_id })?;
        }
        Ok(())
    }
}

/// The review queue: a state machine over an append-only event log.
///
/// Every mutation is validated, appended to the log, then applied, all under
/// one lock, so the in-memory state always equals a replay of the log.
pub struct Queue {
    inner: Mutex<Inner>,
    clock: Arc<dyn Clock>,
    claim_ttl_ms: u64,
}

#[derive(Debug, Clone)]
pub struct QueueOptions {
    pub claim_ttl_ms: u64,
    pub snapshot_every: usize,
    pub fsync: bool,
}

impl Default for QueueOptions {
    fn default() -> Self {
        Self {
            claim_ttl_ms: DEFAULT_CLAIM_TTL_MS,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            fsync: true,
        }
    }
}

fn read_log(path: &Path, after: u64, state: &mut QueueState) -> Result<(), QueueError> {
    let Ok(file) = File::open(path) else {
        return Ok(());
    };
    let mut lines = BufReader::new(file).lines().peekable();
    let mut n = 0;
    while let Some(line) = lines.next() {
        n += 1;
        let line = line.map_err(storage)?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry = match serde_json::from_str(&line) {
            Ok(e) => e,
            Err(e) if lines.peek().is_none() => {
                tracing::warn!(line = n, error = %e, "ignoring torn final log line");
                break;
            }
            Err(e) => return Err(QueueError::Storage(format!("{}:{n}: {e}", path.display()))),
        };
        if entry.seq <= after {
            continue;
        }
        if entry.seq != state.seq + 1 {
            return Err(QueueError::Storage(format!(
                "{}:{n}: expected seq {}, found {}",
                path.display(),
                state.seq + 1,
                entry.seq
            )));
        }
        state.apply(entry.seq, entry.event);
    }
    Ok(())
}

/// Rewrite the log without a torn tail so later appends start on a fresh line.
fn trim_torn_tail(path: &Path) -> Result<(), QueueError> {
    let Ok(bytes) = fs::read(path) else {
        return Ok(());
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    fs::write(path, &bytes[..keep]).map_err(storage)
}

impl Queue {
    /// Open or create a queue persisted under `dir`.
    pub fn open(dir: impl AsRef<Path>, clock: Arc<dyn Clock>, options: QueueOptions) -> Result<Self, QueueError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(storage)?;
        let mut state = match fs::read(dir.join(SNAPSHOT_FILE)) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(storage)?,
            Err(_) => QueueState::default(),
        };
        let log_path = dir.join(LOG_FILE);
        let after = state.seq;
        read_log(&log_path, after, &mut state)?;
        trim_torn_tail(&log_path)?;
        let file = OpenOptions::new().create(true).append(true).open(&log_path).map_err(storage)?;
        Ok(Self {
            inner: Mutex::new(Inner {
                state,
                log: Some(EventLog {
                    dir,
                    file,
                    fsync: options.fsync,
                    snapshot_every: options.snapshot_every,
                    since_snapshot: 0,
                }),
            }),
            clock,
            claim_ttl_ms: options.claim_ttl_ms,
        })
    }

    /// A queue without persistence.
    pub fn in_memory(clock: Arc<dyn Clock>, claim_ttl_ms: u64) -> Self {
        Self {
            inner: Mutex::new(Inner {
                state: QueueState::default(),
                log: None,
            }),
            clock,
            claim_ttl_ms,
        }
    }

    /// Record a run and queue its decisions: review verdicts become pending,
    /// accepted reports are stored as auto-completed with their spans.
    ///
    /// Returns `false` when the same run was already enqueued.
    pub fn enqueue_run(
        &self,
        mut run: RunRecord,
        decisions: &[AutomationDecision],
        texts: &HashMap<String, String>,
    ) -> Result<bool, QueueError> {
        let now = self.clock.now_ms();
        let mut inner = self.inner.lock();
        if let Some(existing) = inner.state.runs.get(&run.run_id) {
            return if existing.same_inputs(&run) {
                Ok(false)
            } else {
                Err(QueueError::DuplicateRun(run.run_id))
            };
        }
        for d in decisions {
            if let Some(item) = inner.state.items.get(&d.report_id) {
                return Err(QueueError::DuplicateReport {
                    report_id: d.report_id.clone(),
                    run_id: item.run_id.clone(),
                });
            }
            if !texts.contains_key(&d.report_id) {
                return Err(QueueError::NotFound(d.report_id.clone()));
            }
        }
        if run.created_at_ms == 0 {
            run.created_at_ms = now;
        }
        let run_id = run.run_id.clone();
        inner.commit(Event::RunCreated { run })?;
        for d in decisions {
            let accepted = d.verdict == Verdict::Accept;
            let item = ReviewItem {
                report_id: d.report_id.clone(),
                run_id: run_id.clone(),
                text: texts[&d.report_id].clone(),
                verdict: d.verdict,
                trigger: d.trigger,
                passing_proportion: d.passing_proportion,
                spans: d.spans.clone(),
                status: if accepted {
                    ItemStatus::AutoCompleted
                } else {
                    ItemStatus::Pending
                },
                claim: None,
                version: 1,
                enqueued_seq: 0,
                final_spans: accepted.then(|| d.entity_spans()),
                completed_by: None,
                completed_at_ms: accepted.then_some(now),
            };
            inner.commit(Event::ItemEnqueued { item })?;
        }
        Ok(true)
    }

    /// Claim the oldest pending item; a reviewer holding a live claim gets that item back.
    pub fn claim(&self, reviewer: &str) -> Result<Option<ReviewItem>, QueueError> {
        let now = self.clock.now_ms();
        let mut inner = self.inner.lock();
        inner.sweep(now)?;
        if let Some(held) = inner
            .state
            .items
            .values()
            .find(|i| i.status == ItemStatus::Claimed && i.claim.as_ref().is_some_and(|c| c.owner == reviewer))
        {
            return Ok(Some(held.clone()));
        }
        let Some(report_id) = inner
            .state
            .items
            .values()
            .filter(|i| i.status == ItemStatus::Pending)
            .min_by_key(|i| i.enqueued_seq)
            .map(|i| i.report_id.clone())
        else {
            return Ok(None);
        };
        inner.commit(Event::Claimed {
            report_id: report_id.clone(),
            owner: reviewer.to_string(),
            expires_at_ms: now + self.claim_ttl_ms,
        })?;
        Ok(inner.state.items.get(&report_id).cloned())
    }

    /// Complete a claimed item with the reviewer's final spans.
    ///
    /// Checks, in order: the item and its run exist, `base_version` is current,
    /// the caller holds the claim, every span anchors, and no two overlap.
    pub fn submit(
        &self,
        report_id: &str,
        reviewer: &str,
        base_version: u64,
        mut spans: Vec<EntitySpan>,
    ) -> Result<ReviewItem, QueueError> {
        let now = self.clock.now_ms();
        let mut inner = self.inner.lock();
        inner.sweep(now)?;
        let item = inner
            .state
            .items
            .get(report_id)
            .ok_or_else(|| QueueError::NotFound(report_id.to_string()))?;
        if !inner.state.runs.contains_key(&item.run_id) {
            return Err(QueueError::RunNotFound(item.run_id.clone()));
        }
        if item.version != base_version {
            return Err(QueueError::VersionConflict {
                report_id: report_id.to_string(),
                base: base_version,
                current: item.version,
            });
        }
        let holds = item.status == ItemStatus::Claimed && item.claim.as_ref().is_some_and(|c| c.owner == reviewer);
        if !holds {
            return Err(QueueError::NotClaimed {
                report_id: report_id.to_string(),
                reviewer: reviewer.to_string(),
            });
        }
        for (i, s) in spans.iter().enumerate() {
            if !s.anchors_in(&item.text) {
                let found = slice_chars(&item.text, s.start, s.end).unwrap_or("<out of range>");
                return Err(QueueError::Anchor(format!(
                    "span {i} ({} {:?}) at {}..{} covers {found:?}",
                    s.entity_type, s.value, s.start, s.end
                )));
            }
        }
        if let Some((a, b)) = find_overlap(&spans) {
            return Err(QueueError::Overlap(format!(
                "span {a} ({}..{}) overlaps span {b} ({}..{})",
                spans[a].start, spans[a].end, spans[b].start, spans[b].end
            )));
        }
        spans.sort_by_key(|s| (s.start, s.end));
        inner.commit(Event::Corrected {
            report_id: report_id.to_string(),
            reviewer: reviewer.to_string(),
            spans,
            at_ms: now,
        })?;
        Ok(inner.state.items[report_id].clone())
    }

    /// Expire overdue claims, then copy the state.
    pub fn snapshot(&self) -> Result<QueueState, QueueError> {
        let now = self.clock.now_ms();
        let mut inner = self.inner.lock();
        inner.sweep(now)?;
        Ok(inner.state.clone())
    }

    pub fn item(&self, report_id: &str) -> Result<ReviewItem, QueueError> {
        self.snapshot()?
            .items
            .remove(report_id)
            .ok_or_else(|| QueueError::NotFound(report_id.to_string()))
    }

    /// Items in queue order, optionally filtered by status.
    pub fn list(&self, status: Option<ItemStatus>) -> Result<Vec<ReviewItem>, QueueError> {
        let mut items: Vec<ReviewItem> = self
            .snapshot()?
            .items
            .into_values()
            .filter(|i| status.is_none_or(|s| i.status == s))
            .collect();
        items.sort_by_key(|i| i.enqueued_seq);
        Ok(items)
    }

    pub fn run(&self, run_id: &str) -> Result<RunRecord, QueueError> {
        self.inner
            .lock()
            .state
            .runs
            .get(run_id)
            .cloned()
            .ok_or_else(|| QueueError::RunNotFound(run_id.to_string()))
    }

    fn pick_run<'a>(state: &'a QueueState, run_id: Option<&str>) -> Result<&'a RunRecord, QueueError> {
        match run_id {
            Some(id) => state.runs.get(id).ok_or_else(|| QueueError::RunNotFound(id.to_string())),
            None => state.latest_run().ok_or(QueueError::NoRuns),
        }
    }

    /// Dashboard figures for `run_id`, or the latest run.
    pub fn summary(&self, run_id: Option<&str>) -> Result<Summary, QueueError> {
        let state = self.snapshot()?;
        let run = Self::pick_run(&state, run_id)?;
        let counts = state.status_counts(Some(&run.run_id));
        let completed = counts[&ItemStatus::Completed];
        Ok(Summary {
            run_id: run.run_id.clone(),
            reports: run.reports,
            accept_count: run.accept_count,
            review_count: run.review_count,
            pending: counts[&ItemStatus::Pending],
            claimed: counts[&ItemStatus::Claimed],
            completed,
            auto_completed: counts[&ItemStatus::AutoCompleted],
            progress: if run.review_count == 0 {
                1.0
            } else {
                completed as f64 / run.review_count as f64
            },
            progress_undefined: run.review_count == 0,
            minutes_per_report: run.policy.minutes_per_report,
            time: run.time,
            thresholds: EntityType::ALL.iter().map(|t| (*t, run.policy.threshold(*t))).collect(),
            proportion: run.policy.proportion,
            accepted_score: run.accepted_score.clone(),
            review_score: run.review_score.clone(),
        })
    }

    pub fn thresholds(&self, run_id: Option<&str>) -> Result<ThresholdsView, QueueError> {
        let inner = self.inner.lock();
        let run = Self::pick_run(&inner.state, run_id)?;
        Ok(ThresholdsView {
            run_id: run.run_id.clone(),
            thresholds: EntityType::ALL.iter().map(|t| (*t, run.policy.threshold(*t))).collect(),
            proportion: run.policy.proportion,
            use_calibrated: run.policy.use_calibrated,
            table: run.threshold_table.clone(),
        })
    }
}

/// Full report text per report id, rebuilt from its sentences.
pub fn report_texts(sentences: &[Sentence]) -> Result<HashMap<String, String>, QueueError> {
    let mut groups: HashMap<&str, Vec<Sentence>> = HashMap::new();
    for s in sentences {
        groups.entry(&s.report_id).or_default().push(s.clone());
    }
    groups
        .into_iter()
        .map(|(id, group)| {
            reassemble(&group)
                .map(|(text, _)| (id.to_string(), text))
                .map_err(|e| QueueError::Storage(e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use radlabel::automation::time_savings;

    fn decision(id: &str, verdict: Verdict) -> AutomationDecision {
        AutomationDecision {
            report_id: id.into(),
            verdict,
            passing_proportion: 1.0,
            trigger: Trigger::Proportion,
            spans: vec![SpanDecision {
                entity_type: EntityType::ObsDa,
                value: "effusion".into(),
                start: 3,
                end: 11,
                score: 0.9,
                threshold: 0.5,
                passed: true,
            }],
        }
    }

    fn run_record(id: &str, accept: usize, review: usize) -> RunRecord {
        RunRecord {
            run_id: id.into(),
            policy: AutomationPolicy::from_array([0.0; 4], 0.9),
            reports: accept + review,
            accept_count: accept,
            review_count: review,
            time: time_savings(accept, review, 2.0),
            accepted_score: None,
            review_score: None,
            threshold_table: None,
            corpus_hash: "c".into(),
            predictions_hash: "p".into(),
            created_at_ms: 0,
            automation_ms: 0,
        }
    }

    fn seeded(queue: &Queue) {
        let decisions: Vec<AutomationDecision> = ["a", "b", "c", "d", "e"]
            .iter()
            .enumerate()
            .map(|(i, id)| decision(id, if i < 3 { Verdict::Review } else { Verdict::Accept }))
            .collect();
        let texts = decisions.iter().map(|d| (d.report_id.clone(), "No effusion.".to_string())).collect();
        assert!(queue.enqueue_run(run_record("r1", 2, 3), &decisions, &texts).unwrap());
    }

    #[test]
    fn enqueue_splits_review_and_accept_and_is_idempotent() {
        let q = Queue::in_memory(Arc::new(ManualClock::new(0)), 1000);
        seeded(&q);
        let counts = q.snapshot().unwrap().status_counts(None);
        assert_eq!(counts[&ItemStatus::Pending], 3);
        assert_eq!(counts[&ItemStatus::AutoCompleted], 2);
        let texts: HashMap<String, String> = HashMap::new();
        assert!(!q.enqueue_run(run_record("r1", 2, 3), &[], &texts).unwrap());
        assert_eq!(q.list(None).unwrap().len(), 5);
        let mut other = run_record("r1", 2, 3);
        other.corpus_hash = "different".into();
        assert_eq!(q.enqueue_run(other, &[], &texts).unwrap_err().code(), "duplicate_run");
    }

    #[test]
    fn claims_expire_back_to_pending() {
        let clock = ManualClock::new(0);
        let q = Queue::in_memory(Arc::new(clock.clone()), 1000);
        seeded(&q);
        let first = q.claim("alice").unwrap().unwrap();
        assert_eq!(first.report_id, "a");
        assert_eq!(q.claim("alice").unwrap().unwrap().report_id, "a");
        assert_eq!(q.claim("bob").unwrap().unwrap().report_id, "b");
        clock.advance(1000);
        assert_eq!(q.claim("carol").unwrap().unwrap().report_id, "a");
        let a = q.item("a").unwrap();
        assert_eq!(a.version, 4);
        assert_eq!(a.claim.unwrap().owner, "carol");
    }

    #[test]
    fn submit_checks_version_owner_and_spans() {
        let q = Queue::in_memory(Arc::new(ManualClock::new(0)), 1000);
        seeded(&q);
        let item = q.claim("alice").unwrap().unwrap();
        let good = vec![EntitySpan::new(EntityType::ObsDa, "effusion", 3, 11)];
        let err = q.submit("a", "alice", item.version - 1, good.clone()).unwrap_err();
        assert_eq!(err.code(), "version_conflict");
        assert_eq!(q.submit("a", "bob", item.version, good.clone()).unwrap_err().code(), "not_claimed");
        let bad = vec![EntitySpan::new(EntityType::ObsDa, "effusion", 2, 10)];
        let err = q.submit("a", "alice", item.version, bad).unwrap_err();
        assert_eq!(err.code(), "anchor_failure");
        assert!(err.to_string().contains("2..10"));
        let overlapping = vec![good[0].clone(), EntitySpan::new(EntityType::ObsDp, "effusion.", 3, 12)];
        assert_eq!(q.submit("a", "alice", item.version, overlapping).unwrap_err().code(), "overlap");
        assert_eq!(q.item("a").unwrap(), item);
        let done = q.submit("a", "alice", item.version, good).unwrap();
        assert_eq!(done.status, ItemStatus::Completed);
        assert_eq!(done.version, item.version + 1);
        assert_eq!(q.submit("zzz", "alice", 1, vec![]).unwrap_err().code(), "not_found");
    }

    #[test]
    fn summary_tracks_progress() {
        let q = Queue::in_memory(Arc::new(ManualClock::new(0)), 1000);
        assert_eq!(q.summary(None).unwrap_err().code(), "no_runs");
        seeded(&q);
        let s = q.summary(None).unwrap();
        assert_eq!((s.pending, s.auto_completed, s.progress), (3, 2, 0.0));
        for r in ["r", "s", "t"] {
            let it = q.claim(r).unwrap().unwrap();
            q.submit(&it.report_id, r, it.version, vec![]).unwrap();
        }
        let s = q.summary(Some("r1")).unwrap();
        assert_eq!((s.completed, s.progress), (3, 1.0));
        assert_eq!(s.pending + s.claimed + s.completed + s.auto_completed, s.reports);
    }
}
