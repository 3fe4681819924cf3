use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use radlabel::automation::{
    remap_predictions, run_automation, sentences_as_reports, AutomationDecision, AutomationPolicy, AutomationReport,
};
use radlabel::confidence::ThresholdTable;
use radlabel::SentencePrediction;
use radlabel_review::{derive_run_id, report_texts, Queue, RunRecord, ServiceConfig, SystemClock};
use serde::Serialize;
use serde_json::json;

use super::{read_corpus, read_sentences, require_paths, resolve_thresholds};
use crate::error::CliResult;
use crate::settings::RunConfig;
use crate::stage::{sha256_hex, Stage};

pub const DEFAULT_PROPORTION: f64 = 0.95;

#[derive(Debug, Clone, Args, Serialize)]
pub struct AutomateArgs {
    #[arg(long = "predictions", required = true)]
    pub predictions: Vec<PathBuf>,
    /// Target level read from a threshold table given with `--thresholds`.
    #[arg(long, default_value_t = 0.95)]
    pub target: f64,
    #[arg(long, default_value_t = 2.0)]
    pub minutes_per_report: f64,
    /// Let reports with OBS-U spans be accepted.
    #[arg(long)]
    pub no_obs_u_override: bool,
    /// Gate on calibrated confidences where present.
    #[arg(long)]
    pub use_calibrated: bool,
    /// Route each sentence on its own instead of whole reports.
    #[arg(long)]
    pub per_sentence: bool,
    /// Skip scoring the accepted and review groups against gold.
    #[arg(long)]
    pub no_gold: bool,
}

pub fn automate(cfg: &RunConfig, args: &AutomateArgs) -> CliResult<()> {
    let mut st = Stage::new("automate", cfg);
    require_paths(&st, "predictions", &args.predictions)?;
    let spec = cfg.thresholds.clone().ok_or_else(|| st.config("--thresholds is required"))?;
    let mut policy = AutomationPolicy::new(
        resolve_thresholds(&mut st, &spec, args.target)?,
        cfg.proportion.unwrap_or(DEFAULT_PROPORTION),
    );
    policy.minutes_per_report = args.minutes_per_report;
    policy.obs_u_force_review = !args.no_obs_u_override;
    policy.use_calibrated = args.use_calibrated;
    policy.validate().map_err(|e| st.config(e))?;
    let mut sentences = read_corpus(&mut st)?;
    let mut preds: Vec<SentencePrediction> = st.read_jsonl_all(&args.predictions)?;
    let known: HashSet<_> = sentences.iter().map(|s| s.id()).collect();
    let before = preds.len();
    preds.retain(|p| known.contains(&p.sentence_id));
    if preds.len() < before {
        tracing::info!(dropped = before - preds.len(), "predictions outside the corpus ignored");
    }
    if args.per_sentence {
        let (units, remap) = sentences_as_reports(&sentences);
        preds = remap_predictions(&preds, &remap);
        sentences = units;
    }
    let run = run_automation(&sentences, &preds, &policy, !args.no_gold).map_err(|e| st.module(e))?;
    st.write_jsonl("decisions.jsonl", &run.decisions)?;
    st.write_jsonl("merged.jsonl", &run.merged)?;
    st.write_json("automation.json", &run.report)?;
    let tsv = format!("{}{}", AutomationReport::TSV_HEADER, run.report.tsv_row());
    st.write("automation.tsv", tsv.as_bytes())?;
    st.finish(args)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnqueueArgs {
    /// `decisions.jsonl` from `automate`.
    #[arg(long)]
    pub decisions: PathBuf,
    /// `automation.json` from `automate`.
    #[arg(long)]
    pub report: PathBuf,
    /// Threshold table to show reviewers alongside the run.
    #[arg(long)]
    pub threshold_table: Option<PathBuf>,
    /// Queue directory; defaults to the configured service data directory.
    #[arg(long, env = "RADLABEL_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Defaults to a hash of the inputs and policy.
    #[arg(long)]
    pub run_id: Option<String>,
    /// The decisions were made with `automate --per-sentence`.
    #[arg(long)]
    pub per_sentence: bool,
}

pub fn enqueue(cfg: &RunConfig, args: &EnqueueArgs) -> CliResult<()> {
    let mut st = Stage::new("enqueue", cfg);
    let service = cfg.service.clone().unwrap_or_default();
    let data_dir = args.data_dir.clone().unwrap_or_else(|| service.data_dir.clone());
    let corpus_path = cfg.corpus(st.name)?.to_path_buf();
    let corpus_hash = sha256_hex(&st.read(&corpus_path)?);
    let mut sentences = read_sentences(&mut st, &corpus_path)?;
    if args.per_sentence {
        sentences = sentences_as_reports(&sentences).0;
    }
    let decisions_hash = sha256_hex(&st.read(&args.decisions)?);
    let decisions: Vec<AutomationDecision> = st.read_jsonl(&args.decisions)?;
    let report: AutomationReport = st.read_json(&args.report)?;
    if report.reports != decisions.len() {
        return Err(st.invalid(format!(
            "{} lists {} reports but {} has {} decisions",
            args.report.display(),
            report.reports,
            args.decisions.display(),
            decisions.len()
        )));
    }
    let table: Option<ThresholdTable> = match &args.threshold_table {
        Some(p) => Some(st.read_json(p)?),
        None => None,
    };
    let run_id = args
        .run_id
        .clone()
        .unwrap_or_else(|| derive_run_id(&report.policy, &corpus_hash, &decisions_hash));
    let mut record = RunRecord::new(run_id.clone(), &report, corpus_hash, decisions_hash);
    record.threshold_table = table.map(|t| t.rows);
    let texts = report_texts(&sentences).map_err(|e| st.invalid(e))?;
    let queue = Queue::open(&data_dir, Arc::new(SystemClock), service.queue_options()).map_err(|e| st.module(e))?;
    let created = queue.enqueue_run(record, &decisions, &texts).map_err(|e| st.module(e))?;
    let summary = queue.summary(Some(&run_id)).map_err(|e| st.module(e))?;
    st.write_json(
        "enqueue.json",
        &json!({
            "run_id": run_id,
            "created": created,
            "reports": summary.reports,
            "accept_count": summary.accept_count,
            "review_count": summary.review_count,
            "time": summary.time,
        }),
    )?;
    st.finish(args)?;
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub claim_ttl_secs: Option<u64>,
    /// Accepted bearer token; repeatable.
    #[arg(long = "token")]
    #[serde(skip)]
    pub tokens: Vec<String>,
}

/// Service settings: file `[service]` table, then environment, then flags.
pub fn service_config(cfg: &RunConfig, args: &ServeArgs) -> Result<ServiceConfig, String> {
    let mut sc = cfg.service.clone().unwrap_or_default();
    sc.apply_env(|k| std::env::var(k).ok())?;
    if let Some(b) = &args.bind {
        sc.bind = b.clone();
    }
    if let Some(p) = args.port {
        sc.port = p;
    }
    if let Some(d) = &args.data_dir {
        sc.data_dir = d.clone();
    }
    if let Some(t) = args.claim_ttl_secs {
        sc.claim_ttl_secs = t;
    }
    if !args.tokens.is_empty() {
        sc.tokens = args.tokens.clone();
    }
    Ok(sc)
}

pub fn serve(cfg: &RunConfig, args: &ServeArgs) -> CliResult<()> {
    let st = Stage::new("serve", cfg);
    let sc = service_config(cfg, args).map_err(|e| st.config(e))?;
    let params = json!({
        "bind": sc.bind,
        "port": sc.port,
        "data_dir": sc.data_dir,
        "claim_ttl_secs": sc.claim_ttl_secs,
        "tokens": sc.tokens.len(),
    });
    st.finish(&params)?;
    let st = Stage::new("serve", cfg);
    radlabel_review::serve_blocking(sc).map_err(|e| st.module(e))
}
