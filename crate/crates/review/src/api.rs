use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use radlabel::automation::AutomationPolicy;
use radlabel::EntitySpan;
use serde::Deserialize;
use serde_json::json;

use crate::clock::SystemClock;
use crate::config::ServiceConfig;
use crate::queue::{ItemStatus, Queue, QueueError};
use crate::{prepare_run, RunInputs};

#[derive(Clone)]
pub struct AppState {
    pub queue: Arc<Queue>,
    pub tokens: Arc<Vec<String>>,
    /// Relative input paths in run requests resolve against this directory.
    pub input_root: PathBuf,
}

/// An RFC 9457 problem document.
#[derive(Debug)]
pub struct Problem {
    status: StatusCode,
    code: &'static str,
    detail: String,
}

impl Problem {
    fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            code,
            detail: detail.into(),
        }
    }

    fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", detail)
    }
}

impl From<QueueError> for Problem {
    fn from(e: QueueError) -> Self {
        let status = match &e {
            QueueError::NotFound(_) | QueueError::RunNotFound(_) | QueueError::NoRuns => StatusCode::NOT_FOUND,
            QueueError::DuplicateRun(_)
            | QueueError::DuplicateReport { .. }
            | QueueError::VersionConflict { .. }
            | QueueError::NotClaimed { .. } => StatusCode::CONFLICT,
            QueueError::Anchor(_) | QueueError::Overlap(_) => StatusCode::UNPROCESSABLE_ENTITY,
            QueueError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for Problem {
    fn into_response(self) -> Response {
        let body = json!({
            "type": format!("urn:radlabel:problem:{}", self.code),
            "title": self.status.canonical_reason().unwrap_or("error"),
            "status": self.status.as_u16(),
            "code": self.code,
            "detail": self.detail,
        });
        let mut res = (self.status, Json(body)).into_response();
        res.headers_mut()
            .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/problem+json"));
        res
    }
}

type ApiResult<T> = Result<Json<T>, Problem>;

async fn auth(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let presented = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    match presented {
        Some(t) if state.tokens.iter().any(|k| k == t) => next.run(req).await,
        _ => Problem::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown bearer token").into_response(),
    }
}

#[derive(Deserialize)]
struct ListQuery {
    status: Option<String>,
}

async fn list_queue(State(s): State<AppState>, Query(q): Query<ListQuery>) -> Result<Response, Problem> {
    let status = q
        .status
        .as_deref()
        .map(str::parse::<ItemStatus>)
        .transpose()
        .map_err(Problem::bad_request)?;
    Ok(Json(s.queue.list(status)?).into_response())
}

#[derive(Deserialize)]
struct ClaimRequest {
    reviewer_id: String,
}

async fn claim(State(s): State<AppState>, Json(req): Json<ClaimRequest>) -> Result<Response, Problem> {
    if req.reviewer_id.trim().is_empty() {
        return Err(Problem::bad_request("reviewer_id is empty"));
    }
    Ok(match s.queue.claim(&req.reviewer_id)? {
        Some(item) => Json(item).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

#[derive(Deserialize)]
struct CorrectionRequest {
    reviewer_id: String,
    base_version: u64,
    spans: Vec<EntitySpan>,
}

async fn correction(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<CorrectionRequest>,
) -> ApiResult<crate::ReviewItem> {
    Ok(Json(s.queue.submit(&id, &req.reviewer_id, req.base_version, req.spans)?))
}

async fn report(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<crate::ReviewItem> {
    Ok(Json(s.queue.item(&id)?))
}

#[derive(Deserialize)]
struct RunQuery {
    run_id: Option<String>,
}

async fn summary(State(s): State<AppState>, Query(q): Query<RunQuery>) -> ApiResult<crate::Summary> {
    Ok(Json(s.queue.summary(q.run_id.as_deref())?))
}

async fn thresholds(State(s): State<AppState>, Query(q): Query<RunQuery>) -> ApiResult<crate::ThresholdsView> {
    Ok(Json(s.queue.thresholds(q.run_id.as_deref())?))
}

#[derive(Deserialize)]
struct RunRequest {
    run_id: Option<String>,
    sentences: PathBuf,
    predictions: Vec<PathBuf>,
    policy: AutomationPolicy,
    threshold_table: Option<PathBuf>,
    #[serde(default = "yes")]
    with_gold: bool,
}

fn yes() -> bool {
    true
}

async fn create_run(State(s): State<AppState>, Json(req): Json<RunRequest>) -> Result<Response, Problem> {
    if req.predictions.is_empty() {
        return Err(Problem::bad_request("predictions is empty"));
    }
    req.policy.validate().map_err(|e| Problem::bad_request(e.to_string()))?;
    let root = s.input_root.clone();
    let inputs = RunInputs {
        sentences: root.join(&req.sentences),
        predictions: req.predictions.iter().map(|p| root.join(p)).collect(),
        policy: req.policy,
        threshold_table: req.threshold_table.map(|p| root.join(p)),
        run_id: req.run_id,
        with_gold: req.with_gold,
    };
    let queue = s.queue.clone();
    let result = tokio::task::spawn_blocking(move || -> Result<_, Problem> {
        let prepared = prepare_run(&inputs).map_err(Problem::bad_request)?;
        let run_id = prepared.record.run_id.clone();
        let created = queue.enqueue_run(prepared.record, &prepared.decisions, &prepared.texts)?;
        Ok((created, queue.run(&run_id)?))
    })
    .await
    .map_err(|e| Problem::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let status = if result.0 { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(result.1)).into_response())
}

async fn get_run(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<crate::RunRecord> {
    Ok(Json(s.queue.run(&id)?))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/queue", get(list_queue))
        .route("/api/queue/claim", post(claim))
        .route("/api/reports/{id}", get(report))
        .route("/api/reports/{id}/correction", post(correction))
        .route("/api/summary", get(summary))
        .route("/api/thresholds", get(thresholds))
        .route("/api/runs", post(create_run))
        .route("/api/runs/{id}", get(get_run))
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

/// [`serve`] on a fresh multi-threaded runtime.
pub fn serve_blocking(config: ServiceConfig) -> Result<(), String> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?
        .block_on(serve(config))
}

/// Open the queue under `config.data_dir` and serve until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), String> {
    if config.tokens.is_empty() {
        tracing::warn!("no tokens configured; every request will be refused");
    }
    let queue = Queue::open(&config.data_dir, Arc::new(SystemClock), config.queue_options()).map_err(|e| e.to_string())?;
    let state = AppState {
        queue: Arc::new(queue),
        tokens: Arc::new(config.tokens.clone()),
        input_root: config.data_dir.clone(),
    };
    let addr = format!("{}:{}", config.bind, config.port);
    let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| format!("{addr}: {e}"))?;
    tracing::info!(%addr, "review service listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())
}
