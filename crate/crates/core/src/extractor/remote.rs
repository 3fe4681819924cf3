use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    instruction_for, parallel_map, parse_output_with_logits, ExtractError, Extractor, PredictionStatus,
    SentencePrediction,
};
use crate::corpus::{EntityType, Sentence};

fn default_concurrency() -> usize {
    4
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    100
}
fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL; requests go to `{endpoint}/extract`.
    pub endpoint: String,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    /// First retry delay; doubles on each further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            concurrency: default_concurrency(),
            max_attempts: default_attempts(),
            backoff_ms: default_backoff_ms(),
            timeout_ms: default_timeout_ms(),
            instruction: None,
        }
    }
}

#[derive(Serialize)]
struct ExtractRequest<'a> {
    instruction: &'a str,
    input: &'a str,
}

/// Body of a successful `/extract` reply.
#[derive(Debug, Clone, Deserialize)]
pub struct ExtractResponse {
    pub output: String,
    #[serde(default)]
    pub logits: Option<Vec<f64>>,
}

enum CallError {
    Retryable(String),
    Fatal(String),
}

/// Client for a model server speaking `POST /extract`.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn url(&self) -> String {
        format!("{}/extract", self.config.endpoint.trim_end_matches('/'))
    }

    fn call_once(&self, url: &str, request: &ExtractRequest<'_>) -> Result<ExtractResponse, CallError> {
        let mut resp = self
            .agent
            .post(url)
            .send_json(request)
            .map_err(|e| CallError::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err(CallError::Retryable(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(CallError::Fatal(format!("HTTP {status}")));
        }
        resp.body_mut()
            .read_json::<ExtractResponse>()
            .map_err(|e| CallError::Fatal(format!("bad response body: {e}")))
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// One `/extract` exchange with retries; the error is a readable reason.
    pub fn call(&self, instruction: &str, input: &str) -> Result<ExtractResponse, String> {
        let url = self.url();
        let request = ExtractRequest { instruction, input };
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.call_once(&url, &request) {
                Ok(r) => return Ok(r),
                Err(CallError::Fatal(e)) => return Err(e),
                Err(CallError::Retryable(e)) => {
                    tracing::debug!(attempt, error = %e, "retrying extract call");
                    last = e;
                }
            }
        }
        Err(format!("gave up after {attempts} attempts: {last}"))
    }
}

impl Extractor for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}", self.config.endpoint)
    }

    fn extract(
        &self,
        sentences: &[Sentence],
        target: EntityType,
    ) -> Result<Vec<SentencePrediction>, ExtractError> {
        let id = self.id();
        let instruction = self
            .config
            .instruction
            .clone()
            .unwrap_or_else(|| instruction_for(target));
        Ok(parallel_map(sentences, self.config.concurrency, |s| {
            match self.call(&instruction, &s.text) {
                Ok(resp) => {
                    let parsed = parse_output_with_logits(&resp.output, &s.text, target, resp.logits.as_deref());
                    SentencePrediction::from_parsed(s, target, &id, resp.output, parsed)
                }
                Err(e) => {
                    tracing::warn!(sentence = %s.id(), error = %e, "remote extraction failed");
                    SentencePrediction::empty(s.id(), target, &id, PredictionStatus::Failed, e)
                }
            }
        }))
    }
}
