use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use radlabel::extractor::{Extractor, PredictionStatus, RemoteBackend, RemoteConfig};
use radlabel::{EntityType, Sentence};
use serde_json::{json, Value};

#[derive(Clone, Default)]
struct Counters {
    hits: Arc<AtomicUsize>,
    in_flight: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
}

fn spawn(router: Router) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn sentence(index: usize, text: &str) -> Sentence {
    Sentence {
        report_id: "r".into(),
        index,
        text: text.into(),
        report_offset: 0,
        gold: vec![],
    }
}

fn config(endpoint: String) -> RemoteConfig {
    let mut c = RemoteConfig::new(endpoint);
    c.backoff_ms = 5;
    c.timeout_ms = 5_000;
    c
}

#[test]
fn canned_record_round_trips() {
    async fn handler(Json(req): Json<Value>) -> Json<Value> {
        assert!(req["instruction"].as_str().unwrap().contains("OBS-DA"));
        assert_eq!(req["input"], "no effusion");
        Json(json!({
            "output": r#"[{"entity_type":"OBS-DA","entity_value":"effusion","start_position":3,"end_position":11}]"#,
            "logits": [1.25]
        }))
    }
    let url = spawn(Router::new().route("/extract", post(handler)));
    let backend = RemoteBackend::new(config(url));
    let preds = backend.extract(&[sentence(0, "no effusion")], EntityType::ObsDa).unwrap();
    assert_eq!(preds[0].status, PredictionStatus::Ok);
    let s = &preds[0].spans[0];
    assert_eq!((s.value.as_str(), s.start, s.end, s.logit), ("effusion", 3, 11, 1.25));
}

#[test]
fn server_errors_exhaust_retries_and_flag_failure() {
    async fn handler(State(c): State<Counters>) -> StatusCode {
        c.hits.fetch_add(1, Ordering::SeqCst);
        StatusCode::INTERNAL_SERVER_ERROR
    }
    let counters = Counters::default();
    let url = spawn(Router::new().route("/extract", post(handler)).with_state(counters.clone()));
    let backend = RemoteBackend::new(config(url));
    let preds = backend
        .extract(&[sentence(0, "no effusion"), sentence(1, "possible edema")], EntityType::ObsDa)
        .unwrap();
    assert_eq!(preds.len(), 2);
    for p in &preds {
        assert_eq!(p.status, PredictionStatus::Failed);
        assert!(p.spans.is_empty());
    }
    assert_eq!(counters.hits.load(Ordering::SeqCst), 6);
}

#[test]
fn client_errors_are_not_retried() {
    async fn handler(State(c): State<Counters>) -> StatusCode {
        c.hits.fetch_add(1, Ordering::SeqCst);
        StatusCode::BAD_REQUEST
    }
    let counters = Counters::default();
    let url = spawn(Router::new().route("/extract", post(handler)).with_state(counters.clone()));
    let preds = RemoteBackend::new(config(url))
        .extract(&[sentence(0, "x")], EntityType::ObsU)
        .unwrap();
    assert_eq!(preds[0].status, PredictionStatus::Failed);
    assert_eq!(counters.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_endpoint_fails_without_panicking() {
    let mut c = config("http://127.0.0.1:9".into());
    c.max_attempts = 2;
    let preds = RemoteBackend::new(c).extract(&[sentence(0, "x")], EntityType::ObsU).unwrap();
    assert_eq!(preds[0].status, PredictionStatus::Failed);
}

#[test]
fn bounded_fan_out_keeps_order() {
    async fn handler(State(c): State<Counters>, Json(req): Json<Value>) -> Json<Value> {
        let now = c.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        c.peak.fetch_max(now, Ordering::SeqCst);
        c.hits.fetch_add(1, Ordering::SeqCst);
        tokio::time::sleep(std::time::Duration::from_millis(5)).await;
        c.in_flight.fetch_sub(1, Ordering::SeqCst);
        let input = req["input"].as_str().unwrap().to_string();
        let word = input.split(' ').nth(1).unwrap().to_string();
        Json(json!({"output": json!([{"entity_type": "OBS-DP", "entity_value": word}]).to_string()}))
    }
    let counters = Counters::default();
    let url = spawn(Router::new().route("/extract", post(handler)).with_state(counters.clone()));
    let sentences: Vec<Sentence> = (0..100).map(|i| sentence(i, &format!("finding w{i:03} noted"))).collect();
    let mut c = config(url);
    c.concurrency = 4;
    let preds = RemoteBackend::new(c).extract(&sentences, EntityType::ObsDp).unwrap();
    assert_eq!(preds.len(), 100);
    assert_eq!(counters.hits.load(Ordering::SeqCst), 100);
    assert!(counters.peak.load(Ordering::SeqCst) <= 4);
    for (i, p) in preds.iter().enumerate() {
        assert_eq!(p.sentence_id, sentences[i].id());
        assert_eq!(p.spans[0].value, format!("w{i:03}"));
    }
}
