//! HTTP backends against a local stand-in server.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use chrono::{TimeZone, Utc};
use serde_json::{json, Value};
use vctx_core::embed::{EmbedError, Embedder};
use vctx_core::runtime::{AgentConfig, EmbedderBinding, Event, Processor, ProcessorBinding};
use vctx_service::backends::{HttpEmbedder, HttpProcessor};
use vctx_service::config::HttpSettings;
use vctx_service::store::AgentStore;

#[derive(Default)]
struct Mock {
    /// Requests to fail with 503 before answering.
    fail_first: usize,
    hits: AtomicUsize,
    last_auth: Mutex<Option<String>>,
    last_body: Mutex<Value>,
    reply: Mutex<String>,
}

async fn chat(
    State(m): State<Arc<Mock>>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    let n = m.hits.fetch_add(1, Ordering::SeqCst);
    *m.last_auth.lock().unwrap() = headers
        .get("authorization")
        .map(|v| v.to_str().unwrap().to_string());
    *m.last_body.lock().unwrap() = body;
    if n < m.fail_first {
        return (StatusCode::SERVICE_UNAVAILABLE, Json(json!({})));
    }
    let content = m.reply.lock().unwrap().clone();
    (
        StatusCode::OK,
        Json(json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] })),
    )
}

async fn embed(Json(body): Json<Value>) -> Json<Value> {
    let text = body["input"].as_str().unwrap_or_default();
    let v: Vec<f64> = (0..4)
        .map(|i| if i == text.len() % 4 { 3.0 } else { 0.0 })
        .collect();
    Json(json!({ "data": [{ "embedding": v }] }))
}

async fn bad_embed() -> Json<Value> {
    Json(json!({ "data": [{ "embedding": [1.0, 2.0] }] }))
}

/// Serves the mock on its own runtime thread; returns its base URL.
fn start(mock: Arc<Mock>) -> String {
    let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let app = Router::new()
                .route("/v1/chat/completions", post(chat))
                .route("/v1/embeddings", post(embed))
                .route("/v1/bad-embeddings", post(bad_embed))
                .with_state(mock);
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn settings(key_env: &str) -> HttpSettings {
    HttpSettings {
        api_key_env: key_env.into(),
        backoff_ms: 5,
        ..HttpSettings::default()
    }
}

#[test]
fn processor_retries_then_succeeds_with_bearer_token() {
    let mock = Arc::new(Mock {
        fail_first: 2,
        reply: Mutex::new("{\"thoughts\":\"ok\"}".into()),
        ..Mock::default()
    });
    let base = start(mock.clone());
    std::env::set_var("VCTX_TEST_KEY_A", "sekrit");
    let mut p = HttpProcessor::new(
        &format!("{base}/v1/chat/completions"),
        "tiny",
        &settings("VCTX_TEST_KEY_A"),
    )
    .unwrap();
    assert_eq!(p.complete("PROMPT").unwrap(), "{\"thoughts\":\"ok\"}");
    assert_eq!(mock.hits.load(Ordering::SeqCst), 3);
    assert_eq!(
        mock.last_auth.lock().unwrap().as_deref(),
        Some("Bearer sekrit")
    );
    let body = mock.last_body.lock().unwrap().clone();
    assert_eq!(body["model"], "tiny");
    assert_eq!(body["messages"][0]["content"], "PROMPT");
}

#[test]
fn processor_gives_up_after_two_retries() {
    let mock = Arc::new(Mock {
        fail_first: 10,
        ..Mock::default()
    });
    let base = start(mock.clone());
    let mut p = HttpProcessor::new(
        &format!("{base}/v1/chat/completions"),
        "m",
        &settings("VCTX_TEST_UNSET"),
    )
    .unwrap();
    let err = p.complete("x").unwrap_err().to_string();
    assert!(err.starts_with("ProcessorUnavailable"), "{err}");
    assert_eq!(mock.hits.load(Ordering::SeqCst), 3);
    assert_eq!(*mock.last_auth.lock().unwrap(), None);
}

#[test]
fn embedder_normalizes_and_checks_dimension() {
    let base = start(Arc::new(Mock::default()));
    let e = HttpEmbedder::new(
        &format!("{base}/v1/embeddings"),
        "m",
        4,
        &settings("VCTX_TEST_UNSET"),
    )
    .unwrap();
    let v = e.embed("abc").unwrap();
    assert_eq!(v, vec![0.0, 0.0, 0.0, 1.0]);
    assert_eq!(e.embed(""), Err(EmbedError::EmptyText));

    let bad = HttpEmbedder::new(
        &format!("{base}/v1/bad-embeddings"),
        "m",
        4,
        &settings("VCTX_TEST_UNSET"),
    )
    .unwrap();
    assert_eq!(
        bad.embed("x"),
        Err(EmbedError::Dimension {
            got: 2,
            expected: 4
        })
    );
}

#[test]
fn agent_runs_on_http_backends() {
    let reply = json!({ "thoughts": "greet", "function": "send_message", "params": { "content": "Hello from the model." } });
    let mock = Arc::new(Mock {
        reply: Mutex::new(reply.to_string()),
        ..Mock::default()
    });
    let base = start(mock);
    let tmp = tempfile::tempdir().unwrap();
    let store = AgentStore::new(tmp.path(), settings("VCTX_TEST_UNSET"));
    let config = AgentConfig {
        processor: ProcessorBinding::Http {
            endpoint: format!("{base}/v1/chat/completions"),
            model: "m".into(),
        },
        embedder: EmbedderBinding::Http {
            endpoint: format!("{base}/v1/embeddings"),
            model: "e".into(),
            dim: 4,
        },
        ..AgentConfig::default()
    };
    let (d, mut agent) = store.create("remote", config).unwrap();
    assert_eq!(d.config.processor, "http:m");
    let at = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let trace = agent.step(Event::user("hi", at)).unwrap();
    assert_eq!(trace.outbound(), ["Hello from the model."]);
    agent.ingest("some document", at).unwrap();
    store.save(&d, &agent).unwrap();

    let (_, loaded) = store.load(&d.agent_id).unwrap();
    assert_eq!(loaded.compose().unwrap(), agent.compose().unwrap());
    assert_eq!(loaded.archival().len(), 1);
}
