//! HTTP/JSON API and the server-sent step feed.
//!
//! | method | path | result |
//! |---|---|---|
//! | POST | `/agents` `{name, config?}` | 201 `{agent_id, ...}` |
//! | GET | `/agents` | descriptors |
//! | GET | `/agents/{id}` | descriptor |
//! | DELETE | `/agents/{id}` | 204 |
//! | POST | `/agents/{id}/messages` `{text}` | 200 `{trace_id, outbound, ...}` |
//! | GET | `/agents/{id}/stream` | SSE, `event: step-entry` |
//! | GET | `/agents/{id}/memory` | memory summary |
//! | POST | `/agents/{id}/memory/archival` `{text}` | 201 `{entry_id}` |
//! | GET | `/agents/{id}/memory/archival?q=&page=` | page of hits |
//! | GET | `/agents/{id}/memory/recall?q=&page=` | page of messages |
//! | POST | `/agents/{id}/snapshot` | 200 |
//!
//! Errors are `{"error": {"kind", "message"}}` with 404 for unknown agents
//! and 400 for malformed bodies or queries.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use futures_util::stream::{self, Stream};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;
use vctx_core::runtime::{AgentConfig, Event, StepError};
use vctx_core::store::{ArchivalError, RecallError};

use crate::hub::{publish, trace_id, Hub, HubError};
use crate::store::StoreError;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            kind: "BadRequest",
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            kind: "Internal",
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "kind": self.kind, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<HubError> for ApiError {
    fn from(e: HubError) -> Self {
        match e {
            HubError::NotFound(_) | HubError::Store(StoreError::NotFound(_)) => ApiError {
                status: StatusCode::NOT_FOUND,
                kind: "NotFound",
                message: e.to_string(),
            },
            HubError::Store(StoreError::Agent(a)) => ApiError::bad_request(a.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<StepError> for ApiError {
    fn from(e: StepError) -> Self {
        match e {
            StepError::EmptyPayload => ApiError::bad_request(e.to_string()),
            StepError::ProcessorUnavailable(_) => ApiError {
                status: StatusCode::BAD_GATEWAY,
                kind: "ProcessorUnavailable",
                message: e.to_string(),
            },
            other => ApiError::internal(other.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body, answering 400 rather than axum's 415/422.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/agents", post(create_agent).get(list_agents))
        .route("/agents/{id}", get(get_agent).delete(delete_agent))
        .route("/agents/{id}/messages", post(send_message))
        .route("/agents/{id}/stream", get(stream))
        .route("/agents/{id}/memory", get(memory))
        .route(
            "/agents/{id}/memory/archival",
            post(insert_archival).get(search_archival),
        )
        .route("/agents/{id}/memory/recall", get(search_recall))
        .route("/agents/{id}/snapshot", post(snapshot))
        .with_state(hub)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateAgent {
    name: String,
    #[serde(default)]
    config: Option<AgentConfig>,
}

async fn create_agent(State(hub): State<Arc<Hub>>, bytes: Bytes) -> ApiResult<Response> {
    let req: CreateAgent = body(&bytes)?;
    if req.name.trim().is_empty() {
        return Err(ApiError::bad_request("name must not be empty"));
    }
    let d = hub.create(&req.name, req.config).await?;
    Ok((StatusCode::CREATED, Json(d)).into_response())
}

async fn list_agents(State(hub): State<Arc<Hub>>) -> Response {
    Json(hub.list()).into_response()
}

async fn get_agent(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(hub.descriptor(&id)?).into_response())
}

async fn delete_agent(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    hub.delete(&id).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TextBody {
    text: String,
}

#[derive(Serialize)]
struct StepResponse {
    trace_id: String,
    step: u64,
    outbound: Vec<String>,
    chain_limited: bool,
    evictions: usize,
    entries: Vec<vctx_core::runtime::TraceEntry>,
}

async fn send_message(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<Response> {
    let req: TextBody = body(&bytes)?;
    let trace = hub
        .run(&id, move |agent, ctx| {
            let trace = agent.step(Event::user(req.text, Utc::now()))?;
            publish(ctx, &trace);
            Ok::<_, StepError>(trace)
        })
        .await??;
    Ok(Json(StepResponse {
        trace_id: trace_id(trace.step),
        step: trace.step,
        outbound: trace.outbound().into_iter().map(str::to_string).collect(),
        chain_limited: trace.chain_limited,
        evictions: trace.evictions,
        entries: trace.entries,
    })
    .into_response())
}

async fn stream(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>> {
    let rx = hub.subscribe(&id)?;
    let events = stream::unfold(rx, |mut rx| async move {
        let ev = match rx.recv().await {
            Ok(entry) => SseEvent::default()
                .event("step-entry")
                .id(entry.id())
                .json_data(&entry)
                .expect("stream entry serializes"),
            // A slow client missed entries; say how many and carry on.
            Err(RecvError::Lagged(n)) => SseEvent::default().event("lagged").data(n.to_string()),
            Err(RecvError::Closed) => return None,
        };
        Some((Ok(ev), rx))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occupancy {
    pub tokens: usize,
    pub cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryView {
    pub working_context: String,
    pub working_tokens: usize,
    pub working_cap: usize,
    pub queue_occupancy: Occupancy,
    pub queue_messages: usize,
    pub pressure_warned: bool,
    pub summary: Option<String>,
    pub recall_count: usize,
    pub archival_count: usize,
}

async fn memory(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> ApiResult<Response> {
    let view = hub
        .run(&id, |agent, _| {
            let ctx = agent.context();
            MemoryView {
                working_context: ctx.working.text().to_string(),
                working_tokens: ctx.working.tokens(),
                working_cap: ctx.working.cap(),
                queue_occupancy: Occupancy {
                    tokens: ctx.queue.occupancy(),
                    cap: ctx.queue.cap(),
                },
                queue_messages: ctx.queue.len(),
                pressure_warned: ctx.queue.warned(),
                summary: ctx.queue.summary().map(|m| m.text.clone()),
                recall_count: agent.recall().len(),
                archival_count: agent.archival().len(),
            }
        })
        .await?;
    Ok(Json(view).into_response())
}

async fn insert_archival(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<Response> {
    let req: TextBody = body(&bytes)?;
    let id = hub
        .run(&id, move |agent, _| agent.ingest(&req.text, Utc::now()))
        .await?
        .map_err(|e| match e {
            ArchivalError::EmptyText => ApiError::bad_request(e.to_string()),
            other => ApiError::internal(other.to_string()),
        })?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "entry_id": id.to_string() })),
    )
        .into_response())
}

#[derive(Deserialize)]
struct SearchQuery {
    q: Option<String>,
    page: Option<usize>,
}

impl SearchQuery {
    fn text(&self) -> ApiResult<String> {
        match self.q.as_deref().map(str::trim) {
            Some(q) if !q.is_empty() => Ok(q.to_string()),
            _ => Err(ApiError::bad_request("query parameter q is required")),
        }
    }
}

fn bad_query(
    q: Result<Query<SearchQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<SearchQuery> {
    q.map(|Query(q)| q)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn search_archival(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<String>,
    query: Result<Query<SearchQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Response> {
    let query = bad_query(query)?;
    let (q, page) = (query.text()?, query.page.unwrap_or(0));
    let result = hub
        .run(&id, move |agent, _| {
            let size = agent.config().page_size;
            agent.archival().search(&q, page, size)
        })
        .await?
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let items: Vec<Value> = result
        .items
        .iter()
        .map(|h| json!({ "id": h.id.to_string(), "text": h.text, "score": h.score }))
        .collect();
    Ok(Json(json!({
        "page_index": result.page_index,
        "total_matches": result.total_matches,
        "has_more": result.has_more,
        "items": items,
    }))
    .into_response())
}

async fn search_recall(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<String>,
    query: Result<Query<SearchQuery>, axum::extract::rejection::QueryRejection>,
) -> ApiResult<Response> {
    let query = bad_query(query)?;
    let (q, page) = (query.text()?, query.page.unwrap_or(0));
    let result = hub
        .run(&id, move |agent, _| {
            let size = agent.config().page_size;
            agent.recall().search_text(&q, page, size)
        })
        .await?
        .map_err(|e: RecallError| ApiError::bad_request(e.to_string()))?;
    Ok(Json(result).into_response())
}

async fn snapshot(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> ApiResult<Response> {
    let saved = hub
        .run(&id, |agent, ctx| {
            ctx.store.save(&ctx.descriptor, agent)?;
            Ok::<_, StoreError>(json!({
                "agent_id": ctx.descriptor.agent_id,
                "steps": agent.state().steps,
                "saved_at": Utc::now(),
            }))
        })
        .await?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(saved).into_response())
}

/// Binds and serves until ctrl-c.
pub async fn serve(hub: Arc<Hub>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(hub))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
