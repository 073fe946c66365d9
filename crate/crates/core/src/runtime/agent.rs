use std::sync::Arc;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::budget::{BudgetError, TokenBudget};
use crate::context::{reserved_tokens, ComposeError, MainContext, DEFAULT_INSTRUCTIONS};
use crate::embed::{HashedBowEmbedder, SharedEmbedder};
use crate::functions::{
    names, parse_output, validate, FunctionCall, Registry, SchemaError, ValidatedCall,
};
use crate::message::{format_timestamp, Message, MessageFactory, MessageId, Role};
use crate::queue::{QueueError, QueueState, TruncationSummarizer};
use crate::store::{ArchivalId, ArchivalStore, RecallError, RecallStore};
use crate::tokens::{default_tokenizer, truncate_to_tokens, SharedTokenizer};
use crate::working::{WorkingContext, WorkingContextError};

use super::config::{AgentConfig, EmbedderBinding, ProcessorBinding, SummarizerKind};
use super::event::{Event, EventKind};
use super::processor::{Processor, ProcessorError, ProcessorSummarizer, ScriptedProcessor};

pub const CHAIN_LIMIT_NOTE: &str = "chain limit reached";
const TRUNCATION_MARK: &str = " [truncated]";
const MAX_PAUSE_MINUTES: i64 = 7 * 24 * 60;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("working context: {0}")]
    Working(#[from] WorkingContextError),
    #[error("backend unavailable: {0}")]
    Backend(String),
    #[error("CorruptSnapshot: {file}: {detail}")]
    CorruptSnapshot { file: String, detail: String },
    #[error("snapshot I/O on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("EmptyPayload: user messages must not be empty")]
    EmptyPayload,
    #[error(transparent)]
    ProcessorUnavailable(#[from] ProcessorError),
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error(transparent)]
    Recall(#[from] RecallError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

/// One processor invocation within a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub seq: usize,
    /// SHA-256 of the composed prompt, hex encoded.
    pub input_digest: String,
    pub thoughts: Option<String>,
    pub call: Option<FunctionCall>,
    /// Parse or validation error fed back to the processor.
    pub error: Option<String>,
    pub function_result: Option<Value>,
    pub outbound: Option<String>,
    pub heartbeat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: u64,
    pub event: EventKind,
    pub entries: Vec<TraceEntry>,
    pub chain_limited: bool,
    pub evictions: usize,
}

impl StepTrace {
    pub fn outbound(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter_map(|e| e.outbound.as_deref())
            .collect()
    }
}

/// Everything that defines an agent's behavior, apart from its backends.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub config: AgentConfig,
    pub budget: TokenBudget,
    pub context: MainContext,
    pub recall: RecallStore,
    pub archival: ArchivalStore,
    pub factory: MessageFactory,
    pub steps: u64,
    pub last_event_at: Option<DateTime<Utc>>,
    pub heartbeats_paused_until: Option<DateTime<Utc>>,
    /// Latest timestamp handed out; history timestamps never go backwards.
    pub clock: Option<DateTime<Utc>>,
}

pub struct Agent {
    pub(crate) state: AgentState,
    pub(crate) processor: Box<dyn Processor>,
    pub(crate) registry: Registry,
    pub(crate) tokenizer: SharedTokenizer,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

pub fn default_embedder(binding: &EmbedderBinding) -> Result<SharedEmbedder, AgentError> {
    match binding {
        EmbedderBinding::HashedBow { dim } if *dim > 0 => {
            Ok(Arc::new(HashedBowEmbedder::new(*dim)))
        }
        EmbedderBinding::HashedBow { .. } => Err(AgentError::Config(
            "embedding dimension must be positive".into(),
        )),
        EmbedderBinding::Http { endpoint, .. } => Err(AgentError::Backend(format!(
            "http embedder at {endpoint} must be supplied by the host"
        ))),
    }
}

pub fn default_processor(binding: &ProcessorBinding) -> Result<Box<dyn Processor>, AgentError> {
    match binding {
        ProcessorBinding::Scripted { script } => {
            Ok(Box::new(ScriptedProcessor::new(script.clone())))
        }
        ProcessorBinding::Http { endpoint, .. } => Err(AgentError::Backend(format!(
            "http processor at {endpoint} must be supplied by the host"
        ))),
    }
}

pub(crate) struct Built {
    pub registry: Registry,
    pub instructions: String,
    pub budget: TokenBudget,
}

pub(crate) fn build_parts(
    config: &AgentConfig,
    tokenizer: &SharedTokenizer,
) -> Result<Built, AgentError> {
    if config.max_chain == 0 {
        return Err(AgentError::Config("max_chain must be at least 1".into()));
    }
    if config.page_size == 0 {
        return Err(AgentError::Config("page_size must be at least 1".into()));
    }
    if config.tick_interval_secs == Some(0) {
        return Err(AgentError::Config(
            "tick_interval_secs must be positive".into(),
        ));
    }
    config.ratios().validate()?;
    let registry = match &config.functions {
        Some(names) => Registry::subset(names)?,
        None => Registry::default_set(),
    };
    let preamble = config
        .system_instructions
        .as_deref()
        .unwrap_or(DEFAULT_INSTRUCTIONS);
    let instructions = format!("{preamble}\n\n{}", registry.render());
    let budget = TokenBudget::split(
        config.max_tokens,
        reserved_tokens(&**tokenizer, &instructions),
        config.working_fraction,
    )?;
    Ok(Built {
        registry,
        instructions,
        budget,
    })
}

impl Agent {
    /// Builds an agent whose backends come from the config bindings.
    pub fn new(config: AgentConfig) -> Result<Self, AgentError> {
        let processor = default_processor(&config.processor)?;
        let embedder = default_embedder(&config.embedder)?;
        Self::with_backends(config, processor, embedder)
    }

    pub fn with_backends(
        config: AgentConfig,
        processor: Box<dyn Processor>,
        embedder: SharedEmbedder,
    ) -> Result<Self, AgentError> {
        let tokenizer = default_tokenizer();
        let built = build_parts(&config, &tokenizer)?;
        let working = WorkingContext::with_text(
            config.working_context.clone(),
            built.budget.working_cap,
            tokenizer.clone(),
        )?;
        let queue = QueueState::new(built.budget.queue_cap, config.ratios(), tokenizer.clone())?;
        let state = AgentState {
            budget: built.budget,
            context: MainContext::new(built.instructions, working, queue),
            recall: RecallStore::new(),
            archival: ArchivalStore::new(embedder),
            factory: MessageFactory::default(),
            steps: 0,
            last_event_at: None,
            heartbeats_paused_until: None,
            clock: None,
            config,
        };
        Ok(Agent {
            state,
            processor,
            registry: built.registry,
            tokenizer,
        })
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn config(&self) -> &AgentConfig {
        &self.state.config
    }

    pub fn budget(&self) -> &TokenBudget {
        &self.state.budget
    }

    pub fn context(&self) -> &MainContext {
        &self.state.context
    }

    pub fn recall(&self) -> &RecallStore {
        &self.state.recall
    }

    pub fn archival(&self) -> &ArchivalStore {
        &self.state.archival
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn tokenizer(&self) -> &SharedTokenizer {
        &self.tokenizer
    }

    pub fn set_processor(&mut self, processor: Box<dyn Processor>) {
        self.processor = processor;
    }

    pub fn compose(&self) -> Result<String, ComposeError> {
        self.state
            .context
            .compose(&self.state.budget, &*self.tokenizer)
    }

    /// Loads a document or fact straight into archival storage.
    pub fn ingest(
        &mut self,
        text: &str,
        at: DateTime<Utc>,
    ) -> Result<ArchivalId, crate::store::ArchivalError> {
        self.state.archival.insert(text, at)
    }

    /// Processes one event: admit it to history, then run the processor
    /// until it yields, stops requesting heartbeats or hits `max_chain`.
    /// On error every change made during the step is undone.
    pub fn step(&mut self, event: Event) -> Result<StepTrace, StepError> {
        let snapshot = self.state.clone();
        let out = self.run_step(event);
        if out.is_err() {
            self.state = snapshot;
        }
        out
    }

    /// Records an event in history without running the processor.
    pub fn observe(&mut self, event: Event) -> Result<MessageId, StepError> {
        let snapshot = self.state.clone();
        let out = self.admit_event(&event, &mut 0);
        if out.is_err() {
            self.state = snapshot;
        }
        out.map(|(id, _)| id)
    }

    /// Runs a scheduled step if the tick interval has elapsed since the
    /// last event and heartbeats are not paused. The first tick on an idle
    /// agent only starts the clock.
    pub fn tick(&mut self, now: DateTime<Utc>) -> Result<Option<StepTrace>, StepError> {
        let Some(secs) = self.state.config.tick_interval_secs else {
            return Ok(None);
        };
        if self
            .state
            .heartbeats_paused_until
            .is_some_and(|until| now < until)
        {
            return Ok(None);
        }
        let Some(anchor) = self.state.last_event_at else {
            self.state.last_event_at = Some(now);
            return Ok(None);
        };
        if now < anchor + Duration::seconds(secs as i64) {
            return Ok(None);
        }
        self.step(Event::scheduled(now)).map(Some)
    }

    fn admit_event(
        &mut self,
        event: &Event,
        evictions: &mut usize,
    ) -> Result<(MessageId, DateTime<Utc>), StepError> {
        if event.kind == EventKind::UserMessage && event.payload.is_empty() {
            return Err(StepError::EmptyPayload);
        }
        let ts = match self.state.clock {
            Some(c) if c > event.at => c,
            _ => event.at,
        };
        self.state.last_event_at = Some(event.at);
        let (role, text) = event.to_message_parts();
        let id = self.admit(role, text, ts, role != Role::User, evictions)?;
        Ok((id, ts))
    }

    fn run_step(&mut self, event: Event) -> Result<StepTrace, StepError> {
        let mut evictions = 0;
        let (_, ts) = self.admit_event(&event, &mut evictions)?;
        self.state.steps += 1;
        let mut trace = StepTrace {
            step: self.state.steps,
            event: event.kind,
            entries: Vec::new(),
            chain_limited: false,
            evictions: 0,
        };

        loop {
            if trace.entries.len() == self.state.config.max_chain {
                self.admit(
                    Role::System,
                    CHAIN_LIMIT_NOTE.into(),
                    ts,
                    false,
                    &mut evictions,
                )?;
                trace.chain_limited = true;
                break;
            }
            let prompt = self.compose()?;
            let raw = self.processor.complete(&prompt)?;
            let mut entry = TraceEntry {
                seq: trace.entries.len(),
                input_digest: hex::encode(Sha256::digest(prompt.as_bytes())),
                thoughts: None,
                call: None,
                error: None,
                function_result: None,
                outbound: None,
                heartbeat: false,
            };

            let parsed = match parse_output(&raw) {
                Ok(p) => p,
                Err(e) => {
                    let text = e.to_string();
                    self.admit(Role::System, text.clone(), ts, true, &mut evictions)?;
                    entry.error = Some(text);
                    entry.heartbeat = true;
                    trace.entries.push(entry);
                    continue;
                }
            };
            if let Some(t) = parsed.thoughts.as_ref().filter(|t| !t.is_empty()) {
                self.admit(Role::Assistant, t.clone(), ts, true, &mut evictions)?;
            }
            entry.thoughts = parsed.thoughts;
            let Some(call) = parsed.call else {
                trace.entries.push(entry);
                break;
            };
            let call_text = json!({"function": call.name, "params": call.params}).to_string();
            self.admit(Role::FunctionCall, call_text, ts, true, &mut evictions)?;
            let validated = validate(&call, &self.registry);
            entry.call = Some(call);
            match validated {
                Err(e) => {
                    let text = e.to_string();
                    self.admit(Role::System, text.clone(), ts, true, &mut evictions)?;
                    entry.error = Some(text);
                    entry.heartbeat = true;
                }
                Ok(vc) => {
                    let (result, outbound) = self.execute(&vc, ts);
                    self.admit(
                        Role::FunctionResult,
                        result.to_string(),
                        ts,
                        true,
                        &mut evictions,
                    )?;
                    entry.function_result = Some(result);
                    entry.outbound = outbound;
                    entry.heartbeat = parsed.request_heartbeat;
                }
            }
            let again = entry.heartbeat;
            trace.entries.push(entry);
            if !again {
                break;
            }
        }
        trace.evictions = evictions;
        Ok(trace)
    }

    /// Appends a message to history: recall first, then the queue, evicting
    /// beforehand if it would not fit. Internal messages that are too long
    /// for the queue are truncated; user messages are rejected instead.
    fn admit(
        &mut self,
        role: Role,
        text: String,
        ts: DateTime<Utc>,
        may_truncate: bool,
        evictions: &mut usize,
    ) -> Result<MessageId, StepError> {
        let Agent {
            state,
            processor,
            tokenizer,
            ..
        } = self;
        let tok = &**tokenizer;
        let queue = &mut state.context.queue;
        let mut msg = Message::new(MessageId(state.factory.next_id()), role, text, ts, tok);
        let max = queue.max_message_cost();
        if may_truncate && queue.line_cost(&msg) > max {
            let empty = Message::new(msg.id, role, "", ts, tok);
            let room = max
                .saturating_sub(queue.line_cost(&empty))
                .saturating_sub(tok.count(TRUNCATION_MARK));
            let cut = format!(
                "{}{TRUNCATION_MARK}",
                truncate_to_tokens(tok, &msg.text, room)
            );
            msg = Message::new(msg.id, role, cut, ts, tok);
        }
        let cost = queue.line_cost(&msg);
        if cost > max {
            return Err(QueueError::MessageTooLarge { cost, max }.into());
        }
        let msg = state.factory.make(role, msg.text, ts, tok);
        let id = msg.id;

        state.recall.insert(msg.clone())?;
        let need = queue.admission_cost(cost);
        if queue.needs_eviction(need) {
            let ev = match state.config.summarizer {
                SummarizerKind::Truncation => queue.evict(
                    &mut TruncationSummarizer::new(tokenizer.clone()),
                    &mut state.factory,
                    need,
                    false,
                )?,
                SummarizerKind::Processor => queue.evict(
                    &mut ProcessorSummarizer {
                        processor: &mut **processor,
                    },
                    &mut state.factory,
                    need,
                    false,
                )?,
            };
            if !ev.evicted.is_empty() {
                *evictions += 1;
            }
        }
        if let Some(warning) = queue.enqueue(msg, &mut state.factory)? {
            state.recall.insert(warning)?;
        }
        state.clock = Some(ts);
        Ok(id)
    }

    /// Runs a validated call. Failures become `ERROR` results, never step errors.
    fn execute(&mut self, call: &ValidatedCall, ts: DateTime<Utc>) -> (Value, Option<String>) {
        let mut outbound = None;
        let result = self.dispatch(call, ts, &mut outbound);
        let body = match result {
            Ok(v) => json!({"status": "OK", "function": call.name, "result": v}),
            Err(e) => json!({"status": "ERROR", "function": call.name, "error": e}),
        };
        (body, outbound)
    }

    fn dispatch(
        &mut self,
        call: &ValidatedCall,
        ts: DateTime<Utc>,
        outbound: &mut Option<String>,
    ) -> Result<Value, String> {
        let s = |k: &str| call.str(k).unwrap_or_default().to_string();
        let page = || -> Result<usize, String> {
            match call.int("page") {
                None => Ok(0),
                Some(p) if p >= 0 => Ok(p as usize),
                Some(p) => Err(format!("InvalidPage: page must be 0 or more, got {p}")),
            }
        };
        let size = self.state.config.page_size;
        let st = &mut self.state;
        match call.name.as_str() {
            names::SEND_MESSAGE => {
                *outbound = Some(s("content"));
                Ok(json!("message sent"))
            }
            names::WORKING_CONTEXT_APPEND => st
                .context
                .working
                .append(&s("content"))
                .map(|_| json!("appended"))
                .map_err(|e| e.to_string()),
            names::WORKING_CONTEXT_REPLACE => st
                .context
                .working
                .replace(&s("old"), &s("new"))
                .map(|_| json!("replaced"))
                .map_err(|e| e.to_string()),
            names::RECALL_SEARCH_TEXT => {
                let p = st
                    .recall
                    .search_text(&s("query"), page()?, size)
                    .map_err(|e| e.to_string())?;
                Ok(page_json(p.map(|m| message_json(&m))))
            }
            names::RECALL_SEARCH_DATE => {
                let start = parse_instant(&s("start"), false)?;
                let end = parse_instant(&s("end"), true)?;
                let p = st
                    .recall
                    .search_date(start, end, page()?, size)
                    .map_err(|e| e.to_string())?;
                Ok(page_json(p.map(|m| message_json(&m))))
            }
            names::ARCHIVAL_INSERT => st
                .archival
                .insert(&s("content"), ts)
                .map(|id| json!({"entry_id": id.to_string()}))
                .map_err(|e| e.to_string()),
            names::ARCHIVAL_SEARCH => {
                let p = st
                    .archival
                    .search(&s("query"), page()?, size)
                    .map_err(|e| e.to_string())?;
                Ok(page_json(p.map(|h| {
                    json!({"id": h.id.to_string(), "score": (h.score * 1e6).round() / 1e6, "text": h.text})
                })))
            }
            names::PAUSE_HEARTBEATS => {
                let minutes = call.int("minutes").unwrap_or_default();
                if !(1..=MAX_PAUSE_MINUTES).contains(&minutes) {
                    return Err(format!(
                        "InvalidDuration: minutes must be between 1 and {MAX_PAUSE_MINUTES}"
                    ));
                }
                let until = ts + Duration::minutes(minutes);
                st.heartbeats_paused_until = Some(until);
                Ok(json!(format!(
                    "heartbeats paused until {}",
                    format_timestamp(&until)
                )))
            }
            other => Err(format!("NotImplemented: {other}")),
        }
    }
}

fn message_json(m: &Message) -> Value {
    json!({
        "id": m.id.0,
        "timestamp": format_timestamp(&m.timestamp),
        "role": m.role.as_str(),
        "text": m.text,
    })
}

fn page_json(p: crate::store::Page<Value>) -> Value {
    json!({
        "page": p.page_index,
        "total_matches": p.total_matches,
        "has_more": p.has_more,
        "items": p.items,
    })
}

/// `YYYY-MM-DD` (start or end of that day) or RFC 3339.
pub fn parse_instant(text: &str, end_of_day: bool) -> Result<DateTime<Utc>, String> {
    if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
        let t = if end_of_day {
            d.and_hms_milli_opt(23, 59, 59, 999)
        } else {
            d.and_hms_opt(0, 0, 0)
        };
        return Ok(t.expect("valid time of day").and_utc());
    }
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| format!("InvalidDate: {text:?} is neither YYYY-MM-DD nor RFC 3339"))
}
