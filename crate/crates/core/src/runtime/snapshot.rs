//! Agent snapshots: a directory holding `agent.json` (config, working
//! context, queue and counters), `recall.jsonl` (one message per line) and
//! `archival.jsonl` (one entry per line; vectors are recomputed on load).

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::context::MainContext;
use crate::embed::SharedEmbedder;
use crate::message::{Message, MessageFactory};
use crate::queue::QueueState;
use crate::store::{ArchivalId, ArchivalStore, RecallStore};
use crate::tokens::default_tokenizer;
use crate::working::WorkingContext;

use super::agent::{
    build_parts, default_embedder, default_processor, Agent, AgentError, AgentState,
};
use super::config::AgentConfig;
use super::processor::Processor;

pub const AGENT_FILE: &str = "agent.json";
pub const RECALL_FILE: &str = "recall.jsonl";
pub const ARCHIVAL_FILE: &str = "archival.jsonl";
const FORMAT: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    format: u32,
    config: AgentConfig,
    working_context: String,
    queue_summary: Option<Message>,
    queue: Vec<Message>,
    warned: bool,
    next_message_id: u64,
    steps: u64,
    last_event_at: Option<DateTime<Utc>>,
    heartbeats_paused_until: Option<DateTime<Utc>>,
    clock: Option<DateTime<Utc>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchivalLine {
    id: ArchivalId,
    text: String,
    created_at: DateTime<Utc>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AgentError + '_ {
    move |source| AgentError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn corrupt(file: &str, detail: impl ToString) -> AgentError {
    AgentError::CorruptSnapshot {
        file: file.into(),
        detail: detail.to_string(),
    }
}

/// Writes via a temporary file so a crash never leaves a half-written file
/// under the final name.
fn write_atomic(dir: &Path, name: &str, body: &[u8]) -> Result<(), AgentError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let dst = dir.join(name);
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(body).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, &dst).map_err(io_err(&dst))
}

fn jsonl<T: Serialize>(items: impl Iterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("snapshot records serialize");
        out.push(b'\n');
    }
    out
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<Vec<T>, AgentError> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| corrupt(name, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

impl Agent {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), AgentError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let st = &self.state;
        let file = AgentFile {
            format: FORMAT,
            config: st.config.clone(),
            working_context: st.context.working.text().to_string(),
            queue_summary: st.context.queue.summary().cloned(),
            queue: st.context.queue.messages().cloned().collect(),
            warned: st.context.queue.warned(),
            next_message_id: st.factory.next_id(),
            steps: st.steps,
            last_event_at: st.last_event_at,
            heartbeats_paused_until: st.heartbeats_paused_until,
            clock: st.clock,
        };
        let body = serde_json::to_vec_pretty(&file).expect("agent file serializes");
        write_atomic(dir, RECALL_FILE, &jsonl(st.recall.messages()))?;
        write_atomic(
            dir,
            ARCHIVAL_FILE,
            &jsonl(st.archival.entries().iter().map(|e| ArchivalLine {
                id: e.id,
                text: e.text.clone(),
                created_at: e.created_at,
            })),
        )?;
        // Written last: its presence marks a complete snapshot.
        write_atomic(dir, AGENT_FILE, &body)
    }

    /// Loads a snapshot with backends built from its config bindings.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, AgentError> {
        let dir = dir.as_ref();
        let config = read_config(dir)?;
        let processor = default_processor(&config.processor)?;
        let embedder = default_embedder(&config.embedder)?;
        Self::load_with(dir, processor, embedder)
    }

    pub fn load_with(
        dir: impl AsRef<Path>,
        processor: Box<dyn Processor>,
        embedder: SharedEmbedder,
    ) -> Result<Self, AgentError> {
        let dir = dir.as_ref();
        let file = read_agent_file(dir)?;
        if file.format != FORMAT {
            return Err(corrupt(
                AGENT_FILE,
                format!("unsupported format {}", file.format),
            ));
        }
        let tokenizer = default_tokenizer();
        let built = build_parts(&file.config, &tokenizer)?;

        let working = WorkingContext::with_text(
            file.working_context,
            built.budget.working_cap,
            tokenizer.clone(),
        )
        .map_err(|e| corrupt(AGENT_FILE, format!("working_context: {e}")))?;
        let queue = QueueState::restore(
            built.budget.queue_cap,
            file.config.ratios(),
            tokenizer.clone(),
            file.queue_summary,
            file.queue,
            file.warned,
        )
        .map_err(|e| corrupt(AGENT_FILE, format!("queue: {e}")))?;

        let mut recall = RecallStore::new();
        for m in read_jsonl::<Message>(dir, RECALL_FILE)? {
            if m.id.0 >= file.next_message_id {
                return Err(corrupt(
                    RECALL_FILE,
                    format!("message {} is beyond next_message_id", m.id),
                ));
            }
            recall.insert(m).map_err(|e| corrupt(RECALL_FILE, e))?;
        }
        let mut archival = ArchivalStore::new(embedder);
        for e in read_jsonl::<ArchivalLine>(dir, ARCHIVAL_FILE)? {
            archival
                .restore(e.id, e.text, e.created_at)
                .map_err(|e| corrupt(ARCHIVAL_FILE, e))?;
        }

        let state = AgentState {
            budget: built.budget,
            context: MainContext::new(built.instructions, working, queue),
            recall,
            archival,
            factory: MessageFactory::starting_at(file.next_message_id),
            steps: file.steps,
            last_event_at: file.last_event_at,
            heartbeats_paused_until: file.heartbeats_paused_until,
            clock: file.clock,
            config: file.config,
        };
        Ok(Agent {
            state,
            processor,
            registry: built.registry,
            tokenizer,
        })
    }
}

fn read_agent_file(dir: &Path) -> Result<AgentFile, AgentError> {
    let path = dir.join(AGENT_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| corrupt(AGENT_FILE, e))
}

/// The config stored in a snapshot, without loading the stores.
pub fn read_config(dir: impl AsRef<Path>) -> Result<AgentConfig, AgentError> {
    Ok(read_agent_file(dir.as_ref())?.config)
}
