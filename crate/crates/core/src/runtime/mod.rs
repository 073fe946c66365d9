//! The agent event loop, its backends and snapshots.

mod agent;
mod config;
mod event;
mod processor;
mod snapshot;

pub use agent::{
    default_embedder, default_processor, parse_instant, Agent, AgentError, AgentState, StepError,
    StepTrace, TraceEntry, CHAIN_LIMIT_NOTE,
};
pub use config::{
    AgentConfig, EmbedderBinding, ProcessorBinding, SummarizerKind, DEFAULT_MAX_CHAIN,
    DEFAULT_MAX_TOKENS,
};
pub use event::{Event, EventKind};
pub use processor::{
    Processor, ProcessorError, ProcessorSummarizer, ScriptEntry, ScriptedProcessor, EXHAUSTED_REPLY,
};
pub use snapshot::{read_config, AGENT_FILE, ARCHIVAL_FILE, RECALL_FILE};
