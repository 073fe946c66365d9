//! Core of a tiered-memory agent runtime.
//!
//! The processor sees a bounded main context: system instructions, a
//! writable working context and a FIFO queue of recent messages. Everything
//! else lives in external stores (recall and archival) that the processor
//! reaches only through function calls.

pub mod budget;
pub mod context;
pub mod embed;
pub mod functions;
pub mod message;
pub mod queue;
pub mod runtime;
pub mod store;
pub mod tokens;
pub mod working;

pub use budget::{BudgetError, TokenBudget};
pub use context::{ComposeError, MainContext};
pub use embed::{Embedder, HashedBowEmbedder, SharedEmbedder};
pub use message::{Message, MessageFactory, MessageId, Role};
pub use queue::{QueueError, QueueRatios, QueueState, Summarizer, TruncationSummarizer};
pub use runtime::{
    Agent, AgentConfig, Event, EventKind, Processor, ScriptEntry, ScriptedProcessor, StepTrace,
};
pub use store::{ArchivalStore, Page, RecallStore};
pub use tokens::{HeuristicTokenizer, SharedTokenizer, Tokenizer};
pub use working::{WorkingContext, WorkingContextError};
