use serde::{Deserialize, Serialize};

use crate::budget::DEFAULT_WORKING_FRACTION;
use crate::embed::DEFAULT_DIM;
use crate::queue::{
    QueueRatios, DEFAULT_EVICT_TARGET_RATIO, DEFAULT_SUMMARY_RATIO, DEFAULT_WARN_RATIO,
};
use crate::store::DEFAULT_PAGE_SIZE;

use super::processor::ScriptEntry;

pub const DEFAULT_MAX_TOKENS: usize = 4096;
pub const DEFAULT_MAX_CHAIN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarizerKind {
    /// First sentence of each evicted message.
    #[default]
    Truncation,
    /// Ask the agent's own processor, falling back to truncation.
    Processor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessorBinding {
    Scripted {
        #[serde(default)]
        script: Vec<ScriptEntry>,
    },
    /// Resolved by the host; the core crate performs no network I/O.
    Http { endpoint: String, model: String },
}

impl Default for ProcessorBinding {
    fn default() -> Self {
        ProcessorBinding::Scripted { script: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderBinding {
    HashedBow {
        dim: usize,
    },
    Http {
        endpoint: String,
        model: String,
        dim: usize,
    },
}

impl Default for EmbedderBinding {
    fn default() -> Self {
        EmbedderBinding::HashedBow { dim: DEFAULT_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub name: String,
    /// Processor context window in tokens.
    pub max_tokens: usize,
    pub working_fraction: f64,
    pub max_chain: usize,
    pub warn_ratio: f64,
    pub evict_target_ratio: f64,
    pub summary_ratio: f64,
    pub page_size: usize,
    pub tick_interval_secs: Option<u64>,
    /// Restricts the default function set; `None` enables all of it.
    pub functions: Option<Vec<String>>,
    pub summarizer: SummarizerKind,
    pub processor: ProcessorBinding,
    pub embedder: EmbedderBinding,
    /// Replaces the built-in preamble. The function schema is still appended.
    pub system_instructions: Option<String>,
    /// Starting working context, e.g. a persona and facts about the user.
    pub working_context: String,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            name: "agent".into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            working_fraction: DEFAULT_WORKING_FRACTION,
            max_chain: DEFAULT_MAX_CHAIN,
            warn_ratio: DEFAULT_WARN_RATIO,
            evict_target_ratio: DEFAULT_EVICT_TARGET_RATIO,
            summary_ratio: DEFAULT_SUMMARY_RATIO,
            page_size: DEFAULT_PAGE_SIZE,
            tick_interval_secs: None,
            functions: None,
            summarizer: SummarizerKind::default(),
            processor: ProcessorBinding::default(),
            embedder: EmbedderBinding::default(),
            system_instructions: None,
            working_context: String::new(),
        }
    }
}

impl AgentConfig {
    pub fn ratios(&self) -> QueueRatios {
        QueueRatios {
            warn: self.warn_ratio,
            evict_target: self.evict_target_ratio,
            summary: self.summary_ratio,
        }
    }

    pub fn scripted(script: Vec<ScriptEntry>) -> Self {
        AgentConfig {
            processor: ProcessorBinding::Scripted { script },
            ..Default::default()
        }
    }
}
