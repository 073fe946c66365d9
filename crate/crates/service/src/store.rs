//! On-disk agent directory shared by the server and the CLI.
//!
//! ```text
//! <data_dir>/agents/<agent_id>/descriptor.json
//!                             /agent.json, recall.jsonl, archival.jsonl
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;
use vctx_core::runtime::{
    read_config, Agent, AgentConfig, AgentError, EmbedderBinding, ProcessorBinding,
};

use crate::backends::build_backends;
use crate::config::HttpSettings;

pub const DESCRIPTOR_FILE: &str = "descriptor.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub max_tokens: usize,
    pub processor: String,
    pub embedder: String,
    pub functions: usize,
}

impl ConfigSummary {
    pub fn of(agent: &Agent) -> Self {
        let c = agent.config();
        ConfigSummary {
            max_tokens: c.max_tokens,
            processor: match &c.processor {
                ProcessorBinding::Scripted { .. } => "scripted".into(),
                ProcessorBinding::Http { model, .. } => format!("http:{model}"),
            },
            embedder: match &c.embedder {
                EmbedderBinding::HashedBow { dim } => format!("hashed_bow:{dim}"),
                EmbedderBinding::Http { model, .. } => format!("http:{model}"),
            },
            functions: agent.registry().len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDescriptor {
    pub agent_id: String,
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub config: ConfigSummary,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("NotFound: no agent {0}")]
    NotFound(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CorruptDescriptor: {path}: {detail}")]
    CorruptDescriptor { path: String, detail: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
}

fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> StoreError {
    let context = context.into();
    move |source| StoreError::Io { context, source }
}

/// Agent ids are UUIDs; anything else cannot name a directory we created.
fn valid_id(id: &str) -> bool {
    Uuid::parse_str(id).is_ok()
}

#[derive(Debug, Clone)]
pub struct AgentStore {
    root: PathBuf,
    settings: HttpSettings,
}

impl AgentStore {
    pub fn new(data_dir: impl Into<PathBuf>, settings: HttpSettings) -> Self {
        AgentStore {
            root: data_dir.into().join("agents"),
            settings,
        }
    }

    pub fn settings(&self) -> &HttpSettings {
        &self.settings
    }

    pub fn dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn exists(&self, id: &str) -> bool {
        valid_id(id) && self.dir(id).join(DESCRIPTOR_FILE).is_file()
    }

    /// Builds a fresh agent and persists it with a new id.
    pub fn create(
        &self,
        name: &str,
        mut config: AgentConfig,
    ) -> Result<(AgentDescriptor, Agent), StoreError> {
        config.name = name.to_string();
        let (processor, embedder) = build_backends(&config, &self.settings)?;
        let agent = Agent::with_backends(config, processor, embedder)?;
        let descriptor = AgentDescriptor {
            agent_id: Uuid::new_v4().to_string(),
            name: name.to_string(),
            created_at: Utc::now(),
            config: ConfigSummary::of(&agent),
        };
        self.save(&descriptor, &agent)?;
        Ok((descriptor, agent))
    }

    /// Writes the snapshot, then the descriptor that marks the directory live.
    pub fn save(&self, descriptor: &AgentDescriptor, agent: &Agent) -> Result<(), StoreError> {
        let dir = self.dir(&descriptor.agent_id);
        agent.save(&dir)?;
        let json = serde_json::to_vec_pretty(descriptor).expect("descriptor serializes");
        let tmp = dir.join(format!("{DESCRIPTOR_FILE}.tmp"));
        fs::write(&tmp, json).map_err(io(format!("write {}", tmp.display())))?;
        fs::rename(&tmp, dir.join(DESCRIPTOR_FILE)).map_err(io(format!("rename {}", tmp.display())))
    }

    pub fn descriptor(&self, id: &str) -> Result<AgentDescriptor, StoreError> {
        if !self.exists(id) {
            return Err(StoreError::NotFound(id.to_string()));
        }
        let path = self.dir(id).join(DESCRIPTOR_FILE);
        let text = fs::read_to_string(&path).map_err(io(format!("read {}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| StoreError::CorruptDescriptor {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    pub fn load(&self, id: &str) -> Result<(AgentDescriptor, Agent), StoreError> {
        let descriptor = self.descriptor(id)?;
        let dir = self.dir(id);
        let config = read_config(&dir)?;
        let (processor, embedder) = build_backends(&config, &self.settings)?;
        Ok((descriptor, Agent::load_with(&dir, processor, embedder)?))
    }

    /// Descriptors sorted by creation time, then id.
    pub fn list(&self) -> Result<Vec<AgentDescriptor>, StoreError> {
        let entries = match fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io(format!("read {}", self.root.display()))(e)),
        };
        let mut out = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io(format!("read {}", self.root.display())))?;
            let id = entry.file_name().to_string_lossy().into_owned();
            if self.exists(&id) {
                out.push(self.descriptor(&id)?);
            }
        }
        out.sort_by(|a, b| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| a.agent_id.cmp(&b.agent_id))
        });
        Ok(out)
    }

    pub fn remove(&self, id: &str) -> Result<(), StoreError> {
        if !self.exists(id) {
            return Err(StoreError::NotFound(id.to_string()));
        }
        let dir = self.dir(id);
        fs::remove_dir_all(&dir).map_err(io(format!("remove {}", dir.display())))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}
