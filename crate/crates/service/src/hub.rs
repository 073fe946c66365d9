//! Live agents, one worker thread each.
//!
//! Every operation on an agent is a job sent to its worker's inbox and run in
//! arrival order, so steps on one agent never overlap and nothing is
//! rejected for being busy. Workers own their backends, which keeps blocking
//! HTTP clients off the async runtime.

use std::collections::HashMap;
use std::sync::{mpsc, Arc, RwLock};

use serde::Serialize;
use tokio::sync::{broadcast, oneshot};
use vctx_core::runtime::{Agent, AgentConfig, TraceEntry};

use crate::store::{AgentDescriptor, AgentStore, StoreError};

type Job = Box<dyn FnOnce(&mut Agent) + Send>;

/// Entries buffered per subscriber before it starts missing some.
const FEED_CAPACITY: usize = 1024;

/// One trace entry as published on an agent's step feed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamEntry {
    pub agent_id: String,
    pub trace_id: String,
    pub step: u64,
    #[serde(flatten)]
    pub entry: TraceEntry,
}

impl StreamEntry {
    /// Unique per agent; clients dedupe on it.
    pub fn id(&self) -> String {
        format!("{}-{}", self.step, self.entry.seq)
    }
}

pub fn trace_id(step: u64) -> String {
    format!("step-{step}")
}

struct Live {
    descriptor: AgentDescriptor,
    jobs: mpsc::Sender<Job>,
    feed: broadcast::Sender<StreamEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum HubError {
    #[error("NotFound: no agent {0}")]
    NotFound(String),
    #[error("agent worker {0} stopped")]
    WorkerGone(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Handed to jobs so they can publish and persist.
#[derive(Clone)]
pub struct JobContext {
    pub descriptor: AgentDescriptor,
    pub feed: broadcast::Sender<StreamEntry>,
    pub store: AgentStore,
}

pub struct Hub {
    store: AgentStore,
    template: AgentConfig,
    agents: RwLock<HashMap<String, Arc<Live>>>,
}

fn spawn_worker<F>(
    init: F,
) -> oneshot::Receiver<Result<(AgentDescriptor, mpsc::Sender<Job>), StoreError>>
where
    F: FnOnce() -> Result<(AgentDescriptor, Agent), StoreError> + Send + 'static,
{
    let (ready_tx, ready_rx) = oneshot::channel();
    std::thread::spawn(move || {
        let (mut agent, descriptor) = match init() {
            Ok((d, a)) => (a, d),
            Err(e) => {
                let _ = ready_tx.send(Err(e));
                return;
            }
        };
        let (tx, rx) = mpsc::channel::<Job>();
        if ready_tx.send(Ok((descriptor, tx))).is_err() {
            return;
        }
        // Exits once every sender is gone and the inbox is drained.
        while let Ok(job) = rx.recv() {
            job(&mut agent);
        }
    });
    ready_rx
}

impl Hub {
    /// Loads every agent found in the store. Agents that fail to load are
    /// logged and skipped.
    pub async fn open(store: AgentStore, template: AgentConfig) -> Result<Hub, HubError> {
        let hub = Hub {
            store,
            template,
            agents: RwLock::new(HashMap::new()),
        };
        for d in hub.store.list()? {
            let store = hub.store.clone();
            let id = d.agent_id.clone();
            let ready = spawn_worker(move || store.load(&id));
            match ready.await {
                Ok(Ok((descriptor, jobs))) => hub.insert(descriptor, jobs),
                Ok(Err(e)) => tracing::warn!(agent = %d.agent_id, error = %e, "skipping agent"),
                Err(_) => tracing::warn!(agent = %d.agent_id, "agent worker exited during load"),
            }
        }
        Ok(hub)
    }

    pub fn store(&self) -> &AgentStore {
        &self.store
    }

    fn insert(&self, descriptor: AgentDescriptor, jobs: mpsc::Sender<Job>) {
        let (feed, _) = broadcast::channel(FEED_CAPACITY);
        let id = descriptor.agent_id.clone();
        let live = Arc::new(Live {
            descriptor,
            jobs,
            feed,
        });
        self.agents.write().unwrap().insert(id, live);
    }

    fn live(&self, id: &str) -> Result<Arc<Live>, HubError> {
        self.agents
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| HubError::NotFound(id.to_string()))
    }

    /// Creates and persists an agent. `config` defaults to the template.
    pub async fn create(
        &self,
        name: &str,
        config: Option<AgentConfig>,
    ) -> Result<AgentDescriptor, HubError> {
        let store = self.store.clone();
        let config = config.unwrap_or_else(|| self.template.clone());
        let name = name.to_string();
        let (descriptor, jobs) = spawn_worker(move || store.create(&name, config))
            .await
            .map_err(|_| HubError::WorkerGone("new".into()))??;
        self.insert(descriptor.clone(), jobs);
        Ok(descriptor)
    }

    pub fn list(&self) -> Vec<AgentDescriptor> {
        let mut out: Vec<_> = self
            .agents
            .read()
            .unwrap()
            .values()
            .map(|l| l.descriptor.clone())
            .collect();
        out.sort_by(|a, b| {
            a.created_at
                .cmp(&b.created_at)
                .then_with(|| a.agent_id.cmp(&b.agent_id))
        });
        out
    }

    pub fn descriptor(&self, id: &str) -> Result<AgentDescriptor, HubError> {
        Ok(self.live(id)?.descriptor.clone())
    }

    /// Queues `f` on the agent's worker and waits for its result.
    pub async fn run<T, F>(&self, id: &str, f: F) -> Result<T, HubError>
    where
        T: Send + 'static,
        F: FnOnce(&mut Agent, &JobContext) -> T + Send + 'static,
    {
        let live = self.live(id)?;
        let ctx = JobContext {
            descriptor: live.descriptor.clone(),
            feed: live.feed.clone(),
            store: self.store.clone(),
        };
        let (tx, rx) = oneshot::channel();
        let job: Job = Box::new(move |agent| {
            let _ = tx.send(f(agent, &ctx));
        });
        live.jobs
            .send(job)
            .map_err(|_| HubError::WorkerGone(id.to_string()))?;
        rx.await.map_err(|_| HubError::WorkerGone(id.to_string()))
    }

    pub fn subscribe(&self, id: &str) -> Result<broadcast::Receiver<StreamEntry>, HubError> {
        Ok(self.live(id)?.feed.subscribe())
    }

    /// Stops the worker after its queued jobs, then deletes the agent's files.
    pub async fn delete(&self, id: &str) -> Result<(), HubError> {
        let live = self
            .agents
            .write()
            .unwrap()
            .remove(id)
            .ok_or_else(|| HubError::NotFound(id.to_string()))?;
        let (tx, rx) = oneshot::channel::<()>();
        if live.jobs.send(Box::new(move |_| drop(tx))).is_ok() {
            let _ = rx.await;
        }
        drop(live);
        match self.store.remove(id) {
            Ok(()) | Err(StoreError::NotFound(_)) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }
}

/// Publishes each entry of a finished step, in order.
pub fn publish(ctx: &JobContext, trace: &vctx_core::runtime::StepTrace) {
    for entry in &trace.entries {
        // No subscribers is fine.
        let _ = ctx.feed.send(StreamEntry {
            agent_id: ctx.descriptor.agent_id.clone(),
            trace_id: trace_id(trace.step),
            step: trace.step,
            entry: entry.clone(),
        });
    }
}
