use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Page;
use crate::embed::{cosine, EmbedError, SharedEmbedder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArchivalId(pub u64);

impl fmt::Display for ArchivalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArchivalError {
    #[error("EmptyText: archival entries must not be empty")]
    EmptyText,
    #[error("EmptyQuery: search text must not be empty")]
    EmptyQuery,
    #[error("IdCollision: archival entry {0} already exists")]
    IdCollision(ArchivalId),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchivalEntry {
    pub id: ArchivalId,
    pub text: String,
    pub vector: Vec<f32>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchivalHit {
    pub id: ArchivalId,
    pub text: String,
    pub score: f64,
}

/// Read-write datastore searched by embedding similarity.
///
/// Search is exhaustive cosine over every entry: at desk scale that is fast
/// and exact, and it makes ranking order fully reproducible.
#[derive(Debug, Clone)]
pub struct ArchivalStore {
    entries: Vec<ArchivalEntry>,
    next_id: u64,
    embedder: SharedEmbedder,
}

impl ArchivalStore {
    pub fn new(embedder: SharedEmbedder) -> Self {
        ArchivalStore {
            entries: Vec::new(),
            next_id: 0,
            embedder,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn entries(&self) -> &[ArchivalEntry] {
        &self.entries
    }

    pub fn embedder(&self) -> &SharedEmbedder {
        &self.embedder
    }

    pub fn insert(
        &mut self,
        text: &str,
        created_at: DateTime<Utc>,
    ) -> Result<ArchivalId, ArchivalError> {
        let id = ArchivalId(self.next_id);
        self.restore(id, text.to_string(), created_at)?;
        Ok(id)
    }

    /// Re-inserts a saved entry under its original id, recomputing the vector.
    pub fn restore(
        &mut self,
        id: ArchivalId,
        text: String,
        created_at: DateTime<Utc>,
    ) -> Result<(), ArchivalError> {
        if text.is_empty() {
            return Err(ArchivalError::EmptyText);
        }
        if self.entries.iter().any(|e| e.id == id) {
            return Err(ArchivalError::IdCollision(id));
        }
        let vector = self.embedder.embed(&text)?;
        self.entries.push(ArchivalEntry {
            id,
            text,
            vector,
            created_at,
        });
        self.next_id = self.next_id.max(id.0 + 1);
        Ok(())
    }

    /// Every entry ranked by cosine similarity to the query, best first;
    /// ties keep insertion order.
    pub fn rank(&self, query: &str) -> Result<Vec<ArchivalHit>, ArchivalError> {
        if query.is_empty() {
            return Err(ArchivalError::EmptyQuery);
        }
        let q = self.embedder.embed(query)?;
        let mut hits: Vec<ArchivalHit> = self
            .entries
            .iter()
            .map(|e| ArchivalHit {
                id: e.id,
                text: e.text.clone(),
                score: cosine(&q, &e.vector),
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(hits)
    }

    pub fn search(
        &self,
        query: &str,
        page: usize,
        page_size: usize,
    ) -> Result<Page<ArchivalHit>, ArchivalError> {
        Ok(Page::slice(self.rank(query)?, page, page_size))
    }
}
