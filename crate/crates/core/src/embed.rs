//! Text embeddings for archival search.
//!
//! The built-in [`HashedBowEmbedder`] hashes lowercase alphanumeric words into
//! a fixed number of buckets and L2-normalizes the counts. It has no notion
//! of meaning, but it is deterministic, needs no model, and ranks texts by
//! shared vocabulary, which is enough to exercise every retrieval path.
//! External embedding services plug in through the same trait.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding backend failed: {0}")]
    Backend(String),
    #[error("embedding has dimension {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
}

pub trait Embedder: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    /// Returns a unit-norm vector of length [`Embedder::dim`].
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError>;
}

pub type SharedEmbedder = Arc<dyn Embedder>;

pub const DEFAULT_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBowEmbedder {
    dim: usize,
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        HashedBowEmbedder { dim: DEFAULT_DIM }
    }
}

impl HashedBowEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashedBowEmbedder { dim }
    }

    pub fn bucket(&self, word: &str) -> usize {
        (fnv1a(word.as_bytes()) % self.dim as u64) as usize
    }
}

/// Lowercased runs of alphanumeric characters.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Embedder for HashedBowEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut counts = vec![0f64; self.dim];
        let mut any = false;
        for w in words(text) {
            counts[self.bucket(&w)] += 1.0;
            any = true;
        }
        if !any {
            // Punctuation or whitespace only: the raw text is the single term.
            counts[self.bucket(text)] += 1.0;
        }
        Ok(normalize(&counts))
    }
}

/// L2-normalizes in f64 before narrowing. Zero vectors stay zero.
pub fn normalize(v: &[f64]) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.iter().map(|_| 0.0).collect();
    }
    v.iter().map(|x| (x / norm) as f32).collect()
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| f64::from(*x) * f64::from(*y))
        .sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn deterministic() {
        let e = HashedBowEmbedder::default();
        let a = e.embed("the quick brown fox").unwrap();
        let b = e.embed("the quick brown fox").unwrap();
        assert_eq!(a, b);
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unit_norm() {
        let e = HashedBowEmbedder::default();
        for t in ["a", "hello world hello", "!!!", "   ", "Ünïcödé wörds"] {
            let v = e.embed(t).unwrap();
            let n: f64 = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6, "{t:?} -> {n}");
        }
        assert_eq!(e.embed(""), Err(EmbedError::EmptyText));
    }

    #[test]
    fn disjoint_vocabulary_is_orthogonal() {
        let e = HashedBowEmbedder::default();
        let a = "coffee morning";
        let b = "sailing regatta";
        let ba: BTreeSet<_> = words(a).map(|w| e.bucket(&w)).collect();
        let bb: BTreeSet<_> = words(b).map(|w| e.bucket(&w)).collect();
        assert!(ba.is_disjoint(&bb), "fixture must be collision free");
        let c = cosine(&e.embed(a).unwrap(), &e.embed(b).unwrap());
        assert_eq!(c, 0.0);
    }

    #[test]
    fn partial_overlap_hand_computed() {
        // {tea, coffee} vs {tea, sailing}: one shared bucket of two each,
        // so cosine = 1 / (sqrt(2) * sqrt(2)) = 0.5 when buckets are distinct.
        let e = HashedBowEmbedder::default();
        let buckets: BTreeSet<_> = ["tea", "coffee", "sailing"]
            .iter()
            .map(|w| e.bucket(w))
            .collect();
        assert_eq!(buckets.len(), 3);
        let c = cosine(
            &e.embed("tea coffee").unwrap(),
            &e.embed("tea sailing").unwrap(),
        );
        assert!((c - 0.5).abs() < 1e-6);
    }

    #[test]
    fn case_and_punctuation_fold() {
        let e = HashedBowEmbedder::default();
        assert_eq!(
            e.embed("Hello, World!").unwrap(),
            e.embed("hello world").unwrap()
        );
    }
}
