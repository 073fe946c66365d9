//! Token accounting.
//!
//! The runtime never talks to a model tokenizer directly. Everything that
//! needs a size goes through [`Tokenizer`], and the default implementation is
//! a character heuristic: one token per five characters, rounded up. That is
//! the ratio commonly quoted for English chat traffic (about 250 characters
//! for a 50 token message) and it keeps every budget decision deterministic.

use std::fmt;
use std::sync::Arc;

/// Counts tokens for a piece of text.
///
/// Implementations must be deterministic. Budget arithmetic in the queue and
/// in [`crate::context::MainContext::compose`] additionally assumes the count
/// is monotone in prefix length and subadditive under concatenation
/// (`count(a + b) <= count(a) + count(b)`); the heuristic satisfies both.
pub trait Tokenizer: Send + Sync + fmt::Debug {
    fn count(&self, text: &str) -> usize;
}

pub type SharedTokenizer = Arc<dyn Tokenizer>;

pub const CHARS_PER_TOKEN: usize = 5;

/// `ceil(chars / 5)` over Unicode scalar values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HeuristicTokenizer;

impl Tokenizer for HeuristicTokenizer {
    fn count(&self, text: &str) -> usize {
        text.chars().count().div_ceil(CHARS_PER_TOKEN)
    }
}

pub fn default_tokenizer() -> SharedTokenizer {
    Arc::new(HeuristicTokenizer)
}

/// Token count under the default heuristic.
pub fn count_tokens(text: &str) -> usize {
    HeuristicTokenizer.count(text)
}

/// Longest prefix of `text` (on a char boundary) whose count is at most `cap`.
pub fn truncate_to_tokens<'a>(tokenizer: &dyn Tokenizer, text: &'a str, cap: usize) -> &'a str {
    if tokenizer.count(text) <= cap {
        return text;
    }
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    // bounds[k] is the byte offset after k chars; find the largest k that fits.
    let (mut lo, mut hi) = (0usize, bounds.len() - 1);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if tokenizer.count(&text[..bounds[mid]]) <= cap {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    &text[..bounds[lo]]
}
