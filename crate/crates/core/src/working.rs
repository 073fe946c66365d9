//! The writable scratchpad inside main context.
//!
//! Working context is one flat block of text. The processor edits it with
//! two functions: append a fragment on a new line, or replace the first
//! exact occurrence of a string. Every mutation either keeps the block within
//! its token cap or fails and leaves the block untouched.

use thiserror::Error;

use crate::tokens::SharedTokenizer;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkingContextError {
    #[error("EmptyFragment: nothing to append")]
    EmptyFragment,
    #[error("EmptyPattern: the text to replace must not be empty")]
    EmptyPattern,
    #[error("NotFound: {0:?} does not occur in working context")]
    NotFound(String),
    #[error(
        "CapacityExceeded: working context would use {needed} of {cap} tokens; \
         move older facts to archival storage with archival_insert before adding more"
    )]
    CapacityExceeded { needed: usize, cap: usize },
}

#[derive(Debug, Clone)]
pub struct WorkingContext {
    text: String,
    cap: usize,
    tokenizer: SharedTokenizer,
}

impl WorkingContext {
    pub fn new(cap: usize, tokenizer: SharedTokenizer) -> Self {
        WorkingContext {
            text: String::new(),
            cap,
            tokenizer,
        }
    }

    /// Restores a saved block. Fails if the text no longer fits the cap.
    pub fn with_text(
        text: impl Into<String>,
        cap: usize,
        tokenizer: SharedTokenizer,
    ) -> Result<Self, WorkingContextError> {
        let text = text.into();
        let needed = tokenizer.count(&text);
        if needed > cap {
            return Err(WorkingContextError::CapacityExceeded { needed, cap });
        }
        Ok(WorkingContext {
            text,
            cap,
            tokenizer,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn tokens(&self) -> usize {
        self.tokenizer.count(&self.text)
    }

    pub fn append(&mut self, fragment: &str) -> Result<(), WorkingContextError> {
        if fragment.is_empty() {
            return Err(WorkingContextError::EmptyFragment);
        }
        let candidate = if self.text.is_empty() {
            fragment.to_string()
        } else {
            format!("{}\n{}", self.text, fragment)
        };
        self.commit(candidate)
    }

    pub fn replace(&mut self, old: &str, new: &str) -> Result<(), WorkingContextError> {
        if old.is_empty() {
            return Err(WorkingContextError::EmptyPattern);
        }
        let Some(at) = self.text.find(old) else {
            return Err(WorkingContextError::NotFound(old.to_string()));
        };
        let mut candidate = String::with_capacity(self.text.len() + new.len());
        candidate.push_str(&self.text[..at]);
        candidate.push_str(new);
        candidate.push_str(&self.text[at + old.len()..]);
        self.commit(candidate)
    }

    fn commit(&mut self, candidate: String) -> Result<(), WorkingContextError> {
        let needed = self.tokenizer.count(&candidate);
        if needed > self.cap {
            return Err(WorkingContextError::CapacityExceeded {
                needed,
                cap: self.cap,
            });
        }
        self.text = candidate;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokens::default_tokenizer;
    use proptest::prelude::*;

    fn wc(cap: usize) -> WorkingContext {
        WorkingContext::new(cap, default_tokenizer())
    }

    #[test]
    fn append_to_empty() {
        let mut w = wc(100);
        w.append("Birthday: 11th October.").unwrap();
        assert_eq!(w.text(), "Birthday: 11th October.");
        w.append("Favorite cake: Chocolate Lava made by mom Brenda")
            .unwrap();
        assert_eq!(
            w.text(),
            "Birthday: 11th October.\nFavorite cake: Chocolate Lava made by mom Brenda"
        );
    }

    #[test]
    fn append_empty_fragment() {
        let mut w = wc(100);
        assert_eq!(w.append(""), Err(WorkingContextError::EmptyFragment));
    }

    #[test]
    fn append_oversize_leaves_state() {
        let mut w = wc(5);
        w.append("short").unwrap();
        let err = w.append(&"x".repeat(100)).unwrap_err();
        assert!(matches!(
            err,
            WorkingContextError::CapacityExceeded { cap: 5, .. }
        ));
        assert!(err.to_string().contains("archival"));
        assert_eq!(w.text(), "short");
    }

    #[test]
    fn replace_correction() {
        let mut w = wc(100);
        w.append("Name: Chad").unwrap();
        w.append("I watch horror movies.").unwrap();
        w.replace("I watch horror movies.", "I like romantic comedies.")
            .unwrap();
        assert!(w.text().contains("I like romantic comedies."));
        assert!(!w.text().contains("I watch horror movies."));
    }

    #[test]
    fn replace_identity() {
        let mut w = wc(100);
        w.append("a b c").unwrap();
        w.replace("b", "b").unwrap();
        assert_eq!(w.text(), "a b c");
    }

    #[test]
    fn replace_missing() {
        let mut w = wc(100);
        w.append("a b c").unwrap();
        assert_eq!(
            w.replace("zzz", "y"),
            Err(WorkingContextError::NotFound("zzz".into()))
        );
        assert_eq!(w.text(), "a b c");
        assert_eq!(w.replace("", "y"), Err(WorkingContextError::EmptyPattern));
    }

    #[test]
    fn replace_over_cap_is_atomic() {
        let mut w = wc(2);
        w.append("abc").unwrap();
        assert!(w.replace("abc", &"z".repeat(20)).is_err());
        assert_eq!(w.text(), "abc");
    }

    proptest! {
        #[test]
        fn mutations_keep_cap_or_fail_atomically(
            ops in proptest::collection::vec((any::<bool>(), "[a-c ]{0,12}", "[a-c ]{0,12}"), 1..30),
            cap in 1usize..20,
        ) {
            let mut w = wc(cap);
            for (is_append, x, y) in ops {
                let before = w.text().to_string();
                let r = if is_append { w.append(&x) } else { w.replace(&x, &y) };
                prop_assert!(w.tokens() <= cap);
                if r.is_err() {
                    prop_assert_eq!(w.text(), before.as_str());
                }
            }
        }

        #[test]
        fn replace_removes_exactly_one(text in "[ab]{1,20}", old in "[ab]{1,3}", new in "c{1,3}") {
            // `new` shares no characters with `old`, so no occurrence can
            // straddle or sit inside the replacement.
            let mut w = wc(1000);
            w.append(&text).unwrap();
            let before = w.text().matches(old.as_str()).count();
            if w.replace(&old, &new).is_ok() {
                prop_assert_eq!(w.text().matches(old.as_str()).count(), before - 1);
            } else {
                prop_assert_eq!(before, 0);
            }
        }

        #[test]
        fn append_then_identity_replace(frag in "[a-z ]{1,16}") {
            let mut w = wc(1000);
            w.append(&frag).unwrap();
            let snapshot = w.text().to_string();
            w.replace(&frag, &frag).unwrap();
            prop_assert_eq!(w.text(), snapshot.as_str());
        }
    }
}
