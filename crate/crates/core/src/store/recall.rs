use std::collections::HashSet;

use chrono::{DateTime, Utc};
use thiserror::Error;

use super::Page;
use crate::message::{Message, MessageId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecallError {
    #[error("OutOfOrder: message {id} at {at} is older than the last entry at {last}")]
    OutOfOrder {
        id: MessageId,
        at: DateTime<Utc>,
        last: DateTime<Utc>,
    },
    #[error("IdCollision: message {0} is already in recall storage")]
    IdCollision(MessageId),
    #[error("EmptyQuery: search text must not be empty")]
    EmptyQuery,
    #[error("InvalidRange: start {start} is after end {end}")]
    InvalidRange {
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecallEntry {
    pub message: Message,
    indexed_text: String,
}

/// Append-only log of every event the agent processed, verbatim.
#[derive(Debug, Clone, Default)]
pub struct RecallStore {
    entries: Vec<RecallEntry>,
    ids: HashSet<MessageId>,
}

impl RecallStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: MessageId) -> bool {
        self.ids.contains(&id)
    }

    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.entries.iter().map(|e| &e.message)
    }

    pub fn insert(&mut self, message: Message) -> Result<(), RecallError> {
        if self.ids.contains(&message.id) {
            return Err(RecallError::IdCollision(message.id));
        }
        if let Some(last) = self.entries.last() {
            if message.timestamp < last.message.timestamp {
                return Err(RecallError::OutOfOrder {
                    id: message.id,
                    at: message.timestamp,
                    last: last.message.timestamp,
                });
            }
        }
        self.ids.insert(message.id);
        let indexed_text = message.text.to_lowercase();
        self.entries.push(RecallEntry {
            message,
            indexed_text,
        });
        Ok(())
    }

    /// Case-insensitive substring search, most recent first.
    pub fn search_text(
        &self,
        query: &str,
        page: usize,
        page_size: usize,
    ) -> Result<Page<Message>, RecallError> {
        if query.is_empty() {
            return Err(RecallError::EmptyQuery);
        }
        let needle = query.to_lowercase();
        let hits: Vec<Message> = self
            .entries
            .iter()
            .rev()
            .filter(|e| e.indexed_text.contains(&needle))
            .map(|e| e.message.clone())
            .collect();
        Ok(Page::slice(hits, page, page_size))
    }

    /// Entries with `start <= timestamp <= end`, oldest first.
    pub fn search_date(
        &self,
        start: DateTime<Utc>,
        end: DateTime<Utc>,
        page: usize,
        page_size: usize,
    ) -> Result<Page<Message>, RecallError> {
        if start > end {
            return Err(RecallError::InvalidRange { start, end });
        }
        let hits: Vec<Message> = self
            .entries
            .iter()
            .filter(|e| e.message.timestamp >= start && e.message.timestamp <= end)
            .map(|e| e.message.clone())
            .collect();
        Ok(Page::slice(hits, page, page_size))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::{MessageFactory, Role};
    use crate::tokens::HeuristicTokenizer;
    use chrono::{Duration, TimeZone};

    fn t(day: u32, hour: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 10, day, hour, 0, 0).unwrap()
    }

    fn store_with(texts: &[(&str, DateTime<Utc>)]) -> RecallStore {
        let mut f = MessageFactory::default();
        let mut s = RecallStore::new();
        for (text, at) in texts {
            s.insert(f.make(Role::User, *text, *at, &HeuristicTokenizer))
                .unwrap();
        }
        s
    }

    #[test]
    fn insert_preserves_order() {
        let s = store_with(&[("a", t(1, 0)), ("b", t(1, 1)), ("c", t(1, 2))]);
        assert_eq!(s.len(), 3);
        let texts: Vec<_> = s.messages().map(|m| m.text.as_str()).collect();
        assert_eq!(texts, ["a", "b", "c"]);
    }

    #[test]
    fn duplicate_and_regressing() {
        let mut f = MessageFactory::default();
        let mut s = RecallStore::new();
        let m = f.make(Role::User, "x", t(2, 0), &HeuristicTokenizer);
        s.insert(m.clone()).unwrap();
        assert_eq!(s.insert(m), Err(RecallError::IdCollision(MessageId(0))));
        let old = f.make(Role::User, "y", t(1, 0), &HeuristicTokenizer);
        assert!(matches!(s.insert(old), Err(RecallError::OutOfOrder { .. })));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn text_search_finds_birthday() {
        let s = store_with(&[
            ("Hello Chad, welcome!", t(11, 9)),
            (
                "I took the day off today, my mom Brenda baked me a birthday cake. It was my favorite - chocolate lava!",
                t(11, 10),
            ),
            ("Happy Birthday, Chad!", t(11, 11)),
        ]);
        let page = s.search_text("Brenda", 0, 5).unwrap();
        assert_eq!(page.total_matches, 1);
        assert!(page.items[0].text.contains("birthday cake"));
        let page = s.search_text("BIRTHDAY", 0, 5).unwrap();
        assert_eq!(page.total_matches, 2);
        // Most recent first.
        assert_eq!(page.items[0].text, "Happy Birthday, Chad!");
    }

    #[test]
    fn no_match_is_empty() {
        let s = store_with(&[("a", t(1, 0))]);
        let page = s.search_text("zzz", 0, 5).unwrap();
        assert!(page.items.is_empty());
        assert_eq!(page.total_matches, 0);
        assert!(!page.has_more);
        assert_eq!(s.search_text("", 0, 5), Err(RecallError::EmptyQuery));
    }

    #[test]
    fn paging_matches_linear_scan() {
        let base = t(1, 0);
        let owned: Vec<(String, DateTime<Utc>)> = (0..30)
            .map(|i| {
                let text = if i % 5 < 2 {
                    format!("match {i}")
                } else {
                    format!("other {i}")
                };
                (text, base + Duration::minutes(i))
            })
            .collect();
        let refs: Vec<(&str, DateTime<Utc>)> =
            owned.iter().map(|(s, t)| (s.as_str(), *t)).collect();
        let s = store_with(&refs);
        let oracle: Vec<String> = owned
            .iter()
            .rev()
            .filter(|(t, _)| t.contains("match"))
            .map(|(t, _)| t.clone())
            .collect();
        assert_eq!(oracle.len(), 12);
        let pages: Vec<Page<Message>> = (0..3)
            .map(|p| s.search_text("MATCH", p, 5).unwrap())
            .collect();
        assert_eq!(
            pages.iter().map(|p| p.items.len()).collect::<Vec<_>>(),
            [5, 5, 2]
        );
        let union: Vec<String> = pages
            .into_iter()
            .flat_map(|p| p.items)
            .map(|m| m.text)
            .collect();
        assert_eq!(union, oracle);
    }

    #[test]
    fn date_search() {
        // Five sessions on consecutive days, three messages each.
        let owned: Vec<(String, DateTime<Utc>)> = (1..=5)
            .flat_map(|d| (0..3).map(move |h| (format!("s{d} m{h}"), t(d, h))))
            .collect();
        let refs: Vec<(&str, DateTime<Utc>)> =
            owned.iter().map(|(s, t)| (s.as_str(), *t)).collect();
        let s = store_with(&refs);

        let all = s.search_date(t(1, 0), t(5, 23), 0, 100).unwrap();
        assert_eq!(all.total_matches, 15);

        let gap = s.search_date(t(1, 5), t(1, 20), 0, 5).unwrap();
        assert_eq!(gap.total_matches, 0);

        let early = s.search_date(t(1, 0), t(2, 23), 0, 100).unwrap();
        let oracle: Vec<&str> = owned
            .iter()
            .filter(|(_, at)| *at <= t(2, 23))
            .map(|(s, _)| s.as_str())
            .collect();
        let got: Vec<&str> = early.items.iter().map(|m| m.text.as_str()).collect();
        assert_eq!(got, oracle);

        assert!(matches!(
            s.search_date(t(3, 0), t(2, 0), 0, 5),
            Err(RecallError::InvalidRange { .. })
        ));
    }
}
