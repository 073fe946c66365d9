//! FIFO conversational context with pressure warnings and recursive
//! summarization.
//!
//! Occupancy is measured on rendered lines (`Message::render` plus the line
//! break), so the framing that `compose` adds around each message is part of
//! the budget. The queue holds an optional summary slot in front of the
//! messages; after an eviction the summary stands in for everything that was
//! removed, and the next eviction folds the old summary into the new one.

use std::collections::VecDeque;

use thiserror::Error;

use crate::message::{format_timestamp, Message, MessageFactory, MessageId, Role};
use crate::tokens::{truncate_to_tokens, SharedTokenizer, Tokenizer};

/// System text injected once per fill cycle when occupancy crosses the
/// warning ratio.
pub const PRESSURE_WARNING: &str = "Warning: the conversation history will soon reach its maximum length and be trimmed. Make sure to save any important information from the conversation to your memory before it is removed.";

pub const DEFAULT_WARN_RATIO: f64 = 0.75;
pub const DEFAULT_EVICT_TARGET_RATIO: f64 = 0.5;
pub const DEFAULT_SUMMARY_RATIO: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueueError {
    #[error("MessageTooLarge: message needs {cost} tokens, at most {max} fit in the queue")]
    MessageTooLarge { cost: usize, max: usize },
    #[error("queue overflow: message needs {cost} tokens but only {free} are free; evict first")]
    Overflow { cost: usize, free: usize },
    #[error("SummaryTooLarge: summary needs {cost} tokens, cap is {cap}")]
    SummaryTooLarge { cost: usize, cap: usize },
    #[error("invalid queue ratios: need 0 < summary ({summary}) < evict target ({target}) < warn ({warn}) < 1")]
    BadRatios {
        warn: f64,
        target: f64,
        summary: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("summarizer failed: {0}")]
pub struct SummarizerError(pub String);

/// Compresses evicted history. `cap` bounds the output in tokens.
pub trait Summarizer {
    fn summarize(
        &mut self,
        prior: Option<&str>,
        evicted: &[Message],
        cap: usize,
    ) -> Result<String, SummarizerError>;
}

/// Deterministic digest used in tests and as the fallback when a
/// processor-backed summary fails or overflows.
#[derive(Debug, Clone)]
pub struct TruncationSummarizer {
    tokenizer: SharedTokenizer,
}

impl TruncationSummarizer {
    pub fn new(tokenizer: SharedTokenizer) -> Self {
        TruncationSummarizer { tokenizer }
    }
}

impl Summarizer for TruncationSummarizer {
    fn summarize(
        &mut self,
        prior: Option<&str>,
        evicted: &[Message],
        cap: usize,
    ) -> Result<String, SummarizerError> {
        Ok(truncation_summary(&*self.tokenizer, prior, evicted, cap))
    }
}

/// `SUMMARY(n=..; span=a..b): <prior> | <first sentence of each message>`,
/// cut to `cap` tokens. With nothing evicted the prior is returned as is.
pub fn truncation_summary(
    tokenizer: &dyn Tokenizer,
    prior: Option<&str>,
    evicted: &[Message],
    cap: usize,
) -> String {
    let (Some(first), Some(last)) = (evicted.first(), evicted.last()) else {
        return prior.unwrap_or_default().to_string();
    };
    let mut out = format!(
        "SUMMARY(n={}; span={}..{}):",
        evicted.len(),
        format_timestamp(&first.timestamp),
        format_timestamp(&last.timestamp)
    );
    if let Some(prior) = prior.filter(|p| !p.is_empty()) {
        out.push(' ');
        out.push_str(prior);
        out.push_str(" |");
    }
    for m in evicted {
        let sentence = first_sentence(&m.text);
        if !sentence.is_empty() {
            out.push(' ');
            out.push_str(sentence);
        }
    }
    truncate_to_tokens(tokenizer, &out, cap).to_string()
}

/// Text up to and including the first `.`, `!` or `?` that ends a word, or
/// the first line if there is no such terminator.
pub fn first_sentence(text: &str) -> &str {
    let text = text.trim();
    let line = text.lines().next().unwrap_or_default();
    let mut chars = line.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_break = chars.peek().is_none_or(|(_, n)| n.is_whitespace());
            if at_break {
                return &line[..i + c.len_utf8()];
            }
        }
    }
    line
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueRatios {
    pub warn: f64,
    pub evict_target: f64,
    pub summary: f64,
}

impl Default for QueueRatios {
    fn default() -> Self {
        QueueRatios {
            warn: DEFAULT_WARN_RATIO,
            evict_target: DEFAULT_EVICT_TARGET_RATIO,
            summary: DEFAULT_SUMMARY_RATIO,
        }
    }
}

impl QueueRatios {
    pub fn validate(&self) -> Result<(), QueueError> {
        let ok = 0.0 < self.summary
            && self.summary < self.evict_target
            && self.evict_target < self.warn
            && self.warn < 1.0;
        if ok {
            Ok(())
        } else {
            Err(QueueError::BadRatios {
                warn: self.warn,
                target: self.evict_target,
                summary: self.summary,
            })
        }
    }
}

/// What an eviction removed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Eviction {
    pub evicted: Vec<MessageId>,
    pub summary: Option<MessageId>,
    /// The summarizer's result was rejected and the truncation digest used.
    pub fell_back: bool,
}

#[derive(Debug, Clone)]
struct Slot {
    msg: Message,
    cost: usize,
}

#[derive(Debug, Clone)]
pub struct QueueState {
    summary: Option<Slot>,
    messages: VecDeque<Slot>,
    cap: usize,
    ratios: QueueRatios,
    warned: bool,
    occupancy: usize,
    tokenizer: SharedTokenizer,
}

impl QueueState {
    pub fn new(
        cap: usize,
        ratios: QueueRatios,
        tokenizer: SharedTokenizer,
    ) -> Result<Self, QueueError> {
        ratios.validate()?;
        Ok(QueueState {
            summary: None,
            messages: VecDeque::new(),
            cap,
            ratios,
            warned: false,
            occupancy: 0,
            tokenizer,
        })
    }

    /// Rebuilds a saved queue. The caller is responsible for the content
    /// having fit when it was saved; occupancy is recomputed here.
    pub fn restore(
        cap: usize,
        ratios: QueueRatios,
        tokenizer: SharedTokenizer,
        summary: Option<Message>,
        messages: Vec<Message>,
        warned: bool,
    ) -> Result<Self, QueueError> {
        let mut q = QueueState::new(cap, ratios, tokenizer)?;
        q.summary = summary.map(|m| q.slot(m));
        for m in messages {
            let slot = q.slot(m);
            q.messages.push_back(slot);
        }
        q.occupancy = q
            .summary
            .iter()
            .chain(q.messages.iter())
            .map(|s| s.cost)
            .sum();
        q.warned = warned;
        if q.occupancy > cap {
            return Err(QueueError::Overflow {
                cost: q.occupancy,
                free: cap,
            });
        }
        Ok(q)
    }

    /// Tokens a message occupies once rendered as a queue line.
    pub fn line_cost(&self, msg: &Message) -> usize {
        line_cost(&*self.tokenizer, msg)
    }

    fn slot(&self, msg: Message) -> Slot {
        let cost = self.line_cost(&msg);
        Slot { msg, cost }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn occupancy(&self) -> usize {
        self.occupancy
    }

    pub fn ratios(&self) -> QueueRatios {
        self.ratios
    }

    pub fn warned(&self) -> bool {
        self.warned
    }

    pub fn summary(&self) -> Option<&Message> {
        self.summary.as_ref().map(|s| &s.msg)
    }

    pub fn messages(&self) -> impl DoubleEndedIterator<Item = &Message> + ExactSizeIterator {
        self.messages.iter().map(|s| &s.msg)
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summary.is_none() && self.messages.is_empty()
    }

    /// Summary first, then messages in arrival order.
    pub fn rendered(&self) -> impl Iterator<Item = &Message> {
        self.summary().into_iter().chain(self.messages())
    }

    pub fn summary_cap(&self) -> usize {
        (self.ratios.summary * self.cap as f64).floor() as usize
    }

    /// Largest line cost admissible: a summary plus the message must always fit.
    pub fn max_message_cost(&self) -> usize {
        self.cap - self.summary_cap()
    }

    pub fn fits(&self, cost: usize) -> bool {
        self.occupancy + cost <= self.cap
    }

    fn warn_threshold(&self) -> f64 {
        self.ratios.warn * self.cap as f64
    }

    /// Appends `msg`. On the first crossing of the warning ratio since the
    /// last eviction the pressure warning is appended too and returned so the
    /// caller can log it.
    pub fn enqueue(
        &mut self,
        msg: Message,
        factory: &mut MessageFactory,
    ) -> Result<Option<Message>, QueueError> {
        let slot = self.slot(msg);
        if slot.cost > self.max_message_cost() {
            return Err(QueueError::MessageTooLarge {
                cost: slot.cost,
                max: self.max_message_cost(),
            });
        }
        if !self.fits(slot.cost) {
            return Err(QueueError::Overflow {
                cost: slot.cost,
                free: self.cap - self.occupancy,
            });
        }
        let ts = slot.msg.timestamp;
        self.occupancy += slot.cost;
        self.messages.push_back(slot);

        if self.warned || (self.occupancy as f64) < self.warn_threshold() {
            return Ok(None);
        }
        let warning = factory.make(Role::System, PRESSURE_WARNING, ts, &*self.tokenizer);
        let wslot = self.slot(warning);
        if !self.fits(wslot.cost) {
            return Ok(None);
        }
        let out = wslot.msg.clone();
        self.occupancy += wslot.cost;
        self.messages.push_back(wslot);
        self.warned = true;
        Ok(Some(out))
    }

    /// Room needed to admit a line of `cost` tokens, including the pressure
    /// warning when this admission would trigger one.
    pub fn admission_cost(&self, cost: usize) -> usize {
        let crosses = (self.occupancy + cost) as f64 >= self.warn_threshold();
        if self.warned || !crosses {
            return cost;
        }
        // Widest possible id, so the bound holds for any later id.
        let warning = Message::new(
            MessageId(u64::MAX),
            Role::System,
            PRESSURE_WARNING,
            chrono::DateTime::<chrono::Utc>::UNIX_EPOCH,
            &*self.tokenizer,
        );
        let total = cost + self.line_cost(&warning);
        if total > self.max_message_cost() {
            cost
        } else {
            total
        }
    }

    /// Whether an eviction is due before admitting a line of `incoming` tokens.
    pub fn needs_eviction(&self, incoming: usize) -> bool {
        self.occupancy >= self.cap || !self.fits(incoming)
    }

    /// Removes the shortest prefix such that, with a summary of at most
    /// `summary_cap` tokens in front, occupancy is at most the eviction
    /// target and `reserve` more tokens still fit. The removed messages and
    /// the prior summary are handed to `summarizer`.
    ///
    /// Does nothing unless `force` is set or [`Self::needs_eviction`] holds.
    pub fn evict(
        &mut self,
        summarizer: &mut dyn Summarizer,
        factory: &mut MessageFactory,
        reserve: usize,
        force: bool,
    ) -> Result<Eviction, QueueError> {
        if !force && !self.needs_eviction(reserve) {
            return Ok(Eviction::default());
        }
        if reserve > self.max_message_cost() {
            return Err(QueueError::MessageTooLarge {
                cost: reserve,
                max: self.max_message_cost(),
            });
        }
        let summary_cap = self.summary_cap();
        let target = (self.ratios.evict_target * self.cap as f64).floor() as usize;
        let limit = target.min(self.cap - reserve);

        let mut remaining: usize = self.messages.iter().map(|s| s.cost).sum();
        let mut evicted = Vec::new();
        while remaining + summary_cap > limit {
            let Some(slot) = self.messages.pop_front() else {
                break;
            };
            remaining -= slot.cost;
            evicted.push(slot.msg);
        }
        if evicted.is_empty() {
            return Ok(Eviction::default());
        }

        let prior = self.summary.take().map(|s| s.msg.text);
        let ts = evicted.last().map(|m| m.timestamp).expect("non-empty");
        let id = MessageId(factory.next_id());
        let prefix_cost = line_cost(
            &*self.tokenizer,
            &Message::new(id, Role::System, "", ts, &*self.tokenizer),
        );
        let text_cap = summary_cap.saturating_sub(prefix_cost);

        let mut fell_back = false;
        let mut text = None;
        for cap in [text_cap, text_cap / 2] {
            match summarizer.summarize(prior.as_deref(), &evicted, cap) {
                Ok(t) if self.check_summary(&t, id, ts, summary_cap).is_ok() => {
                    text = Some(t);
                    break;
                }
                _ => {}
            }
        }
        let text = text.unwrap_or_else(|| {
            fell_back = true;
            truncation_summary(&*self.tokenizer, prior.as_deref(), &evicted, text_cap)
        });
        self.check_summary(&text, id, ts, summary_cap)?;

        let summary = factory.make(Role::System, text, ts, &*self.tokenizer);
        let slot = self.slot(summary);
        let summary_id = slot.msg.id;
        self.summary = Some(slot);
        self.occupancy = remaining + self.summary.as_ref().map_or(0, |s| s.cost);
        self.warned = false;
        Ok(Eviction {
            evicted: evicted.iter().map(|m| m.id).collect(),
            summary: Some(summary_id),
            fell_back,
        })
    }

    fn check_summary(
        &self,
        text: &str,
        id: MessageId,
        ts: chrono::DateTime<chrono::Utc>,
        cap: usize,
    ) -> Result<(), QueueError> {
        let cost = line_cost(
            &*self.tokenizer,
            &Message::new(id, Role::System, text, ts, &*self.tokenizer),
        );
        if cost > cap {
            Err(QueueError::SummaryTooLarge { cost, cap })
        } else {
            Ok(())
        }
    }
}

pub fn line_cost(tokenizer: &dyn Tokenizer, msg: &Message) -> usize {
    let mut line = msg.render();
    line.push('\n');
    tokenizer.count(&line)
}
