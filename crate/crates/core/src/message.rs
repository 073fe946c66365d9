use std::fmt;

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

use crate::tokens::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageId(pub u64);

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
    System,
    FunctionCall,
    FunctionResult,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::System => "system",
            Role::FunctionCall => "function_call",
            Role::FunctionResult => "function_result",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One timestamped unit of history.
///
/// `token_count` is cached at construction and always equals the agent
/// tokenizer's count of `text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: MessageId,
    pub role: Role,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    pub token_count: usize,
}

impl Message {
    pub fn new(
        id: MessageId,
        role: Role,
        text: impl Into<String>,
        timestamp: DateTime<Utc>,
        tokenizer: &dyn Tokenizer,
    ) -> Self {
        let text = text.into();
        let token_count = tokenizer.count(&text);
        Message {
            id,
            role,
            text,
            timestamp: timestamp.trunc_subsecs(3),
            token_count,
        }
    }

    /// `[{timestamp} #{id}] {role}: {text}`, the line format used in main context.
    pub fn render(&self) -> String {
        format!(
            "[{} #{}] {}: {}",
            format_timestamp(&self.timestamp),
            self.id,
            self.role,
            self.text
        )
    }
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Hands out message ids for one agent. Ids are sequential so that two runs
/// over the same events produce identical histories.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageFactory {
    next_id: u64,
}

impl MessageFactory {
    pub fn starting_at(next_id: u64) -> Self {
        MessageFactory { next_id }
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn make(
        &mut self,
        role: Role,
        text: impl Into<String>,
        timestamp: DateTime<Utc>,
        tokenizer: &dyn Tokenizer,
    ) -> Message {
        let id = MessageId(self.next_id);
        self.next_id += 1;
        Message::new(id, role, text, timestamp, tokenizer)
    }
}
