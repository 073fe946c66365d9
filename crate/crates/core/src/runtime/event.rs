use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::message::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    UserMessage,
    SystemAlert,
    UserInteraction,
    Scheduled,
}

/// Anything that wakes the agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub payload: String,
    pub at: DateTime<Utc>,
}

impl Event {
    pub fn user(text: impl Into<String>, at: DateTime<Utc>) -> Self {
        Event {
            kind: EventKind::UserMessage,
            payload: text.into(),
            at,
        }
    }

    pub fn alert(text: impl Into<String>, at: DateTime<Utc>) -> Self {
        Event {
            kind: EventKind::SystemAlert,
            payload: text.into(),
            at,
        }
    }

    pub fn interaction(text: impl Into<String>, at: DateTime<Utc>) -> Self {
        Event {
            kind: EventKind::UserInteraction,
            payload: text.into(),
            at,
        }
    }

    pub fn scheduled(at: DateTime<Utc>) -> Self {
        Event {
            kind: EventKind::Scheduled,
            payload:
                "Scheduled wake-up. No user is waiting; use the time to organize memory if needed."
                    .into(),
            at,
        }
    }

    /// Role and text of the message the event becomes in history.
    pub fn to_message_parts(&self) -> (Role, String) {
        match self.kind {
            EventKind::UserMessage => (Role::User, self.payload.clone()),
            EventKind::SystemAlert => (Role::System, self.payload.clone()),
            EventKind::UserInteraction => {
                (Role::System, format!("User activity: {}", self.payload))
            }
            EventKind::Scheduled => (Role::System, self.payload.clone()),
        }
    }
}
