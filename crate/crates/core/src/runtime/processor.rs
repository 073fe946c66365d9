use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::Message;
use crate::queue::{Summarizer, SummarizerError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("ProcessorUnavailable: {0}")]
pub struct ProcessorError(pub String);

/// The language model: composed context in, one reply out.
pub trait Processor: Send {
    fn complete(&mut self, prompt: &str) -> Result<String, ProcessorError>;
}

impl<P: Processor + ?Sized> Processor for Box<P> {
    fn complete(&mut self, prompt: &str) -> Result<String, ProcessorError> {
        (**self).complete(prompt)
    }
}

/// One scripted reply. An entry with `when` is only eligible once the
/// composed prompt contains that text; `fail` simulates a transport error.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptEntry {
    pub when: Option<String>,
    pub output: String,
    pub fail: bool,
}

impl ScriptEntry {
    pub fn reply(output: impl Into<String>) -> Self {
        ScriptEntry {
            output: output.into(),
            ..Default::default()
        }
    }

    pub fn when(trigger: impl Into<String>, output: impl Into<String>) -> Self {
        ScriptEntry {
            when: Some(trigger.into()),
            output: output.into(),
            fail: false,
        }
    }

    pub fn failure() -> Self {
        ScriptEntry {
            fail: true,
            ..Default::default()
        }
    }
}

pub const EXHAUSTED_REPLY: &str = r#"{"thoughts":"Nothing left to do."}"#;

/// Deterministic stand-in for a model. Each call consumes the first
/// remaining entry whose trigger matches; with none left it yields.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProcessor {
    pending: Vec<ScriptEntry>,
    calls: usize,
}

impl ScriptedProcessor {
    pub fn new(script: Vec<ScriptEntry>) -> Self {
        ScriptedProcessor {
            pending: script,
            calls: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.pending.len()
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl Processor for ScriptedProcessor {
    fn complete(&mut self, prompt: &str) -> Result<String, ProcessorError> {
        self.calls += 1;
        let pos = self
            .pending
            .iter()
            .position(|e| e.when.as_deref().is_none_or(|w| prompt.contains(w)));
        let Some(pos) = pos else {
            return Ok(EXHAUSTED_REPLY.to_string());
        };
        let entry = self.pending.remove(pos);
        if entry.fail {
            return Err(ProcessorError("scripted failure".into()));
        }
        Ok(entry.output)
    }
}

/// Summarizes evicted history by prompting the processor.
pub struct ProcessorSummarizer<'a> {
    pub processor: &'a mut dyn Processor,
}

impl Summarizer for ProcessorSummarizer<'_> {
    fn summarize(
        &mut self,
        prior: Option<&str>,
        evicted: &[Message],
        cap: usize,
    ) -> Result<String, SummarizerError> {
        let mut prompt = format!(
            "Summarize the conversation below in at most {cap} tokens. Reply with the summary text only.\n"
        );
        if let Some(p) = prior {
            prompt.push_str("\nEarlier summary:\n");
            prompt.push_str(p);
            prompt.push('\n');
        }
        prompt.push_str("\nMessages:\n");
        for m in evicted {
            prompt.push_str(&m.render());
            prompt.push('\n');
        }
        self.processor
            .complete(&prompt)
            .map_err(|e| SummarizerError(e.to_string()))
    }
}
