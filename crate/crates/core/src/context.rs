//! Main context: pinned system instructions, the working-context scratchpad
//! and the FIFO queue, rendered into the single prompt document the
//! processor sees.

use thiserror::Error;

use crate::budget::TokenBudget;
use crate::queue::QueueState;
use crate::tokens::Tokenizer;
use crate::working::WorkingContext;

pub const WORKING_HEADER: &str = "\n\n### WORKING CONTEXT\n";
pub const QUEUE_HEADER: &str = "\n\n### CONVERSATION\n";

/// Default preamble describing the memory hierarchy. The function schema is
/// appended to it when an agent is built.
pub const DEFAULT_INSTRUCTIONS: &str = "\
You are a conversational agent whose memory is larger than your context window.

Your context window holds three things: these instructions (fixed), a WORKING \
CONTEXT section that you may edit, and a CONVERSATION section with the most \
recent events in arrival order. When the conversation grows too long its oldest \
messages are removed and replaced by a summary; you will receive a system \
warning shortly before that happens. Summaries lose detail.

Outside the window there are two stores. Recall storage keeps every past \
event verbatim and can be searched by text or by date. Archival storage is a \
read-write store of facts and documents searched by meaning. Nothing outside \
the window is visible until you retrieve it with a function call, and search \
results arrive one page at a time.

Keep durable facts about the user in working context. Move details that do \
not fit there into archival storage. Users only see what you pass to \
send_message; everything else you write is private.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("BudgetExceeded: {part} uses {used} tokens, cap is {cap}")]
    BudgetExceeded {
        part: &'static str,
        used: usize,
        cap: usize,
    },
}

/// Tokens to reserve for the instructions plus the section headers.
pub fn reserved_tokens(tokenizer: &dyn Tokenizer, instructions: &str) -> usize {
    tokenizer.count(instructions) + tokenizer.count(WORKING_HEADER) + tokenizer.count(QUEUE_HEADER)
}

#[derive(Debug, Clone)]
pub struct MainContext {
    system_instructions: String,
    pub working: WorkingContext,
    pub queue: QueueState,
}

impl MainContext {
    pub fn new(
        system_instructions: impl Into<String>,
        working: WorkingContext,
        queue: QueueState,
    ) -> Self {
        MainContext {
            system_instructions: system_instructions.into(),
            working,
            queue,
        }
    }

    pub fn system_instructions(&self) -> &str {
        &self.system_instructions
    }

    /// Instructions, then working context, then the queue (summary first).
    /// Empty sections are left out, so a fresh agent renders as its
    /// instructions alone.
    pub fn compose(
        &self,
        budget: &TokenBudget,
        tokenizer: &dyn Tokenizer,
    ) -> Result<String, ComposeError> {
        check(
            "system instructions",
            reserved_tokens(tokenizer, &self.system_instructions),
            budget.system_reserved,
        )?;
        check(
            "working context",
            tokenizer.count(self.working.text()),
            budget.working_cap,
        )?;
        check(
            "conversation queue",
            self.queue.occupancy(),
            budget.queue_cap,
        )?;

        let mut doc = self.system_instructions.clone();
        if !self.working.text().is_empty() {
            doc.push_str(WORKING_HEADER);
            doc.push_str(self.working.text());
        }
        if !self.queue.is_empty() {
            doc.push_str(QUEUE_HEADER);
            let lines: Vec<String> = self.queue.rendered().map(|m| m.render()).collect();
            doc.push_str(&lines.join("\n"));
        }
        check("composed prompt", tokenizer.count(&doc), budget.total)?;
        Ok(doc)
    }
}

fn check(part: &'static str, used: usize, cap: usize) -> Result<(), ComposeError> {
    if used > cap {
        Err(ComposeError::BudgetExceeded { part, used, cap })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::{MessageFactory, Role};
    use crate::queue::QueueRatios;
    use crate::tokens::{default_tokenizer, HeuristicTokenizer};
    use chrono::{Duration, TimeZone, Utc};
    use proptest::prelude::*;

    fn ctx(instr: &str, total: usize) -> (MainContext, TokenBudget) {
        let tok = default_tokenizer();
        let budget = TokenBudget::split(total, reserved_tokens(&*tok, instr), 0.25).unwrap();
        let wc = WorkingContext::new(budget.working_cap, tok.clone());
        let q = QueueState::new(budget.queue_cap, QueueRatios::default(), tok).unwrap();
        (MainContext::new(instr, wc, q), budget)
    }

    #[test]
    fn instructions_only() {
        let (mc, b) = ctx("You are a helpful assistant.", 1000);
        assert_eq!(
            mc.compose(&b, &HeuristicTokenizer).unwrap(),
            "You are a helpful assistant."
        );
    }

    #[test]
    fn preserves_insertion_order() {
        let (mut mc, b) = ctx("SYS", 2000);
        mc.working.append("Birthday: 11th October.").unwrap();
        let mut f = MessageFactory::default();
        let t0 = Utc.with_ymd_and_hms(2023, 10, 11, 0, 0, 0).unwrap();
        let texts = ["first", "second", "third"];
        let mut msgs = vec![];
        for (i, t) in texts.iter().enumerate() {
            let m = f.make(
                Role::User,
                *t,
                t0 + Duration::minutes(i as i64),
                &HeuristicTokenizer,
            );
            msgs.push(m.clone());
            mc.queue.enqueue(m, &mut f).unwrap();
        }
        let doc = mc.compose(&b, &HeuristicTokenizer).unwrap();
        let manual = format!(
            "SYS{WORKING_HEADER}Birthday: 11th October.{QUEUE_HEADER}{}\n{}\n{}",
            msgs[0].render(),
            msgs[1].render(),
            msgs[2].render()
        );
        assert_eq!(doc, manual);
    }

    #[test]
    fn over_budget_rejected() {
        let (mc, _) = ctx("instructions that are fairly long", 1000);
        let tight = TokenBudget::new(10, 2, 4, 4).unwrap();
        assert!(matches!(
            mc.compose(&tight, &HeuristicTokenizer),
            Err(ComposeError::BudgetExceeded {
                part: "system instructions",
                ..
            })
        ));
    }

    #[test]
    fn default_instructions_fit_small_windows() {
        let reserved = reserved_tokens(&HeuristicTokenizer, DEFAULT_INSTRUCTIONS);
        assert!(reserved < 512, "{reserved}");
    }

    proptest! {
        /// Two different queues under the same budget never render alike.
        #[test]
        fn rendering_is_injective(a in proptest::collection::vec("[ab]{0,3}", 0..4),
                                  b in proptest::collection::vec("[ab]{0,3}", 0..4)) {
            let render = |texts: &[String]| {
                let (mut mc, budget) = ctx("S", 2000);
                let mut f = MessageFactory::default();
                let t0 = Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap();
                for t in texts {
                    let m = f.make(Role::User, t.clone(), t0, &HeuristicTokenizer);
                    mc.queue.enqueue(m, &mut f).unwrap();
                }
                mc.compose(&budget, &HeuristicTokenizer).unwrap()
            };
            if a != b {
                prop_assert_ne!(render(&a), render(&b));
            }
        }
    }
}
