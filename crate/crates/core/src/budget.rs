use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BudgetError {
    #[error("budget parts ({parts}) exceed the processor maximum ({total})")]
    Oversubscribed { parts: usize, total: usize },
    #[error("system instructions need {reserved} tokens but the processor maximum is {total}")]
    InstructionsTooLarge { reserved: usize, total: usize },
    #[error("working fraction {0} is outside [0, 1)")]
    BadFraction(f64),
}

/// How the processor's context window is divided between the three parts of
/// main context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub total: usize,
    pub system_reserved: usize,
    pub working_cap: usize,
    pub queue_cap: usize,
}

pub const DEFAULT_WORKING_FRACTION: f64 = 0.25;

impl TokenBudget {
    pub fn new(
        total: usize,
        system_reserved: usize,
        working_cap: usize,
        queue_cap: usize,
    ) -> Result<Self, BudgetError> {
        let parts = system_reserved + working_cap + queue_cap;
        if parts > total {
            return Err(BudgetError::Oversubscribed { parts, total });
        }
        Ok(TokenBudget {
            total,
            system_reserved,
            working_cap,
            queue_cap,
        })
    }

    /// Reserve the instructions, then give `working_fraction` of what is left
    /// to working context and the rest to the queue.
    pub fn split(
        total: usize,
        system_reserved: usize,
        working_fraction: f64,
    ) -> Result<Self, BudgetError> {
        if !(0.0..1.0).contains(&working_fraction) {
            return Err(BudgetError::BadFraction(working_fraction));
        }
        if system_reserved > total {
            return Err(BudgetError::InstructionsTooLarge {
                reserved: system_reserved,
                total,
            });
        }
        let remainder = total - system_reserved;
        let working_cap = (remainder as f64 * working_fraction).floor() as usize;
        let queue_cap = remainder - working_cap;
        Self::new(total, system_reserved, working_cap, queue_cap)
    }
}
