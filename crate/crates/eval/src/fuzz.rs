//! Randomized event sequences driven by a random processor, checking that
//! every composed prompt fits the token budget.

use std::sync::{Arc, Mutex};

use chrono::{Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use vctx_core::runtime::{Agent, AgentConfig, AgentError, Event, Processor, ProcessorError};
use vctx_core::tokens::count_tokens;

use crate::policy::{call, say};

pub const FUZZ_MAX_TOKENS: usize = 4096;
pub const MIN_CHARS: usize = 1;
pub const MAX_CHARS: usize = 400;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FuzzStats {
    pub sequences: usize,
    pub events: usize,
    pub invocations: usize,
    pub violations: usize,
    pub max_prompt_tokens: usize,
    pub evictions: usize,
    /// Steps that returned an error and were rolled back.
    pub step_errors: usize,
}

/// Random text of `MIN_CHARS..=MAX_CHARS` characters.
pub fn random_text(rng: &mut impl Rng) -> String {
    let len = rng.random_range(MIN_CHARS..=MAX_CHARS);
    (0..len)
        .map(|_| {
            if rng.random_range(0..6) == 0 {
                ' '
            } else {
                rng.random_range(b'a'..=b'z') as char
            }
        })
        .collect()
}

/// Emits a random mix of replies, function calls and malformed output, and
/// records the size of every prompt it is shown.
struct RandomProcessor {
    rng: ChaCha8Rng,
    budget: usize,
    stats: Arc<Mutex<FuzzStats>>,
}

impl Processor for RandomProcessor {
    fn complete(&mut self, prompt: &str) -> Result<String, ProcessorError> {
        let tokens = count_tokens(prompt);
        {
            let mut s = self.stats.lock().unwrap();
            s.invocations += 1;
            s.max_prompt_tokens = s.max_prompt_tokens.max(tokens);
            if tokens > self.budget {
                s.violations += 1;
            }
        }
        let text = random_text(&mut self.rng);
        let hb = self.rng.random_bool(0.5);
        let word: String = text
            .split_whitespace()
            .next()
            .unwrap_or("x")
            .chars()
            .take(6)
            .collect();
        Ok(match self.rng.random_range(0..8) {
            0 => say(&text, &text),
            1 => call(
                &text,
                "working_context_append",
                json!({ "content": text }),
                hb,
            ),
            2 => call("store", "archival_insert", json!({ "content": text }), hb),
            3 => call(
                "look",
                "recall_search_text",
                json!({ "query": word, "page": 0 }),
                hb,
            ),
            4 => call("look", "archival_search", json!({ "query": word }), hb),
            5 => json!({ "thoughts": text }).to_string(),
            6 => text,
            _ => call("bad", "no_such_function", json!({}), hb),
        })
    }
}

/// Runs one random sequence, adding its counts to `stats`.
pub fn run_sequence(seed: u64, stats: &Arc<Mutex<FuzzStats>>) -> Result<(), AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = AgentConfig {
        max_tokens: FUZZ_MAX_TOKENS,
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(config)?;
    agent.set_processor(Box::new(RandomProcessor {
        rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed),
        budget: FUZZ_MAX_TOKENS,
        stats: stats.clone(),
    }));
    let mut at = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let n = rng.random_range(10..40);
    let mut evictions = 0;
    let mut errors = 0;
    for _ in 0..n {
        at += Duration::seconds(rng.random_range(1..600));
        let text = random_text(&mut rng);
        let event = match rng.random_range(0..10) {
            0 => Event::alert(text, at),
            1 => Event::interaction(text, at),
            _ => Event::user(text, at),
        };
        match agent.step(event) {
            Ok(t) => evictions += t.evictions,
            Err(_) => errors += 1,
        }
    }
    let mut s = stats.lock().unwrap();
    s.sequences += 1;
    s.events += n;
    s.evictions += evictions;
    s.step_errors += errors;
    Ok(())
}

pub fn budget_fuzz(sequences: u64) -> Result<FuzzStats, AgentError> {
    let stats = Arc::new(Mutex::new(FuzzStats::default()));
    for seed in 0..sequences {
        run_sequence(seed, &stats)?;
    }
    let s = stats.lock().unwrap().clone();
    Ok(s)
}
