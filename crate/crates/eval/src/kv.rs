//! Nested key-value retrieval.
//!
//! 140 UUID pairs are loaded into archival storage. Starting from an initial
//! key, the agent must keep looking up values until it reaches one that is
//! not itself a key. `depth` counts the hops after the first lookup.

use std::collections::{HashMap, HashSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;
use vctx_core::runtime::{
    Agent, AgentConfig, AgentError, Event, Processor, ProcessorError, StepError,
};
use vctx_core::store::ArchivalError;
use vctx_core::{Role, StepTrace};

use crate::policy::{call, last_function_result, last_line_with_role, say};

pub const KV_PAIRS: usize = 140;
pub const MAX_DEPTH: usize = 4;
pub const ORDERINGS: u64 = 30;
/// Context window for the no-archival baseline.
pub const BASELINE_MAX_TOKENS: usize = 2048;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("depth {0} is outside 0..=4")]
    DepthOutOfRange(usize),
    #[error("CycleDetected: key {0} was already visited")]
    CycleDetected(String),
    #[error("initial key {0} is not in the dataset")]
    MissingKey(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Archival(#[from] ArchivalError),
    #[error(transparent)]
    Step(#[from] StepError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KvDataset {
    pub pairs: Vec<(String, String)>,
    pub initial_key: String,
    pub depth: usize,
    pub pair_seed: u64,
    pub ordering_seed: u64,
}

impl KvDataset {
    /// Archival lines, in dataset order.
    pub fn lines(&self) -> Vec<String> {
        self.pairs.iter().map(|(k, v)| pair_line(k, v)).collect()
    }

    pub fn question(&self) -> String {
        format!(
            "Find the value for key {}. If that value is also a key, keep following the chain and tell me the final value.",
            self.initial_key
        )
    }
}

pub fn pair_line(key: &str, value: &str) -> String {
    format!("KEY = {key} ; VALUE = {value}")
}

fn uuid(rng: &mut ChaCha8Rng) -> String {
    uuid::Builder::from_random_bytes(rng.random())
        .into_uuid()
        .to_string()
}

/// Pairs depend only on `pair_seed` and `depth`; `ordering_seed` shuffles
/// their positions, including where the chain links land.
pub fn gen_kv(depth: usize, pair_seed: u64, ordering_seed: u64) -> Result<KvDataset, KvError> {
    if depth > MAX_DEPTH {
        return Err(KvError::DepthOutOfRange(depth));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(pair_seed);
    let mut seen = HashSet::new();
    let mut fresh = |rng: &mut ChaCha8Rng| loop {
        let u = uuid(rng);
        if seen.insert(u.clone()) {
            return u;
        }
    };
    let chain: Vec<String> = (0..=depth + 1).map(|_| fresh(&mut rng)).collect();
    let mut pairs: Vec<(String, String)> = chain
        .windows(2)
        .map(|w| (w[0].clone(), w[1].clone()))
        .collect();
    while pairs.len() < KV_PAIRS {
        let k = fresh(&mut rng);
        let v = fresh(&mut rng);
        pairs.push((k, v));
    }
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(ordering_seed));
    Ok(KvDataset {
        pairs,
        initial_key: chain[0].clone(),
        depth,
        pair_seed,
        ordering_seed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvAnswer {
    pub value: String,
    /// Number of key resolutions performed.
    pub lookups: usize,
}

pub fn kv_oracle(ds: &KvDataset) -> Result<KvAnswer, KvError> {
    let map: HashMap<&str, &str> = ds
        .pairs
        .iter()
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect();
    let mut current = ds.initial_key.as_str();
    if !map.contains_key(current) {
        return Err(KvError::MissingKey(current.to_string()));
    }
    let mut visited = HashSet::new();
    let mut lookups = 0;
    while let Some(next) = map.get(current) {
        if !visited.insert(current) {
            return Err(KvError::CycleDetected(current.to_string()));
        }
        lookups += 1;
        current = next;
    }
    Ok(KvAnswer {
        value: current.to_string(),
        lookups,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KvRun {
    pub depth: usize,
    pub ordering_seed: u64,
    pub answer: Option<String>,
    pub expected: String,
    pub correct: bool,
    pub n_processor_calls: usize,
    /// Every archival_search issued, including the final one that confirms
    /// the last value is not a key.
    pub n_search_calls: usize,
    /// Searches that resolved a key.
    pub n_lookups: usize,
}

fn uuid_regex() -> Regex {
    Regex::new(r"[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}")
        .expect("valid regex")
}

/// Multi-hop policy: search the current key, read the pair whose KEY
/// matches, search its value, and answer once a value has no pair of its own.
pub struct KvPolicy {
    current: Option<String>,
    page: usize,
    uuid: Regex,
}

impl Default for KvPolicy {
    fn default() -> Self {
        KvPolicy {
            current: None,
            page: 0,
            uuid: uuid_regex(),
        }
    }
}

impl KvPolicy {
    fn search(&self, thoughts: &str) -> String {
        let key = self.current.as_deref().unwrap_or_default();
        call(
            thoughts,
            "archival_search",
            json!({"query": key, "page": self.page}),
            true,
        )
    }

    fn answer(&mut self) -> String {
        let value = self.current.take().unwrap_or_default();
        self.page = 0;
        say("That value is not a key, so it is the answer.", &value)
    }
}

impl Processor for KvPolicy {
    fn complete(&mut self, prompt: &str) -> Result<String, ProcessorError> {
        let Some(current) = self.current.clone() else {
            let question = last_line_with_role(prompt, Role::User).unwrap_or_default();
            let Some(key) = self.uuid.find(question) else {
                return Ok(r#"{"thoughts":"No key in the question."}"#.into());
            };
            self.current = Some(key.as_str().to_string());
            self.page = 0;
            return Ok(self.search("Look up the initial key."));
        };
        let Some(result) = last_function_result(prompt) else {
            return Ok(self.answer());
        };
        if result["function"] != "archival_search" || result["status"] != "OK" {
            return Ok(self.answer());
        }
        let page = &result["result"];
        let items = page["items"].as_array().cloned().unwrap_or_default();
        let prefix = format!("KEY = {current} ; VALUE = ");
        let hit = items
            .iter()
            .filter_map(|i| i["text"].as_str())
            .find_map(|t| t.strip_prefix(&prefix));
        if let Some(value) = hit {
            self.current = Some(value.trim().to_string());
            self.page = 0;
            return Ok(self.search("The value may be a key too; look it up."));
        }
        // Results are ranked, so once a page ends with an unrelated entry no
        // later page can mention the key.
        let tail_relevant = items
            .last()
            .and_then(|i| i["text"].as_str())
            .is_some_and(|t| t.contains(current.as_str()));
        if page["has_more"] == true && tail_relevant {
            self.page += 1;
            return Ok(self.search("Not on this page; check the next one."));
        }
        Ok(self.answer())
    }
}

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 10, 11, 9, 0, 0).unwrap()
}

fn count_calls(trace: &StepTrace, name: &str) -> usize {
    trace
        .entries
        .iter()
        .filter(|e| e.call.as_ref().is_some_and(|c| c.name == name))
        .count()
}

fn score(ds: &KvDataset, trace: &StepTrace) -> Result<KvRun, KvError> {
    let expected = kv_oracle(ds)?.value;
    let answer = trace.outbound().last().map(|s| s.to_string());
    let n_lookups = trace
        .entries
        .iter()
        .filter(|e| {
            let Some(c) = e.call.as_ref().filter(|c| c.name == "archival_search") else {
                return false;
            };
            let q = c
                .params
                .get("query")
                .and_then(|v| v.as_str())
                .unwrap_or_default();
            let needle = format!("KEY = {q} ;");
            e.function_result
                .as_ref()
                .and_then(|r| r["result"]["items"].as_array())
                .is_some_and(|items| {
                    items
                        .iter()
                        .any(|i| i["text"].as_str().is_some_and(|t| t.starts_with(&needle)))
                })
        })
        .count();
    Ok(KvRun {
        depth: ds.depth,
        ordering_seed: ds.ordering_seed,
        correct: answer.as_deref() == Some(expected.as_str()),
        answer,
        expected,
        n_processor_calls: trace.entries.len(),
        n_search_calls: count_calls(trace, "archival_search"),
        n_lookups,
    })
}

/// Loads the pairs into archival storage and asks for the final value.
pub fn run_kv(config: &AgentConfig, ds: &KvDataset) -> Result<KvRun, KvError> {
    let mut agent = Agent::new(config.clone())?;
    agent.set_processor(Box::new(KvPolicy::default()));
    for line in ds.lines() {
        agent.ingest(&line, t0())?;
    }
    let trace = agent.step(Event::user(ds.question(), t0() + Duration::minutes(1)))?;
    score(ds, &trace)
}

/// Reads only what is in its context window: follows the chain through
/// every pair visible in the prompt and answers the last value it reaches.
pub struct ContextReader {
    pair: Regex,
    uuid: Regex,
}

impl Default for ContextReader {
    fn default() -> Self {
        ContextReader {
            pair: Regex::new(r"KEY = (\S+) ; VALUE = (\S+)").expect("valid regex"),
            uuid: uuid_regex(),
        }
    }
}

impl Processor for ContextReader {
    fn complete(&mut self, prompt: &str) -> Result<String, ProcessorError> {
        let question = last_line_with_role(prompt, Role::User).unwrap_or_default();
        let Some(start) = self.uuid.find(question).map(|m| m.as_str().to_string()) else {
            return Ok(r#"{"thoughts":"No key in the question."}"#.into());
        };
        let visible: HashMap<&str, &str> = self
            .pair
            .captures_iter(prompt)
            .map(|c| (c.get(1).unwrap().as_str(), c.get(2).unwrap().as_str()))
            .collect();
        let Some(mut current) = visible.get(start.as_str()).copied() else {
            return Ok(say(
                "The key is not in my context.",
                "I cannot find that key.",
            ));
        };
        let mut visited = HashSet::from([start.as_str()]);
        while let Some(next) = visible.get(current) {
            if !visited.insert(current) {
                break;
            }
            current = next;
        }
        Ok(say("Following the pairs I can see.", current))
    }
}

/// Baseline without archival storage: every pair is streamed into the
/// conversation, so the queue truncates most of them before the question.
pub fn run_kv_truncation_baseline(ds: &KvDataset, max_tokens: usize) -> Result<KvRun, KvError> {
    let config = AgentConfig {
        max_tokens,
        functions: Some(vec!["send_message".into()]),
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(config)?;
    for (i, line) in ds.lines().into_iter().enumerate() {
        agent.observe(Event::user(line, t0() + Duration::seconds(i as i64)))?;
    }
    agent.set_processor(Box::new(ContextReader::default()));
    let trace = agent.step(Event::user(ds.question(), t0() + Duration::hours(1)))?;
    score(ds, &trace)
}

/// Runs `run_kv` over depths `depths` and ordering seeds `0..orderings`.
pub fn sweep<F>(
    depths: &[usize],
    pair_seed: u64,
    orderings: u64,
    mut run: F,
) -> Result<Vec<KvRun>, KvError>
where
    F: FnMut(&KvDataset) -> Result<KvRun, KvError>,
{
    let mut out = Vec::new();
    for &d in depths {
        for o in 0..orderings {
            out.push(run(&gen_kv(d, pair_seed, o)?)?);
        }
    }
    Ok(out)
}

pub fn accuracy(runs: &[KvRun]) -> f64 {
    if runs.is_empty() {
        return 0.0;
    }
    runs.iter().filter(|r| r.correct).count() as f64 / runs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini(pairs: &[(&str, &str)], start: &str) -> KvDataset {
        KvDataset {
            pairs: pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            initial_key: start.into(),
            depth: 0,
            pair_seed: 0,
            ordering_seed: 0,
        }
    }

    #[test]
    fn oracle_hand_traced() {
        // a -> b -> c -> d ; x -> y is a distractor. Three resolutions end at d.
        let ds = mini(
            &[("c", "d"), ("x", "y"), ("a", "b"), ("b", "c"), ("q", "r")],
            "a",
        );
        assert_eq!(
            kv_oracle(&ds).unwrap(),
            KvAnswer {
                value: "d".into(),
                lookups: 3
            }
        );
        let ds = mini(&[("a", "z"), ("b", "c")], "a");
        assert_eq!(kv_oracle(&ds).unwrap().value, "z");
    }

    #[test]
    fn oracle_guards() {
        let ds = mini(&[("a", "b"), ("b", "a")], "a");
        assert!(matches!(kv_oracle(&ds), Err(KvError::CycleDetected(_))));
        let ds = mini(&[("a", "b")], "zz");
        assert!(matches!(kv_oracle(&ds), Err(KvError::MissingKey(_))));
    }

    #[test]
    fn generator_shape() {
        for depth in 0..=MAX_DEPTH {
            let ds = gen_kv(depth, 3, 9).unwrap();
            assert_eq!(ds.pairs.len(), KV_PAIRS);
            let keys: HashSet<&str> = ds.pairs.iter().map(|(k, _)| k.as_str()).collect();
            assert_eq!(keys.len(), KV_PAIRS);
            let ans = kv_oracle(&ds).unwrap();
            assert_eq!(ans.lookups, depth + 1);
            assert!(!keys.contains(ans.value.as_str()));
            // Every string is a fresh UUID apart from the chain links.
            let all: HashSet<&str> = ds
                .pairs
                .iter()
                .flat_map(|(k, v)| [k.as_str(), v.as_str()])
                .collect();
            assert_eq!(all.len(), 2 * KV_PAIRS - depth);
        }
        assert!(matches!(gen_kv(5, 0, 0), Err(KvError::DepthOutOfRange(5))));
    }

    #[test]
    fn depth_zero_value_is_not_a_key() {
        let ds = gen_kv(0, 1, 1).unwrap();
        let v = &ds
            .pairs
            .iter()
            .find(|(k, _)| *k == ds.initial_key)
            .unwrap()
            .1;
        assert!(ds.pairs.iter().all(|(k, _)| k != v));
    }

    #[test]
    fn generator_is_deterministic() {
        assert_eq!(gen_kv(2, 5, 6).unwrap(), gen_kv(2, 5, 6).unwrap());
        let a = gen_kv(2, 5, 6).unwrap();
        let b = gen_kv(2, 5, 7).unwrap();
        assert_ne!(a.pairs, b.pairs);
        let mut sa = a.pairs.clone();
        let mut sb = b.pairs.clone();
        sa.sort();
        sb.sort();
        assert_eq!(sa, sb, "orderings permute the same pairs");
    }

    #[test]
    fn scripted_policy_counts() {
        for depth in 0..=MAX_DEPTH {
            let ds = gen_kv(depth, 7, 0).unwrap();
            let run = run_kv(&AgentConfig::default(), &ds).unwrap();
            assert!(run.correct, "depth {depth}: {run:?}");
            assert_eq!(run.n_lookups, depth + 1);
            assert_eq!(run.n_search_calls, depth + 2);
            assert_eq!(run.n_processor_calls, depth + 3);
        }
    }

    #[test]
    fn context_reader_is_exact_when_everything_fits() {
        // With a huge window nothing is evicted and the reader is perfect.
        let ds = gen_kv(3, 7, 2).unwrap();
        let run = run_kv_truncation_baseline(&ds, 20_000).unwrap();
        assert!(run.correct);
    }
}
