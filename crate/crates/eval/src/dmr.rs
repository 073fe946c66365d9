//! Deep memory retrieval: a question in a new session that can only be
//! answered from a fact mentioned once, several sessions earlier.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use vctx_core::runtime::{
    Agent, AgentConfig, AgentError, Event, Processor, ProcessorError, StepError,
};
use vctx_core::Role;

use crate::metrics::{rouge_l, RougeScore};
use crate::policy::{call, last_function_result, last_line_with_role, say};

pub const SESSIONS: usize = 5;
pub const MESSAGES_PER_SESSION: usize = 12;
/// Window used for the benchmark; small enough that sessions 1-4 are evicted.
pub const DMR_MAX_TOKENS: usize = 2048;
pub const NOT_REMEMBERED: &str = "I don't remember you telling me about that.";

const OPENERS: &[&str] = &[
    "Work was busy today.",
    "I went for a long walk this morning.",
    "The train was late again.",
    "I finally cleaned the kitchen.",
    "My phone battery died at lunch.",
    "I tried a new coffee shop downtown.",
    "It rained for most of the afternoon.",
    "I stayed up too late reading.",
    "The gym was packed tonight.",
    "I spent the evening fixing my bike.",
    "Our team meeting ran long.",
    "I watched a documentary about whales.",
    "Groceries cost more than I expected.",
    "I called my parents after dinner.",
    "The neighbors were loud again.",
];

const FOLLOWUPS: &[&str] = &[
    "Anyway, how has your day been?",
    "It felt like the week would never end.",
    "I might try a new recipe tonight.",
    "Honestly it was kind of relaxing.",
    "I should probably get more sleep.",
    "The weather could not make up its mind.",
    "I keep meaning to plan a weekend trip.",
    "Maybe tomorrow will be quieter.",
    "I still have a pile of laundry to fold.",
    "It reminded me to drink more water.",
    "I need to reply to a dozen emails.",
    "At least the sunset was pretty.",
];

const RELATIONS: &[&str] = &[
    "sister",
    "neighbor",
    "coworker",
    "cousin",
    "old roommate",
    "piano teacher",
];

const PREDICATES: &[&str] = &[
    "moved to Lisbon last spring",
    "just started learning the cello",
    "opened a small bakery near the harbor",
    "is training for a marathon in October",
    "adopted two grey kittens",
    "got a job at the planetarium",
    "is building a canoe in the garage",
];

const SYLLABLES: &[&str] = &[
    "zor", "vi", "na", "quel", "bra", "tho", "mi", "dax", "lu", "ren", "ka", "sef", "yo", "pim",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionMessage {
    pub text: String,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DmrCase {
    pub seed: u64,
    pub sessions: Vec<Vec<SessionMessage>>,
    pub question: String,
    pub question_at: DateTime<Utc>,
    /// Unique name that ties the question to the planted fact.
    pub keyword: String,
    pub gold_answer: String,
    /// 1-based.
    pub gold_session_index: usize,
}

impl DmrCase {
    /// The same case with the question's keyword replaced by a word that
    /// occurs nowhere in history.
    pub fn with_mutated_keyword(&self) -> DmrCase {
        let nonsense = "Qwxzzyvk";
        DmrCase {
            question: self.question.replace(&self.keyword, nonsense),
            keyword: nonsense.into(),
            ..self.clone()
        }
    }
}

fn day(d: i64) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 10, 1, 19, 0, 0).unwrap() + Duration::days(d)
}

fn name(rng: &mut ChaCha8Rng) -> String {
    let n: String = (0..3).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
    let mut c = n.chars();
    let first = c.next().unwrap().to_ascii_uppercase();
    std::iter::once(first).chain(c).collect()
}

/// Five sessions on consecutive days; one message in sessions 1-3 carries
/// the fact as its second sentence, so a first-sentence summary drops it.
pub fn gen_dmr(seed: u64) -> DmrCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sessions: Vec<Vec<SessionMessage>> = (0..SESSIONS)
        .map(|s| {
            (0..MESSAGES_PER_SESSION)
                .map(|i| SessionMessage {
                    text: format!(
                        "{} {}",
                        OPENERS.choose(&mut rng).unwrap(),
                        FOLLOWUPS.choose(&mut rng).unwrap()
                    ),
                    at: day(s as i64) + Duration::minutes(3 * i as i64),
                })
                .collect()
        })
        .collect();

    let corpus = sessions
        .iter()
        .flatten()
        .map(|m| m.text.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ");
    let keyword = loop {
        let n = name(&mut rng);
        if !corpus.contains(&n.to_lowercase()) {
            break n;
        }
    };
    let fact = format!(
        "My {} {} {}.",
        RELATIONS.choose(&mut rng).unwrap(),
        keyword,
        PREDICATES.choose(&mut rng).unwrap()
    );
    let gold_session = rng.random_range(0..3);
    let slot = rng.random_range(0..MESSAGES_PER_SESSION);
    let msg = &mut sessions[gold_session][slot];
    msg.text = format!("{} {}", OPENERS.choose(&mut rng).unwrap(), fact);

    DmrCase {
        seed,
        sessions,
        question: format!("Do you remember what I told you about {keyword}?"),
        question_at: day(SESSIONS as i64 + 1),
        keyword,
        gold_answer: fact,
        gold_session_index: gold_session + 1,
    }
}

pub fn dmr_config() -> AgentConfig {
    AgentConfig {
        max_tokens: DMR_MAX_TOKENS,
        ..AgentConfig::default()
    }
}

/// Acknowledges every message during the earlier sessions.
pub struct Chatter;

impl Processor for Chatter {
    fn complete(&mut self, _: &str) -> Result<String, ProcessorError> {
        Ok(say("Small talk; nothing to store.", "Got it."))
    }
}

/// Last capitalized word of the question that is not its first word.
pub fn question_keyword(question: &str) -> Option<String> {
    question
        .split_whitespace()
        .skip(1)
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| w.len() > 1 && w.starts_with(|c: char| c.is_uppercase()))
        .last()
        .map(str::to_string)
}

/// The sentence of `text` that mentions `keyword`.
pub fn sentence_with<'a>(text: &'a str, keyword: &str) -> Option<&'a str> {
    text.split_inclusive(['.', '!', '?'])
        .map(str::trim)
        .find(|s| s.contains(keyword))
}

/// Searches recall for the question's keyword and answers with the
/// sentence from the first earlier user message that mentions it.
#[derive(Default)]
pub struct RecallPolicy {
    pending: Option<(String, String)>,
}

impl Processor for RecallPolicy {
    fn complete(&mut self, prompt: &str) -> Result<String, ProcessorError> {
        let Some((question, keyword)) = self.pending.take() else {
            let question = last_line_with_role(prompt, Role::User)
                .unwrap_or_default()
                .to_string();
            let Some(keyword) = question_keyword(&question) else {
                return Ok(say("No name to look up.", NOT_REMEMBERED));
            };
            let out = call(
                "This refers to an earlier conversation; search recall.",
                "recall_search_text",
                json!({ "query": keyword }),
                true,
            );
            self.pending = Some((question, keyword));
            return Ok(out);
        };
        let hit = last_function_result(prompt).and_then(|r| {
            r["result"]["items"].as_array()?.iter().find_map(|item| {
                let text = item["text"].as_str()?;
                (item["role"] == "user" && text != question)
                    .then(|| sentence_with(text, &keyword))
                    .flatten()
                    .map(str::to_string)
            })
        });
        Ok(match hit {
            Some(sentence) => say("Found it in an earlier session.", &sentence),
            None => say("Nothing in recall.", NOT_REMEMBERED),
        })
    }
}

/// Answers from the composed context only; used when recall search is disabled.
pub struct ContextOnlyPolicy;

impl Processor for ContextOnlyPolicy {
    fn complete(&mut self, prompt: &str) -> Result<String, ProcessorError> {
        let question = last_line_with_role(prompt, Role::User).unwrap_or_default();
        let Some(keyword) = question_keyword(question) else {
            return Ok(say("No name to look up.", NOT_REMEMBERED));
        };
        let hit = prompt
            .lines()
            .filter(|l| !l.ends_with(question))
            .find_map(|l| sentence_with(l, &keyword));
        Ok(say(
            "Checking what I can see.",
            hit.unwrap_or(NOT_REMEMBERED),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DmrRun {
    pub seed: u64,
    pub answer: String,
    pub rouge: RougeScore,
    /// The gold message was on the first page of recall results.
    pub retrieved_gold: bool,
    /// The gold fact was in the composed context just before the question.
    pub gold_in_context: bool,
    pub evictions: usize,
    /// Processor invocations while answering the question.
    pub calls: usize,
}

/// Steps the agent through the five sessions with [`Chatter`].
pub fn ingest_sessions(agent: &mut Agent, case: &DmrCase) -> Result<usize, StepError> {
    let mut evictions = 0;
    for m in case.sessions.iter().flatten() {
        evictions += agent.step(Event::user(m.text.clone(), m.at))?.evictions;
    }
    Ok(evictions)
}

fn run_with(
    config: AgentConfig,
    case: &DmrCase,
    answerer: Box<dyn Processor>,
) -> Result<DmrRun, DmrError> {
    let mut agent = Agent::new(config)?;
    agent.set_processor(Box::new(Chatter));
    let evictions = ingest_sessions(&mut agent, case)?;
    let gold_in_context = agent
        .compose()
        .map_err(StepError::from)?
        .contains(&case.gold_answer);
    agent.set_processor(answerer);
    let trace = agent.step(Event::user(case.question.clone(), case.question_at))?;
    let answer = trace
        .outbound()
        .last()
        .map(|s| s.to_string())
        .unwrap_or_default();
    let retrieved_gold = trace.entries.iter().any(|e| {
        e.call
            .as_ref()
            .is_some_and(|c| c.name == "recall_search_text")
            && e.function_result
                .as_ref()
                .and_then(|r| r["result"]["items"].as_array())
                .is_some_and(|items| {
                    items.iter().any(|i| {
                        i["text"]
                            .as_str()
                            .is_some_and(|t| t.contains(&case.gold_answer))
                    })
                })
    });
    Ok(DmrRun {
        seed: case.seed,
        rouge: rouge_l(&answer, &case.gold_answer),
        answer,
        retrieved_gold,
        gold_in_context,
        evictions,
        calls: trace.entries.len(),
    })
}

#[derive(Debug, thiserror::Error)]
pub enum DmrError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Step(#[from] StepError),
}

pub fn run_dmr(config: &AgentConfig, case: &DmrCase) -> Result<DmrRun, DmrError> {
    run_with(config.clone(), case, Box::new(RecallPolicy::default()))
}

/// Same sessions with recall search disabled: only the summary and the
/// recent queue are available.
pub fn run_dmr_summary_only(config: &AgentConfig, case: &DmrCase) -> Result<DmrRun, DmrError> {
    let config = AgentConfig {
        functions: Some(vec!["send_message".into()]),
        ..config.clone()
    };
    run_with(config, case, Box::new(ContextOnlyPolicy))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LosslessReport {
    pub evictions: usize,
    pub evicted_messages: usize,
    pub retrievable: usize,
    /// The planted fact is not in the composed context.
    pub planted_absent: bool,
}

/// Runs the sessions, then checks every evicted user message can be found
/// verbatim through recall text search.
pub fn check_lossless(config: &AgentConfig, case: &DmrCase) -> Result<LosslessReport, DmrError> {
    let mut agent = Agent::new(config.clone())?;
    agent.set_processor(Box::new(Chatter));
    let evictions = ingest_sessions(&mut agent, case)?;
    let context = agent.compose().map_err(StepError::from)?;
    let queued: std::collections::HashSet<_> =
        agent.context().queue.messages().map(|m| m.id).collect();
    let evicted: Vec<_> = agent
        .recall()
        .messages()
        .filter(|m| m.role == Role::User && !queued.contains(&m.id))
        .cloned()
        .collect();
    let page_size = agent.config().page_size;
    let mut retrievable = 0;
    for m in &evicted {
        let mut page = 0;
        loop {
            let p = agent
                .recall()
                .search_text(&m.text, page, page_size)
                .map_err(StepError::from)?;
            if p.items.iter().any(|x| x == m) {
                retrievable += 1;
                break;
            }
            if !p.has_more {
                break;
            }
            page += 1;
        }
    }
    Ok(LosslessReport {
        evictions,
        evicted_messages: evicted.len(),
        retrievable,
        planted_absent: !context.contains(&case.gold_answer),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_plants_one_unique_fact() {
        for seed in 0..20 {
            let case = gen_dmr(seed);
            assert_eq!(case.sessions.len(), SESSIONS);
            let holders: Vec<usize> = case
                .sessions
                .iter()
                .enumerate()
                .filter(|(_, s)| s.iter().any(|m| m.text.contains(&case.keyword)))
                .map(|(i, _)| i + 1)
                .collect();
            assert_eq!(holders, [case.gold_session_index]);
            assert!(case.gold_session_index <= 3);
            let mentions = case
                .sessions
                .iter()
                .flatten()
                .filter(|m| m.text.contains(&case.gold_answer))
                .count();
            assert_eq!(mentions, 1);
            assert_eq!(
                question_keyword(&case.question).as_deref(),
                Some(case.keyword.as_str())
            );
        }
        assert_eq!(gen_dmr(4), gen_dmr(4));
    }

    #[test]
    fn sentence_helpers() {
        assert_eq!(
            sentence_with("One. My cousin Zed sails. Three.", "Zed"),
            Some("My cousin Zed sails.")
        );
        assert_eq!(
            question_keyword("Do you remember what I told you about Brenda?").as_deref(),
            Some("Brenda")
        );
        assert_eq!(question_keyword("what about it?"), None);
    }

    #[test]
    fn scripted_policy_retrieves_gold() {
        let case = gen_dmr(1);
        let run = run_dmr(&dmr_config(), &case).unwrap();
        assert!(run.retrieved_gold, "{run:?}");
        assert!(run.rouge.recall >= 0.9, "{run:?}");
        assert!(
            !run.gold_in_context,
            "sessions 1-3 should have been evicted"
        );
        assert!(run.evictions >= 3);

        // Linear-scan oracle: the most recent earlier user message that
        // contains the keyword is the planted one.
        let top = case
            .sessions
            .iter()
            .flatten()
            .rev()
            .find(|m| m.text.to_lowercase().contains(&case.keyword.to_lowercase()))
            .unwrap();
        assert!(top.text.ends_with(&case.gold_answer));
        assert_eq!(run.answer, case.gold_answer);
    }

    #[test]
    fn summary_only_baseline_loses_the_fact() {
        let case = gen_dmr(2);
        let run = run_dmr_summary_only(&dmr_config(), &case).unwrap();
        assert!(!run.gold_in_context);
        assert_eq!(run.answer, NOT_REMEMBERED);
        assert!(!run.retrieved_gold);
    }

    #[test]
    fn mutated_keyword_is_not_retrieved() {
        let case = gen_dmr(3).with_mutated_keyword();
        let run = run_dmr(&dmr_config(), &case).unwrap();
        assert!(!run.retrieved_gold);
        assert_eq!(run.answer, NOT_REMEMBERED);
    }

    #[test]
    fn evicted_messages_stay_retrievable() {
        let r = check_lossless(&dmr_config(), &gen_dmr(5)).unwrap();
        assert!(r.evictions >= 3);
        assert!(r.evicted_messages > 0);
        assert_eq!(r.retrievable, r.evicted_messages);
        assert!(r.planted_absent);
    }
}
