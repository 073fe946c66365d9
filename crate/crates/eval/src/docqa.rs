//! Question answering over a paragraph corpus held in archival storage.
//!
//! Questions have the form `What is the <relation> of <entity>?` and the
//! reader answers from any passage containing `the <relation> of <entity> is`.

use std::path::Path;

use chrono::{TimeZone, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use vctx_core::runtime::{
    Agent, AgentConfig, AgentError, Event, Processor, ProcessorError, StepError,
};
use vctx_core::store::ArchivalError;
use vctx_core::Role;

use crate::policy::{call, last_function_result, last_line_with_role, say};

pub const NOT_FOUND: &str = "I could not find that in the documents.";
/// Page budget for paged mode; stays below the default chain limit.
pub const MAX_PAGES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocQuestion {
    pub question: String,
    /// Correct when this substring appears in the final message.
    pub answer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DocQaMode {
    /// Reads the top-K retrieved paragraphs and nothing else.
    Baseline,
    /// The agent pages through archival search results.
    Paged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocQaRun {
    pub question: String,
    pub answer: String,
    pub correct: bool,
    pub pages: usize,
    pub calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocQaReport {
    pub mode: DocQaMode,
    pub k: usize,
    pub accuracy: f64,
    pub runs: Vec<DocQaRun>,
}

#[derive(Debug, thiserror::Error)]
pub enum DocQaError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad question file {path}: {detail}")]
    Questions { path: String, detail: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Archival(#[from] ArchivalError),
    #[error(transparent)]
    Step(#[from] StepError),
}

/// Blank-line separated blocks, trimmed, empty ones dropped.
pub fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(cur.join("\n"));
                cur.clear();
            }
        } else {
            cur.push(line.trim_end());
        }
    }
    out.into_iter().map(|p| p.trim().to_string()).collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DocQaError + '_ {
    move |source| DocQaError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Paragraphs of a file, or of every `.txt` file in a directory in name order.
pub fn load_corpus(path: &Path) -> Result<Vec<String>, DocQaError> {
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "txt"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            out.extend(paragraphs(
                &std::fs::read_to_string(&f).map_err(io_err(&f))?,
            ));
        }
        Ok(out)
    } else {
        Ok(paragraphs(
            &std::fs::read_to_string(path).map_err(io_err(path))?,
        ))
    }
}

pub fn load_questions(path: &Path) -> Result<Vec<DocQuestion>, DocQaError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| DocQaError::Questions {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// The `the <relation> of <entity> is` phrase a question is looking for, lowercased.
pub fn cue(question: &str) -> Option<String> {
    let re = Regex::new(r"(?i)^\s*what is the (.+?) of (.+?)\?*\s*$").unwrap();
    let c = re.captures(question)?;
    Some(format!("the {} of {} is ", &c[1], &c[2]).to_lowercase())
}

/// Text following the cue up to the end of its clause.
pub fn read_answer(passage: &str, question: &str) -> Option<String> {
    let cue = cue(question)?;
    // Lowercasing ASCII keeps byte offsets aligned with the original.
    let lower = passage.to_ascii_lowercase();
    let at = lower.find(&cue)? + cue.len();
    let rest = &passage[at..];
    let end = rest.find(['.', ',', ';', '\n']).unwrap_or(rest.len());
    let ans = rest[..end].trim();
    (!ans.is_empty()).then(|| ans.to_string())
}

fn is_correct(answer: &str, gold: &str) -> bool {
    answer.to_lowercase().contains(&gold.to_lowercase())
}

/// Pages through archival search until a result answers the question.
#[derive(Default)]
pub struct PagingReader {
    current: Option<(String, usize)>,
}

impl Processor for PagingReader {
    fn complete(&mut self, prompt: &str) -> Result<String, ProcessorError> {
        let question = last_line_with_role(prompt, Role::User)
            .unwrap_or_default()
            .to_string();
        let page = match &self.current {
            Some((q, page)) if *q == question => *page,
            _ => {
                self.current = Some((question.clone(), 0));
                return Ok(call(
                    "The answer should be in the documents.",
                    "archival_search",
                    json!({ "query": question, "page": 0 }),
                    true,
                ));
            }
        };
        let result = last_function_result(prompt).unwrap_or_default();
        let items = result["result"]["items"]
            .as_array()
            .cloned()
            .unwrap_or_default();
        if let Some(ans) = items
            .iter()
            .find_map(|i| read_answer(i["text"].as_str().unwrap_or_default(), &question))
        {
            self.current = None;
            return Ok(say(&format!("Found on page {page}."), &ans));
        }
        if result["result"]["has_more"] == true && page + 1 < MAX_PAGES {
            self.current = Some((question.clone(), page + 1));
            return Ok(call(
                "Not on this page; try the next one.",
                "archival_search",
                json!({ "query": question, "page": page + 1 }),
                true,
            ));
        }
        self.current = None;
        Ok(say("Ran out of results.", NOT_FOUND))
    }
}

fn accuracy(runs: &[DocQaRun]) -> f64 {
    if runs.is_empty() {
        return 0.0;
    }
    runs.iter().filter(|r| r.correct).count() as f64 / runs.len() as f64
}

/// Loads `corpus` into archival storage and answers every question with page
/// size `k`. An empty corpus or question list scores 0.
pub fn run_docqa(
    config: &AgentConfig,
    corpus: &[String],
    questions: &[DocQuestion],
    k: usize,
    mode: DocQaMode,
) -> Result<DocQaReport, DocQaError> {
    let config = AgentConfig {
        page_size: k,
        ..config.clone()
    };
    let mut agent = Agent::new(config)?;
    let t0 = Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap();
    for p in corpus {
        agent.ingest(p, t0)?;
    }
    agent.set_processor(Box::new(PagingReader::default()));
    let mut runs = Vec::with_capacity(questions.len());
    for (i, q) in questions.iter().enumerate() {
        let run = match mode {
            DocQaMode::Baseline => {
                let top = if agent.archival().is_empty() {
                    Vec::new()
                } else {
                    agent.archival().search(&q.question, 0, k)?.items
                };
                let answer = top
                    .iter()
                    .find_map(|h| read_answer(&h.text, &q.question))
                    .unwrap_or_else(|| NOT_FOUND.to_string());
                DocQaRun {
                    correct: is_correct(&answer, &q.answer),
                    question: q.question.clone(),
                    answer,
                    pages: 1,
                    calls: 0,
                }
            }
            DocQaMode::Paged => {
                let at = t0 + chrono::Duration::minutes(i as i64 + 1);
                let trace = agent.step(Event::user(q.question.clone(), at))?;
                let answer = trace
                    .outbound()
                    .last()
                    .map(|s| s.to_string())
                    .unwrap_or_default();
                let pages = trace
                    .entries
                    .iter()
                    .filter(|e| e.call.as_ref().is_some_and(|c| c.name == "archival_search"))
                    .count();
                DocQaRun {
                    correct: is_correct(&answer, &q.answer),
                    question: q.question.clone(),
                    answer,
                    pages,
                    calls: trace.entries.len(),
                }
            }
        };
        runs.push(run);
    }
    Ok(DocQaReport {
        mode,
        k,
        accuracy: accuracy(&runs),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;
    use vctx_core::embed::{cosine, Embedder, HashedBowEmbedder};

    const K: usize = 5;

    fn fixture_dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/docqa")
    }

    fn fixture() -> (Vec<String>, Vec<DocQuestion>) {
        let d = fixture_dir();
        (
            load_corpus(&d.join("corpus.txt")).unwrap(),
            load_questions(&d.join("questions.json")).unwrap(),
        )
    }

    /// 1-based rank of the answering paragraph by exhaustive cosine, with
    /// ties broken by corpus order.
    fn oracle_rank(corpus: &[String], q: &DocQuestion) -> usize {
        let e = HashedBowEmbedder::default();
        let qv = e.embed(&q.question).unwrap();
        let mut scored: Vec<(usize, f64)> = corpus
            .iter()
            .enumerate()
            .map(|(i, p)| (i, cosine(&qv, &e.embed(p).unwrap())))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let golds: Vec<usize> = corpus
            .iter()
            .enumerate()
            .filter(|(_, p)| read_answer(p, &q.question).is_some())
            .map(|(i, _)| i)
            .collect();
        assert_eq!(
            golds.len(),
            1,
            "exactly one paragraph answers {:?}",
            q.question
        );
        scored.iter().position(|(i, _)| *i == golds[0]).unwrap() + 1
    }

    #[test]
    fn paragraph_splitting() {
        assert_eq!(paragraphs("a\nb\n\n\n  c  \n"), ["a\nb", "c"]);
        assert!(paragraphs("\n \n").is_empty());
    }

    #[test]
    fn reader_extracts_clause() {
        let q = "What is the capital of Veltria?";
        assert_eq!(cue(q).unwrap(), "the capital of veltria is ");
        assert_eq!(
            read_answer("So. The capital of Veltria is Morrowgate, a town.", q).unwrap(),
            "Morrowgate"
        );
        assert_eq!(read_answer("Is the capital of Veltria old?", q), None);
        assert_eq!(cue("Who wrote it?"), None);
    }

    #[test]
    fn fixture_gold_sits_at_rank_k_plus_two() {
        let (corpus, questions) = fixture();
        for q in &questions {
            assert_eq!(oracle_rank(&corpus, q), K + 2, "{}", q.question);
        }
    }

    #[test]
    fn paging_beats_fixed_k_on_fixture() {
        let (corpus, questions) = fixture();
        let cfg = AgentConfig::default();
        let base = run_docqa(&cfg, &corpus, &questions, K, DocQaMode::Baseline).unwrap();
        let paged = run_docqa(&cfg, &corpus, &questions, K, DocQaMode::Paged).unwrap();
        assert_eq!(base.accuracy, 0.0, "{base:?}");
        assert_eq!(paged.accuracy, 1.0, "{paged:?}");
        assert!(paged.runs.iter().all(|r| r.pages == 2));
    }

    #[test]
    fn rank_one_gold_is_found_by_both_modes() {
        let corpus: Vec<String> = [
            "The mascot of Tarn is an otter.",
            "Bread rises in a warm kitchen.",
            "Tide tables list low water times.",
        ]
        .map(String::from)
        .into();
        let qs = vec![DocQuestion {
            question: "What is the mascot of Tarn?".into(),
            answer: "otter".into(),
        }];
        assert_eq!(oracle_rank(&corpus, &qs[0]), 1);
        for mode in [DocQaMode::Baseline, DocQaMode::Paged] {
            let r = run_docqa(&AgentConfig::default(), &corpus, &qs, K, mode).unwrap();
            assert_eq!(r.accuracy, 1.0, "{r:?}");
        }
    }

    #[test]
    fn empty_corpus_scores_zero() {
        let (_, questions) = fixture();
        for mode in [DocQaMode::Baseline, DocQaMode::Paged] {
            let r = run_docqa(&AgentConfig::default(), &[], &questions, K, mode).unwrap();
            assert_eq!(r.accuracy, 0.0);
            assert!(r.runs.iter().all(|r| !r.correct));
        }
        let r = run_docqa(&AgentConfig::default(), &[], &[], K, DocQaMode::Paged).unwrap();
        assert_eq!(r.accuracy, 0.0);
    }
}
