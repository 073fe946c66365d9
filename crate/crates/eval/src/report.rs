//! Benchmark output: one JSON line per case plus a CSV summary.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::dmr::{DmrCase, DmrRun};
use crate::docqa::DocQaReport;
use crate::kv::KvRun;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BenchRecord {
    pub task: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub seed: u64,
    pub correct: bool,
    /// Processor invocations.
    pub calls: usize,
}

impl BenchRecord {
    pub fn kv(task: &str, run: &KvRun) -> Self {
        BenchRecord {
            task: task.into(),
            depth: Some(run.depth),
            k: None,
            seed: run.ordering_seed,
            correct: run.correct,
            calls: run.n_processor_calls,
        }
    }

    /// Correct when the gold fact appears in the answer.
    pub fn dmr(task: &str, case: &DmrCase, run: &DmrRun) -> Self {
        BenchRecord {
            task: task.into(),
            depth: None,
            k: None,
            seed: case.seed,
            correct: run.answer.contains(&case.gold_answer),
            calls: run.calls,
        }
    }

    /// One record per question; the seed is the question's index.
    pub fn docqa(task: &str, report: &DocQaReport) -> Vec<Self> {
        report
            .runs
            .iter()
            .enumerate()
            .map(|(i, r)| BenchRecord {
                task: task.into(),
                depth: None,
                k: Some(report.k),
                seed: i as u64,
                correct: r.correct,
                calls: r.calls,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub task: String,
    /// `depth=N`, `K=N`, or empty.
    pub group: String,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub mean_calls: f64,
}

pub fn summarize(records: &[BenchRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String), Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        let group = match (r.depth, r.k) {
            (Some(d), _) => format!("depth={d}"),
            (None, Some(k)) => format!("K={k}"),
            (None, None) => String::new(),
        };
        groups.entry((r.task.clone(), group)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((task, group), rs)| {
            let n = rs.len();
            let correct = rs.iter().filter(|r| r.correct).count();
            SummaryRow {
                task,
                group,
                n,
                correct,
                accuracy: correct as f64 / n as f64,
                mean_calls: rs.iter().map(|r| r.calls as f64).sum::<f64>() / n as f64,
            }
        })
        .collect()
}

pub fn write_jsonl(mut w: impl Write, records: &[BenchRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_summary_csv(w: impl Write, rows: &[SummaryRow]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
