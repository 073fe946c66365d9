//! `vctx` command line.

use std::fs::File;
use std::io::{BufRead, BufWriter, IsTerminal, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use chrono::Utc;
use clap::{Parser, Subcommand};
use serde_json::json;
use vctx_core::runtime::{AgentConfig, Event, StepTrace};
use vctx_eval::dmr::{dmr_config, gen_dmr, run_dmr, run_dmr_summary_only};
use vctx_eval::docqa::{load_corpus, load_questions, paragraphs, run_docqa, DocQaMode};
use vctx_eval::kv::{self, run_kv, run_kv_truncation_baseline, BASELINE_MAX_TOKENS};
use vctx_eval::metrics::{csim, rouge_l};
use vctx_eval::report::{summarize, write_jsonl, write_summary_csv, BenchRecord};

use crate::backends::build_backends;
use crate::config::{ServiceConfig, DEFAULT_PORT};
use crate::store::{AgentDescriptor, AgentStore, StoreError};

#[derive(Debug, Parser)]
#[command(
    name = "vctx",
    version,
    about = "Agents with a bounded context window and searchable external memory"
)]
pub struct Cli {
    /// Where agents are stored.
    #[arg(long, global = true, env = "VCTX_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// TOML service config.
    #[arg(long, global = true, env = "VCTX_CONFIG")]
    pub config: Option<PathBuf>,
    /// Report errors on stderr as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create, list and remove agents.
    #[command(subcommand)]
    Agent(AgentCmd),
    /// Talk to an agent on stdin/stdout.
    Chat {
        id: String,
        /// Also print thoughts, function calls and results.
        #[arg(long)]
        debug: bool,
    },
    /// Load a text file into archival memory, one entry per paragraph.
    Ingest { id: String, file: PathBuf },
    /// Run a benchmark with scripted policies.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Score texts.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

#[derive(Debug, Subcommand)]
pub enum AgentCmd {
    New {
        name: String,
        /// Agent config as JSON or TOML; defaults to the service template.
        #[arg(long)]
        agent_config: Option<PathBuf>,
    },
    List,
    Rm {
        id: String,
    },
}

#[derive(Debug, clap::Args)]
pub struct Output {
    /// Write one JSON record per case here.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
    /// Write a per-group CSV summary here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum BenchCmd {
    /// Nested key-value retrieval.
    Kv {
        /// A single depth; all of 0..=4 when omitted.
        #[arg(long)]
        depth: Option<usize>,
        /// Pair seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = kv::ORDERINGS)]
        orderings: u64,
        /// Run the no-archival truncation baseline instead.
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Deep memory retrieval over past sessions.
    Dmr {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        cases: u64,
        /// Disable recall search and answer from the summary-bearing context.
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Paged versus fixed-K question answering over a corpus.
    Docqa {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Subcommand)]
pub enum MetricsCmd {
    /// ROUGE-L of a candidate file against a reference file.
    Rouge {
        candidate: PathBuf,
        reference: PathBuf,
    },
    /// CSIM of an opener against persona fragments (one per line) and a human opener.
    Csim {
        opener: PathBuf,
        fragments: PathBuf,
        human: PathBuf,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl ToString) -> Self {
        CliError {
            code: 1,
            kind,
            message: message.to_string(),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => CliError {
                code: 2,
                kind: "NotFound",
                message: e.to_string(),
            },
            StoreError::Agent(_) => CliError::new("Agent", e),
            _ => CliError::new("Store", e),
        }
    }
}

type CliResult = Result<(), CliError>;

struct Env {
    config: ServiceConfig,
    store: AgentStore,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::new("Io", format!("cannot read {}: {e}", path.display())))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::new("Io", format!("cannot write {}: {e}", path.display())))
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() && std::env::args().any(|a| a == "--json") {
                let msg = e.to_string();
                eprintln!(
                    "{}",
                    json!({ "error": { "kind": "Usage", "message": msg.trim(), "code": 2 } })
                );
                return ExitCode::from(2);
            }
            e.exit();
        }
    };
    let json_errors = cli.json;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json_errors {
                eprintln!(
                    "{}",
                    json!({ "error": { "kind": e.kind, "message": e.message, "code": e.code } })
                );
            } else {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(e.code)
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    let config = match &cli.config {
        Some(p) => ServiceConfig::load(p).map_err(|e| CliError::new("Config", e))?,
        None => ServiceConfig::default(),
    };
    let data_dir = config.resolve_data_dir(cli.data_dir.as_deref());
    let env = Env {
        store: AgentStore::new(data_dir, config.http.clone()),
        config,
    };
    match cli.command {
        Command::Agent(cmd) => agent_cmd(&env, cmd),
        Command::Chat { id, debug } => chat(&env, &id, debug),
        Command::Ingest { id, file } => ingest(&env, &id, &file),
        Command::Bench(cmd) => bench(cmd),
        Command::Metrics(cmd) => metrics(&env, cmd),
        Command::Serve { port, host } => serve(env, host, port),
    }
}

fn read_agent_config(path: &Path) -> Result<AgentConfig, CliError> {
    let text = read_text(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::new("Config", format!("{}: {e}", path.display())))
}

fn print_descriptor(d: &AgentDescriptor) {
    println!(
        "{}  {}  {}  {} tokens  {}",
        d.agent_id,
        d.name,
        d.created_at.format("%Y-%m-%dT%H:%M:%SZ"),
        d.config.max_tokens,
        d.config.processor
    );
}

fn agent_cmd(env: &Env, cmd: AgentCmd) -> CliResult {
    match cmd {
        AgentCmd::New { name, agent_config } => {
            let config = match agent_config {
                Some(p) => read_agent_config(&p)?,
                None => env.config.agent.clone(),
            };
            let (d, _) = env.store.create(&name, config)?;
            println!("{}", d.agent_id);
        }
        AgentCmd::List => {
            for d in env.store.list()? {
                print_descriptor(&d);
            }
        }
        AgentCmd::Rm { id } => {
            env.store.remove(&id)?;
            println!("removed {id}");
        }
    }
    Ok(())
}

fn print_trace(out: &mut impl Write, trace: &StepTrace, debug: bool) -> std::io::Result<()> {
    for e in &trace.entries {
        if debug {
            if let Some(t) = &e.thoughts {
                writeln!(out, "  [thinks] {t}")?;
            }
            if let Some(err) = &e.error {
                writeln!(out, "  [error] {err}")?;
            }
            if let Some(c) = &e.call {
                writeln!(
                    out,
                    "  [calls] {}({})",
                    c.name,
                    serde_json::to_string(&c.params).unwrap_or_default()
                )?;
            }
            if let Some(r) = &e.function_result {
                writeln!(out, "  [result] {r}")?;
            }
        }
        if let Some(msg) = &e.outbound {
            writeln!(out, "agent> {msg}")?;
        }
    }
    if debug && trace.chain_limited {
        writeln!(out, "  [chain limit reached]")?;
    }
    Ok(())
}

fn chat(env: &Env, id: &str, debug: bool) -> CliResult {
    let (descriptor, mut agent) = env.store.load(id)?;
    let stdin = std::io::stdin();
    let interactive = stdin.is_terminal();
    let mut out = std::io::stdout();
    let io_err = |e: std::io::Error| CliError::new("Io", e);
    if interactive {
        writeln!(
            out,
            "chatting with {} ({}); Ctrl-D to quit",
            descriptor.name, descriptor.agent_id
        )
        .map_err(io_err)?;
    }
    let mut lines = stdin.lock().lines();
    loop {
        if interactive {
            write!(out, "you> ")
                .and_then(|_| out.flush())
                .map_err(io_err)?;
        }
        let Some(line) = lines.next() else { break };
        let line = line.map_err(io_err)?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == "/quit" {
            break;
        }
        match agent.step(Event::user(text, Utc::now())) {
            Ok(trace) => print_trace(&mut out, &trace, debug).map_err(io_err)?,
            Err(e) => eprintln!("error: {e}"),
        }
        env.store.save(&descriptor, &agent)?;
    }
    Ok(())
}

fn ingest(env: &Env, id: &str, file: &Path) -> CliResult {
    let (descriptor, mut agent) = env.store.load(id)?;
    let chunks = paragraphs(&read_text(file)?);
    if chunks.is_empty() {
        eprintln!("warning: 0 entries in {}", file.display());
        return Ok(());
    }
    let now = Utc::now();
    for c in &chunks {
        agent
            .ingest(c, now)
            .map_err(|e| CliError::new("Archival", e))?;
    }
    env.store.save(&descriptor, &agent)?;
    println!(
        "ingested {} entries into {}",
        chunks.len(),
        descriptor.agent_id
    );
    Ok(())
}

fn emit(output: &Output, records: &[BenchRecord]) -> CliResult {
    if let Some(p) = &output.jsonl {
        write_jsonl(create_file(p)?, records).map_err(|e| CliError::new("Io", e))?;
    }
    if let Some(p) = &output.summary {
        write_summary_csv(create_file(p)?, &summarize(records))
            .map_err(|e| CliError::new("Io", e))?;
    }
    Ok(())
}

fn bench(cmd: BenchCmd) -> CliResult {
    let bench_err = |e: &dyn std::fmt::Display| CliError::new("Bench", e);
    match cmd {
        BenchCmd::Kv {
            depth,
            seed,
            orderings,
            baseline,
            output,
        } => {
            let depths: Vec<usize> = match depth {
                Some(d) if d > kv::MAX_DEPTH => {
                    return Err(CliError::new(
                        "Usage",
                        format!("depth must be in 0..={}", kv::MAX_DEPTH),
                    ))
                }
                Some(d) => vec![d],
                None => (0..=kv::MAX_DEPTH).collect(),
            };
            let config = AgentConfig::default();
            let task = if baseline { "kv-baseline" } else { "kv" };
            let mut records = Vec::new();
            for d in depths {
                let runs = kv::sweep(&[d], seed, orderings, |ds| {
                    if baseline {
                        run_kv_truncation_baseline(ds, BASELINE_MAX_TOKENS)
                    } else {
                        run_kv(&config, ds)
                    }
                })
                .map_err(|e| bench_err(&e))?;
                println!("depth={d} acc={:.3}", kv::accuracy(&runs));
                records.extend(runs.iter().map(|r| BenchRecord::kv(task, r)));
            }
            emit(&output, &records)
        }
        BenchCmd::Dmr {
            seed,
            cases,
            baseline,
            output,
        } => {
            let task = if baseline { "dmr-summary-only" } else { "dmr" };
            let mut records = Vec::new();
            let (mut retrieved, mut rouge_f1) = (0, 0.0);
            for s in seed..seed + cases {
                let case = gen_dmr(s);
                let run = if baseline {
                    run_dmr_summary_only(&dmr_config(), &case)
                } else {
                    run_dmr(&dmr_config(), &case)
                }
                .map_err(|e| bench_err(&e))?;
                retrieved += usize::from(run.retrieved_gold);
                rouge_f1 += run.rouge.f1;
                records.push(BenchRecord::dmr(task, &case, &run));
            }
            let correct = records.iter().filter(|r| r.correct).count();
            let n = cases.max(1) as f64;
            println!(
                "{task} cases={cases} acc={:.3} retrieved={:.3} rouge_l_f1={:.3}",
                correct as f64 / n,
                retrieved as f64 / n,
                rouge_f1 / n
            );
            emit(&output, &records)
        }
        BenchCmd::Docqa {
            corpus,
            questions,
            k,
            output,
        } => {
            if k == 0 {
                return Err(CliError::new("Usage", "k must be at least 1"));
            }
            let corpus = load_corpus(&corpus).map_err(|e| bench_err(&e))?;
            let questions = load_questions(&questions).map_err(|e| bench_err(&e))?;
            let mut records = Vec::new();
            for (mode, task) in [
                (DocQaMode::Baseline, "docqa-baseline"),
                (DocQaMode::Paged, "docqa-paged"),
            ] {
                let report = run_docqa(&AgentConfig::default(), &corpus, &questions, k, mode)
                    .map_err(|e| bench_err(&e))?;
                println!("{task} K={k} acc={:.3}", report.accuracy);
                records.extend(BenchRecord::docqa(task, &report));
            }
            emit(&output, &records)
        }
    }
}

fn metrics(env: &Env, cmd: MetricsCmd) -> CliResult {
    match cmd {
        MetricsCmd::Rouge {
            candidate,
            reference,
        } => {
            let s = rouge_l(&read_text(&candidate)?, &read_text(&reference)?);
            println!(
                "{}",
                json!({ "precision": s.precision, "recall": s.recall, "f1": s.f1 })
            );
        }
        MetricsCmd::Csim {
            opener,
            fragments,
            human,
        } => {
            let frags: Vec<String> = read_text(&fragments)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect();
            let (_, embedder) = build_backends(&env.config.agent, &env.config.http)
                .map_err(|e| CliError::new("Agent", e))?;
            let s = csim(
                read_text(&opener)?.trim(),
                &frags,
                read_text(&human)?.trim(),
                &*embedder,
            )
            .map_err(|e| CliError::new("Metrics", e))?;
            println!(
                "{}",
                json!({ "csim1": s.csim1, "csim3": s.csim3, "csim_h": s.csim_h })
            );
        }
    }
    Ok(())
}

fn serve(env: Env, host: IpAddr, port: Option<u16>) -> CliResult {
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .try_init();
    let port = port.or(env.config.port).unwrap_or(DEFAULT_PORT);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::new("Io", e))?;
    rt.block_on(async move {
        let hub = crate::hub::Hub::open(env.store, env.config.agent)
            .await
            .map_err(|e| CliError::new("Store", e))?;
        crate::api::serve(Arc::new(hub), SocketAddr::new(host, port))
            .await
            .map_err(|e| CliError::new("Io", e))
    })
}
