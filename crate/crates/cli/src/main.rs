//! Command-line front end: explain, verify and loop over candidate SQL,
//! generate NLI training triples and score loop results.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cyclesql::db::Gateway;
use cyclesql::explain::explain;
use cyclesql::feedback::{read_jsonl, run_dataset, write_jsonl, LoopConfig, RowPolicy, TranslationTask, DEFAULT_K};
use cyclesql::harness::{evaluate, gen_training_triples, load_gold, oracle_from_gold, EvalRecord, Metrics, Prediction};
use cyclesql::sql;
use cyclesql::verify::{
    assemble_premise, HeuristicVerifier, NliInput, RemoteConfig, RemoteVerifier, VerifierBackend, VERIFIER_URL_ENV,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "cyclesql", version, about = "Explain and verify NL-to-SQL translations against their data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Remote,
    Heuristic,
    Oracle,
}

#[derive(Subcommand)]
enum Command {
    /// Explain one query's result through one of its rows.
    Explain {
        #[arg(long)]
        db_root: PathBuf,
        #[arg(long)]
        db_id: String,
        #[arg(long)]
        sql: String,
        /// 1-based result row to trace; defaults to the first.
        #[arg(long)]
        row: Option<usize>,
        /// Print the explanation and result as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Check whether a query's explanation entails a question.
    Verify {
        #[arg(long)]
        db_root: PathBuf,
        #[arg(long)]
        db_id: String,
        #[arg(long)]
        question: String,
        #[arg(long)]
        sql: String,
        #[arg(long, value_enum, default_value = "heuristic")]
        verifier: Backend,
        /// Service URL for the remote verifier; defaults to the environment.
        #[arg(long)]
        verifier_url: Option<String>,
    },
    /// Run the feedback loop over a JSONL file of candidate lists.
    Loop {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        db_root: PathBuf,
        #[arg(long, value_enum, default_value = "heuristic")]
        verifier: Backend,
        #[arg(long)]
        verifier_url: Option<String>,
        /// Gold file; required by the oracle verifier.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        /// Trace a seeded random row instead of the first one.
        #[arg(long)]
        row_seed: Option<u64>,
        /// Per-query execution timeout in milliseconds.
        #[arg(long, default_value_t = 30_000)]
        timeout_ms: u64,
        /// Output JSONL; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build premise-hypothesis-label triples from gold SQL and predictions.
    GenTrain {
        #[arg(long)]
        gold: PathBuf,
        /// JSONL of {"id", "sql"} predictions.
        #[arg(long)]
        preds: Option<PathBuf>,
        #[arg(long)]
        db_root: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score loop results against gold.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        db_root: PathBuf,
        /// Comma-separated subset of em,ex.
        #[arg(long, default_value = "em,ex")]
        metrics: String,
        /// Report JSON; standard output when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn open_gateway(db_root: &Path) -> Result<Gateway> {
    let gateway =
        Gateway::open_root(db_root).with_context(|| format!("loading databases from {}", db_root.display()))?;
    for w in &gateway.catalog().warnings {
        log::warn!("{w}");
    }
    Ok(gateway)
}

fn remote(url: Option<String>) -> Result<RemoteVerifier> {
    let verifier = match url {
        Some(u) => RemoteVerifier::new(RemoteConfig::new(u))?,
        None => RemoteVerifier::from_env().with_context(|| format!("set --verifier-url or {VERIFIER_URL_ENV}"))?,
    };
    if !verifier.healthy() {
        log::warn!("verifier at {} did not report healthy", verifier.config().base_url);
    }
    Ok(verifier)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn parse_metrics(text: &str) -> Result<Metrics> {
    let mut m = Metrics { em: false, ex: false };
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part {
            "em" => m.em = true,
            "ex" => m.ex = true,
            other => bail!("unknown metric {other:?}; expected em or ex"),
        }
    }
    if !(m.em || m.ex) {
        bail!("no metrics selected");
    }
    Ok(m)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Explain { db_root, db_id, sql: text, row, json } => {
            let gateway = open_gateway(&db_root)?;
            let session = gateway.session(&db_id)?;
            let parsed = sql::parse(&text, session.schema())?;
            let result = session.execute(&parsed)?;
            let subject = match row {
                Some(0) => bail!("--row is 1-based"),
                Some(n) => Some(result.rows.get(n - 1).with_context(|| {
                    format!("--row {n} is out of range; the result has {} rows", result.rows.len())
                })?),
                None => None,
            };
            let explanation = explain(&session, &parsed, &result, subject)?;
            let mut out = output(None)?;
            if json {
                serde_json::to_writer_pretty(&mut out, &json!({ "explanation": explanation, "result": result }))?;
                writeln!(out)?;
            } else {
                writeln!(out, "{}", explanation.text)?;
            }
            out.flush()?;
        }
        Command::Verify { db_root, db_id, question, sql: text, verifier, verifier_url } => {
            let backend: Box<dyn VerifierBackend> = match verifier {
                Backend::Remote => Box::new(remote(verifier_url)?),
                Backend::Heuristic => Box::new(HeuristicVerifier::default()),
                Backend::Oracle => bail!("the oracle verifier needs gold data; use it with `loop --gold`"),
            };
            let gateway = open_gateway(&db_root)?;
            let session = gateway.session(&db_id)?;
            let parsed = sql::parse(&text, session.schema())?;
            let result = session.execute(&parsed)?;
            let explanation = explain(&session, &parsed, &result, None)?;
            let premise = assemble_premise(&explanation, &result, &parsed);
            let verdict = backend.verify(&NliInput::new(premise.clone(), question))?;
            println!("{}", serde_json::to_string_pretty(&json!({ "premise": premise, "verdict": verdict }))?);
        }
        Command::Loop { dataset, db_root, verifier, verifier_url, gold, k, row_seed, timeout_ms, out } => {
            if k == 0 {
                bail!("--k must be at least 1");
            }
            let gateway = open_gateway(&db_root)?;
            let tasks: Vec<TranslationTask> = read_lines(&dataset)?;
            let backend: Box<dyn VerifierBackend> = match verifier {
                Backend::Remote => Box::new(remote(verifier_url)?),
                Backend::Heuristic => Box::new(HeuristicVerifier::default()),
                Backend::Oracle => {
                    let gold = gold.context("--verifier oracle requires --gold")?;
                    Box::new(oracle_from_gold(&gateway, &tasks, &load_gold(&gold)?))
                }
            };
            let config = LoopConfig {
                k,
                row_policy: row_seed.map_or(RowPolicy::First, RowPolicy::SeededRandom),
                timeout: Duration::from_millis(timeout_ms),
            };
            let run = run_dataset(&gateway, &tasks, backend.as_ref(), &config);
            let lines = run.results.iter().zip(&tasks).map(|(r, t)| match r {
                Ok(result) => serde_json::to_value(result).unwrap_or_default(),
                Err(e) => json!({ "id": t.id, "error": e.to_string() }),
            });
            let mut sink = output(out.as_deref())?;
            write_jsonl(&mut sink, lines)?;
            sink.flush()?;
            let failed = run.results.iter().filter(|r| r.is_err()).count();
            eprintln!(
                "tasks: {}, failed: {failed}, mean iterations: {:.4}, entailed: {:.4}",
                tasks.len(),
                run.mean_iterations,
                run.entailed_fraction
            );
        }
        Command::GenTrain { gold, preds, db_root, seed, out } => {
            let gateway = open_gateway(&db_root)?;
            let gold = load_gold(&gold)?;
            let predictions: Vec<Prediction> = match preds {
                Some(p) => read_lines(&p)?,
                None => Vec::new(),
            };
            let triples = gen_training_triples(&gateway, &gold, &predictions, seed);
            let mut sink = output(out.as_deref())?;
            write_jsonl(&mut sink, &triples)?;
            sink.flush()?;
            let positives = triples.iter().filter(|t| t.label == 1).count();
            eprintln!("triples: {} ({positives} positive, {} negative)", triples.len(), triples.len() - positives);
        }
        Command::Eval { results, gold, db_root, metrics, report } => {
            let metrics = parse_metrics(&metrics)?;
            let gateway = open_gateway(&db_root)?;
            let records: Vec<EvalRecord> = read_lines(&results)?;
            let report_data = evaluate(&gateway, &records, &load_gold(&gold)?, metrics)?;
            let mut sink = output(report.as_deref())?;
            serde_json::to_writer_pretty(&mut sink, &report_data)?;
            writeln!(sink)?;
            sink.flush()?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
