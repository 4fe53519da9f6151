//! Benchmark plumbing: gold data, EM-lite and EX metrics, NLI training
//! triples and evaluation reports.

mod em;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::db::{bag_equal, Gateway, ResultSet, Session};
use crate::explain::explain;
use crate::feedback::{item_seed, TranslationTask};
use crate::sql::{self, SqlQuery};
use crate::verify::{assemble_premise, normalize_sql, OracleVerifier};

pub use em::{canonical_form, exact_match};

/// Most erroneous predictions turned into negatives per gold example.
pub const MAX_NEGATIVES: usize = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed gold file {path}: {message}")]
    MalformedGold { path: String, message: String },
    #[error("no gold example for result {0:?}")]
    MissingGold(String),
}

/// A question with its reference SQL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldExample {
    pub id: String,
    pub question: String,
    pub gold_sql: String,
    pub db_id: String,
    /// Benchmark hardness label, when the file carries one.
    pub difficulty: Option<String>,
}

#[derive(Deserialize)]
struct GoldRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    question: String,
    #[serde(alias = "gold_sql")]
    query: String,
    db_id: String,
    #[serde(default, alias = "hardness")]
    difficulty: Option<String>,
}

/// Parses a benchmark-style JSON array of `{question, query, db_id}`
/// objects. Records without an `id` get their array index as id.
pub fn parse_gold(text: &str) -> Result<Vec<GoldExample>, serde_json::Error> {
    let records: Vec<GoldRecord> = serde_json::from_str(text)?;
    Ok(records
        .into_iter()
        .enumerate()
        .map(|(i, r)| GoldExample {
            id: match r.id {
                Some(serde_json::Value::String(s)) => s,
                Some(other) => other.to_string(),
                None => i.to_string(),
            },
            question: r.question,
            gold_sql: r.query,
            db_id: r.db_id,
            difficulty: r.difficulty,
        })
        .collect())
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldExample>, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_gold(&text)
        .map_err(|e| HarnessError::MalformedGold { path: path.display().to_string(), message: e.to_string() })
}

fn run_sql(session: &Session<'_>, text: &str) -> Result<(SqlQuery, ResultSet), String> {
    let parsed = sql::parse(text, session.schema()).map_err(|e| e.to_string())?;
    let result = session.execute(&parsed).map_err(|e| e.to_string())?;
    Ok((parsed, result))
}

/// Whether `pred_sql` returns the same bag of rows as `gold_sql`. Any
/// failure counts as a mismatch.
pub fn execution_match(gateway: &Gateway, pred_sql: &str, gold_sql: &str, db_id: &str) -> bool {
    let session = match gateway.session(db_id) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("{db_id}: {e}");
            return false;
        }
    };
    session_match(&session, pred_sql, gold_sql)
}

fn session_match(session: &Session<'_>, pred_sql: &str, gold_sql: &str) -> bool {
    let (gold_names, gold) = match session.run(gold_sql) {
        Ok((names, rows, _)) => (names, rows),
        Err(e) => {
            log::warn!("gold query failed: {e}");
            return false;
        }
    };
    match session.run(pred_sql) {
        Ok((names, rows, _)) => names.len() == gold_names.len() && crate::db::rows_bag_equal(&rows, &gold),
        Err(e) => {
            log::debug!("prediction failed: {e}");
            false
        }
    }
}

/// One NLI training example. Label +1 means the SQL answers the question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliTriple {
    pub premise: String,
    pub hypothesis: String,
    pub label: i8,
}

/// A model's prediction for a gold example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    #[serde(alias = "query", alias = "predicted_sql")]
    pub sql: String,
}

/// Builds a premise from `text`'s result, traced through a seeded row.
fn triple_for(
    session: &Session<'_>,
    parsed: &SqlQuery,
    result: &ResultSet,
    seed: u64,
    key: &str,
    hypothesis: &str,
    label: i8,
) -> Option<NliTriple> {
    let row = (!result.rows.is_empty()).then(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(item_seed(seed, key));
        &result.rows[rng.gen_range(0..result.rows.len())]
    });
    match explain(session, parsed, result, row) {
        Ok(e) => {
            Some(NliTriple { premise: assemble_premise(&e, result, parsed), hypothesis: hypothesis.to_string(), label })
        }
        Err(e) => {
            log::warn!("{key}: {e}");
            None
        }
    }
}

fn triples_for_example(gateway: &Gateway, gold: &GoldExample, preds: &[&str], seed: u64) -> Vec<NliTriple> {
    let session = match gateway.session(&gold.db_id) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("{}: {e}", gold.id);
            return Vec::new();
        }
    };
    let (gold_parsed, gold_result) = match run_sql(&session, &gold.gold_sql) {
        Ok(x) => x,
        Err(e) => {
            log::warn!("{}: gold query skipped: {e}", gold.id);
            return Vec::new();
        }
    };
    let mut out = Vec::new();
    out.extend(triple_for(&session, &gold_parsed, &gold_result, seed, &gold.id, &gold.question, 1));
    let mut seen = HashSet::from([normalize_sql(&gold.gold_sql)]);
    let mut negatives = 0;
    for pred in preds {
        if negatives == MAX_NEGATIVES {
            break;
        }
        if !seen.insert(normalize_sql(pred)) {
            continue;
        }
        let Ok((parsed, result)) = run_sql(&session, pred) else { continue };
        if bag_equal(&result, &gold_result) {
            continue;
        }
        let key = format!("{}#{}", gold.id, normalize_sql(pred));
        if let Some(t) = triple_for(&session, &parsed, &result, seed, &key, &gold.question, -1) {
            out.push(t);
            negatives += 1;
        }
    }
    out
}

/// Positive triples from gold SQL and negative triples from predictions
/// whose results differ from gold, at most [`MAX_NEGATIVES`] per example.
/// Output follows gold order and is identical for equal seeds.
pub fn gen_training_triples(
    gateway: &Gateway,
    gold: &[GoldExample],
    predictions: &[Prediction],
    seed: u64,
) -> Vec<NliTriple> {
    let mut by_id: HashMap<&str, Vec<&str>> = HashMap::new();
    for p in predictions {
        by_id.entry(p.id.as_str()).or_default().push(p.sql.as_str());
    }
    gold.par_iter()
        .map(|g| triples_for_example(gateway, g, by_id.get(g.id.as_str()).map_or(&[][..], Vec::as_slice), seed))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// The parts of a loop result that evaluation reads. Tasks that failed
/// carry no SQL and count as wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    #[serde(default)]
    pub chosen_sql: Option<String>,
    #[serde(default)]
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Metrics {
    pub em: bool,
    pub ex: bool,
}

impl Default for Metrics {
    fn default() -> Self {
        Self { em: true, ex: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em_lite: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ex: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(flatten)]
    pub overall: Bucket,
    pub mean_iterations: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_difficulty: BTreeMap<String, Bucket>,
}

struct Scored<'a> {
    difficulty: Option<&'a str>,
    em: bool,
    ex: bool,
}

fn bucket<'a>(items: impl Iterator<Item = &'a Scored<'a>>, metrics: Metrics) -> Bucket {
    let (mut n, mut em, mut ex) = (0usize, 0usize, 0usize);
    for s in items {
        n += 1;
        em += usize::from(s.em);
        ex += usize::from(s.ex);
    }
    let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Bucket { count: n, em_lite: metrics.em.then(|| frac(em)), ex: metrics.ex.then(|| frac(ex)) }
}

fn score_one(gateway: &Gateway, record: &EvalRecord, gold: &GoldExample, metrics: Metrics) -> (bool, bool) {
    let Some(pred) = &record.chosen_sql else { return (false, false) };
    let ex = metrics.ex && execution_match(gateway, pred, &gold.gold_sql, &gold.db_id);
    let em = metrics.em
        && gateway.schema(&gold.db_id).is_ok_and(|schema| {
            match (sql::parse(pred, schema), sql::parse(&gold.gold_sql, schema)) {
                (Ok(p), Ok(g)) => exact_match(&p, &g),
                _ => false,
            }
        });
    (em, ex)
}

/// Scores loop results against gold. Every result id must have gold.
pub fn evaluate(
    gateway: &Gateway,
    results: &[EvalRecord],
    gold: &[GoldExample],
    metrics: Metrics,
) -> Result<Report, HarnessError> {
    let index: HashMap<&str, &GoldExample> = gold.iter().map(|g| (g.id.as_str(), g)).collect();
    let pairs = results
        .iter()
        .map(|r| index.get(r.id.as_str()).map(|g| (r, *g)).ok_or_else(|| HarnessError::MissingGold(r.id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let scored: Vec<Scored<'_>> = pairs
        .par_iter()
        .map(|(r, g)| {
            let (em, ex) = score_one(gateway, r, g, metrics);
            Scored { difficulty: g.difficulty.as_deref(), em, ex }
        })
        .collect();
    let mut by_difficulty = BTreeMap::new();
    let levels: HashSet<&str> = scored.iter().filter_map(|s| s.difficulty).collect();
    for level in levels {
        by_difficulty.insert(level.to_string(), bucket(scored.iter().filter(|s| s.difficulty == Some(level)), metrics));
    }
    let total_iterations: usize = results.iter().map(|r| r.iterations).sum();
    Ok(Report {
        overall: bucket(scored.iter(), metrics),
        mean_iterations: total_iterations as f64 / results.len().max(1) as f64,
        by_difficulty,
    })
}

/// Oracle verifier that accepts exactly the candidates whose results match
/// their task's gold.
pub fn oracle_from_gold(gateway: &Gateway, tasks: &[TranslationTask], gold: &[GoldExample]) -> OracleVerifier {
    let index: HashMap<&str, &GoldExample> = gold.iter().map(|g| (g.id.as_str(), g)).collect();
    let mut oracle = OracleVerifier::new();
    for task in tasks {
        let Some(g) = index.get(task.id.as_str()) else { continue };
        let Ok(session) = gateway.session(&task.db_id) else { continue };
        for c in &task.candidates {
            oracle.insert(&task.question, c, session_match(&session, c, &g.gold_sql));
        }
    }
    oracle
}

/// EX of the best-case selector that always finds a correct candidate when
/// one exists among the first `k`.
pub fn any_candidate_accuracy(gateway: &Gateway, tasks: &[TranslationTask], gold: &[GoldExample], k: usize) -> f64 {
    accuracy(gateway, tasks, gold, |t| t.candidates.iter().take(k.max(1)).collect())
}

/// EX of always taking the first candidate.
pub fn top1_accuracy(gateway: &Gateway, tasks: &[TranslationTask], gold: &[GoldExample]) -> f64 {
    accuracy(gateway, tasks, gold, |t| t.candidates.iter().take(1).collect())
}

fn accuracy(
    gateway: &Gateway,
    tasks: &[TranslationTask],
    gold: &[GoldExample],
    pick: impl Fn(&TranslationTask) -> Vec<&String> + Sync,
) -> f64 {
    let index: HashMap<&str, &GoldExample> = gold.iter().map(|g| (g.id.as_str(), g)).collect();
    let hits = tasks
        .par_iter()
        .filter(|t| {
            index
                .get(t.id.as_str())
                .is_some_and(|g| pick(t).into_iter().any(|c| execution_match(gateway, c, &g.gold_sql, &t.db_id)))
        })
        .count();
    hits as f64 / tasks.len().max(1) as f64
}
