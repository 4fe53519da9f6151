//! The feedback loop: walk a ranked candidate list, explain each executable
//! candidate and stop at the first one the verifier accepts.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::db::{DbError, Gateway, Limits};
use crate::explain::{explain, Explanation};
use crate::sql::{self, NlQuery};
use crate::verify::{assemble_premise, normalize_sql, NliInput, Verdict, VerifierBackend, VerifyError};

/// Beam size used when none is configured.
pub const DEFAULT_K: usize = 8;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("task {0:?} has no candidates")]
    NoCandidates(String),
    #[error("task {0:?} has an empty question")]
    EmptyQuestion(String),
    #[error("no candidate of task {0:?} parses")]
    NothingParses(String),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error("verifier failed on task {id:?}: {source}")]
    Verifier { id: String, source: VerifyError },
}

/// One question with its ranked candidate translations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationTask {
    pub id: String,
    pub db_id: String,
    pub question: String,
    /// Best first.
    pub candidates: Vec<String>,
}

impl TranslationTask {
    fn validate(&self) -> Result<NlQuery, TaskError> {
        if self.candidates.is_empty() {
            return Err(TaskError::NoCandidates(self.id.clone()));
        }
        NlQuery::new(self.question.as_str(), self.db_id.as_str()).map_err(|_| TaskError::EmptyQuestion(self.id.clone()))
    }
}

/// Which result row an explanation is traced through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowPolicy {
    #[default]
    First,
    /// Uniform choice, seeded per task and candidate rank.
    SeededRandom(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig {
    pub k: usize,
    pub row_policy: RowPolicy,
    /// Per-query execution timeout.
    pub timeout: Duration,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self { k: DEFAULT_K, row_policy: RowPolicy::First, timeout: Limits::default().timeout }
    }
}

/// What happened to one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrailEntry {
    pub candidate: String,
    /// 1-based position in the task's candidate list.
    pub rank: usize,
    pub parse_ok: bool,
    pub exec_ok: bool,
    /// Present exactly when the verifier was consulted.
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopResult {
    pub id: String,
    pub chosen_sql: String,
    pub chosen_rank: usize,
    /// Verifier calls made.
    pub iterations: usize,
    pub fallback_used: bool,
    pub explanation: Option<Explanation>,
    pub trail: Vec<TrailEntry>,
}

/// 64-bit FNV-1a, used to derive stable per-item seeds.
pub fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Seed for one item of a seeded run.
pub fn item_seed(seed: u64, key: &str) -> u64 {
    seed ^ fnv1a(key)
}

/// Candidates kept for the loop: the first `k`, minus repeats of an earlier
/// candidate's normalized text. Returns (rank, text) pairs.
fn shortlist(candidates: &[String], k: usize) -> Vec<(usize, &str)> {
    let mut seen = HashSet::new();
    candidates
        .iter()
        .take(k.max(1))
        .enumerate()
        .filter(|(_, c)| seen.insert(normalize_sql(c)))
        .map(|(i, c)| (i + 1, c.as_str()))
        .collect()
}

/// Runs the loop for one task. Parse, execution and explanation failures
/// reject a candidate without a verifier call; a verifier error aborts the
/// task so an outage is not mistaken for rejections.
pub fn run_task(
    gateway: &Gateway,
    task: &TranslationTask,
    backend: &dyn VerifierBackend,
    config: &LoopConfig,
) -> Result<LoopResult, TaskError> {
    let question = task.validate()?;
    let mut session = gateway.session(&task.db_id)?;
    session.set_limits(Limits { timeout: config.timeout, ..session.limits() });
    let schema = session.schema();

    let mut trail = Vec::new();
    let mut first_explanation = None;
    let mut any_parsed = false;
    for (rank, candidate) in shortlist(&task.candidates, config.k) {
        let mut entry = TrailEntry {
            candidate: candidate.to_string(),
            rank,
            parse_ok: false,
            exec_ok: false,
            verdict: None,
            error: None,
        };
        let parsed = match sql::parse(candidate, schema) {
            Ok(p) => p,
            Err(e) => {
                entry.error = Some(e.to_string());
                trail.push(entry);
                continue;
            }
        };
        entry.parse_ok = true;
        any_parsed = true;
        let result = match session.execute(&parsed) {
            Ok(r) => r,
            Err(e) => {
                entry.error = Some(e.to_string());
                trail.push(entry);
                continue;
            }
        };
        entry.exec_ok = true;
        let row = match config.row_policy {
            RowPolicy::First => result.rows.first(),
            RowPolicy::SeededRandom(seed) if !result.rows.is_empty() => {
                let mut rng = ChaCha8Rng::seed_from_u64(item_seed(seed, &format!("{}#{rank}", task.id)));
                result.rows.get(rng.gen_range(0..result.rows.len()))
            }
            RowPolicy::SeededRandom(_) => None,
        };
        let explanation = match explain(&session, &parsed, &result, row) {
            Ok(e) => e,
            Err(e) => {
                entry.error = Some(e.to_string());
                trail.push(entry);
                continue;
            }
        };
        let input = NliInput::new(assemble_premise(&explanation, &result, &parsed), question.text());
        let verdict = backend.verify(&input).map_err(|source| TaskError::Verifier { id: task.id.clone(), source })?;
        let accepted = verdict.entails();
        entry.verdict = Some(verdict);
        trail.push(entry);
        if accepted {
            return Ok(finish(task, rank, false, Some(explanation), trail));
        }
        if rank == 1 {
            first_explanation = Some(explanation);
        }
    }
    if !any_parsed {
        return Err(TaskError::NothingParses(task.id.clone()));
    }
    Ok(finish(task, 1, true, first_explanation, trail))
}

fn finish(
    task: &TranslationTask,
    rank: usize,
    fallback_used: bool,
    explanation: Option<Explanation>,
    trail: Vec<TrailEntry>,
) -> LoopResult {
    LoopResult {
        id: task.id.clone(),
        chosen_sql: task.candidates[rank - 1].clone(),
        chosen_rank: rank,
        iterations: trail.iter().filter(|e| e.verdict.is_some()).count(),
        fallback_used,
        explanation,
        trail,
    }
}

/// Per-task outcomes in input order plus aggregates over all tasks.
#[derive(Debug)]
pub struct DatasetRun {
    pub results: Vec<Result<LoopResult, TaskError>>,
    /// Verifier calls per task; failed tasks count as zero.
    pub mean_iterations: f64,
    /// Share of tasks whose chosen candidate was accepted by the verifier.
    pub entailed_fraction: f64,
}

/// Runs independent tasks in parallel.
pub fn run_dataset(
    gateway: &Gateway,
    tasks: &[TranslationTask],
    backend: &dyn VerifierBackend,
    config: &LoopConfig,
) -> DatasetRun {
    let results: Vec<_> = tasks.par_iter().map(|t| run_task(gateway, t, backend, config)).collect();
    for r in &results {
        if let Err(e) = r {
            log::warn!("{e}");
        }
    }
    let n = tasks.len().max(1) as f64;
    let ok = results.iter().filter_map(|r| r.as_ref().ok());
    let iterations: usize = ok.clone().map(|r| r.iterations).sum();
    let entailed = ok.filter(|r| !r.fallback_used).count();
    DatasetRun { results, mean_iterations: iterations as f64 / n, entailed_fraction: entailed as f64 / n }
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Serialize(#[from] serde_json::Error),
}

/// Reads one JSON object per non-blank line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| JsonlError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(mut writer: impl Write, items: impl IntoIterator<Item = T>) -> Result<(), JsonlError> {
    for item in items {
        serde_json::to_writer(&mut writer, &item)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortlist_dedupes_and_caps() {
        let c: Vec<String> = ["a", "b", "a ;", "c", "d"].iter().map(|s| s.to_string()).collect();
        assert_eq!(shortlist(&c, 8), vec![(1, "a"), (2, "b"), (4, "c"), (5, "d")]);
        assert_eq!(shortlist(&c, 3), vec![(1, "a"), (2, "b")]);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a("a"), 0xaf63_dc4c_8601_ec8c);
    }
}
