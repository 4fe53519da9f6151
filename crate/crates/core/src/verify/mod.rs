//! Translation verification as textual entailment: premise assembly,
//! verdicts, pluggable NLI backends and the focal-loss objective.

mod heuristic;
mod loss;
mod remote;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::db::ResultSet;
use crate::explain::Explanation;
use crate::sql::SqlQuery;

pub use heuristic::HeuristicVerifier;
pub use loss::{focal_loss, DomainError, FocalLossParams};
pub use remote::{RemoteConfig, RemoteVerifier, VERIFIER_URL_ENV};

/// Separates the explanation, result and SQL parts of a premise.
pub const SEPARATOR: &str = " | ";
/// Rows of the result shown in a premise.
pub const PREMISE_ROWS: usize = 5;
/// Default entailment probability at or above which a verdict entails.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("verifier backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("verifier did not answer within {0:?}")]
    Timeout(Duration),
    #[error("verifier returned an invalid response: {0}")]
    InvalidResponse(String),
}

/// A premise and the question it should entail.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NliInput {
    pub premise: String,
    pub hypothesis: String,
}

impl NliInput {
    pub fn new(premise: impl Into<String>, hypothesis: impl Into<String>) -> Self {
        Self { premise: premise.into(), hypothesis: hypothesis.into() }
    }

    /// The premise's explanation, result and SQL segments.
    pub fn segments(&self) -> Vec<&str> {
        self.premise.split(SEPARATOR).collect()
    }

    /// SQL segment of the premise, if it has the three-part structure.
    pub fn sql(&self) -> Option<&str> {
        let parts = self.segments();
        (parts.len() == 3).then(|| parts[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entailment,
    Contradiction,
}

impl Label {
    /// +1 for entailment, -1 for contradiction.
    pub fn sign(self) -> i8 {
        match self {
            Label::Entailment => 1,
            Label::Contradiction => -1,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            1 => Some(Label::Entailment),
            -1 => Some(Label::Contradiction),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    /// Entailment probability.
    pub score: f64,
    pub latency_ms: u64,
}

impl Verdict {
    /// Labels `score` (clamped to [0, 1]) against `threshold`.
    pub fn from_score(score: f64, threshold: f64, latency: Duration) -> Self {
        let score = if score.is_nan() { 0.0 } else { score.clamp(0.0, 1.0) };
        let label = if score >= threshold { Label::Entailment } else { Label::Contradiction };
        Self { label, score, latency_ms: latency.as_millis() as u64 }
    }

    pub fn entails(&self) -> bool {
        self.label == Label::Entailment
    }
}

/// An NLI model or stand-in. Implementations accept concurrent calls.
pub trait VerifierBackend: Send + Sync {
    fn name(&self) -> &str;

    fn verify(&self, input: &NliInput) -> Result<Verdict, VerifyError>;

    /// Verdicts in input order.
    fn verify_batch(&self, inputs: &[NliInput]) -> Result<Vec<Verdict>, VerifyError> {
        inputs.iter().map(|i| self.verify(i)).collect()
    }
}

/// Asks `backend` whether the premise entails the hypothesis.
pub fn verify(input: &NliInput, backend: &dyn VerifierBackend) -> Result<Verdict, VerifyError> {
    backend.verify(input)
}

/// Keeps a segment from introducing extra top-level separators.
fn sanitize(segment: &str) -> String {
    let mut s = segment.replace('\n', " ");
    while s.contains(SEPARATOR) {
        s = s.replace(SEPARATOR, " / ");
    }
    s.trim().to_string()
}

/// `name: value, …` for up to [`PREMISE_ROWS`] rows, then the row count.
pub fn serialize_result(result: &ResultSet) -> String {
    let rows: Vec<String> = result
        .rows
        .iter()
        .take(PREMISE_ROWS)
        .map(|row| {
            result
                .columns
                .iter()
                .zip(row)
                .map(|(c, v)| format!("{}: {v}", c.output_name))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .collect();
    let count = match result.row_count {
        1 => "(1 row)".to_string(),
        n => format!("({n} rows)"),
    };
    if rows.is_empty() {
        count
    } else {
        format!("{} {count}", rows.join("; "))
    }
}

/// Explanation text, serialized result and SQL text, joined by [`SEPARATOR`].
pub fn assemble_premise(explanation: &Explanation, result: &ResultSet, sql: &SqlQuery) -> String {
    [sanitize(&explanation.text), sanitize(&serialize_result(result)), sanitize(&sql.raw_text)].join(SEPARATOR)
}

/// Normalized SQL text used as a lookup key: collapsed whitespace, no
/// trailing semicolon.
pub fn normalize_sql(sql: &str) -> String {
    sql.split_whitespace().collect::<Vec<_>>().join(" ").trim_end_matches(';').trim().to_string()
}

/// Answers with a fixed score. Score 1.0 entails everything, 0.0 nothing.
#[derive(Debug, Clone)]
pub struct ConstantVerifier {
    pub score: f64,
    pub threshold: f64,
}

impl ConstantVerifier {
    pub fn always_entail() -> Self {
        Self { score: 1.0, threshold: DEFAULT_THRESHOLD }
    }

    pub fn always_reject() -> Self {
        Self { score: 0.0, threshold: DEFAULT_THRESHOLD }
    }
}

impl VerifierBackend for ConstantVerifier {
    fn name(&self) -> &str {
        "constant"
    }

    fn verify(&self, _input: &NliInput) -> Result<Verdict, VerifyError> {
        Ok(Verdict::from_score(self.score, self.threshold, Duration::ZERO))
    }
}

/// Test backend answering from known labels keyed by question and SQL
/// text. Unknown pairs are contradictions.
#[derive(Clone, Default)]
pub struct OracleVerifier {
    labels: HashMap<(String, String), bool>,
    judge: Option<Arc<dyn Fn(&str, &str) -> bool + Send + Sync>>,
}

impl std::fmt::Debug for OracleVerifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleVerifier").field("labels", &self.labels.len()).finish()
    }
}

impl OracleVerifier {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records whether `sql` is a correct translation of `question`.
    pub fn insert(&mut self, question: &str, sql: &str, correct: bool) {
        self.labels.insert((question.trim().to_string(), normalize_sql(sql)), correct);
    }

    /// Decides unknown pairs with `judge(question, sql)`.
    pub fn with_judge(judge: impl Fn(&str, &str) -> bool + Send + Sync + 'static) -> Self {
        Self { labels: HashMap::new(), judge: Some(Arc::new(judge)) }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn decide(&self, question: &str, sql: &str) -> bool {
        let key = (question.trim().to_string(), normalize_sql(sql));
        match self.labels.get(&key) {
            Some(&known) => known,
            None => self.judge.as_ref().is_some_and(|j| j(question, sql)),
        }
    }
}

impl VerifierBackend for OracleVerifier {
    fn name(&self) -> &str {
        "oracle"
    }

    fn verify(&self, input: &NliInput) -> Result<Verdict, VerifyError> {
        let sql = input.sql().ok_or_else(|| VerifyError::InvalidResponse("premise lacks a SQL segment".into()))?;
        let score = if self.decide(&input.hypothesis, sql) { 1.0 } else { 0.0 };
        Ok(Verdict::from_score(score, DEFAULT_THRESHOLD, Duration::ZERO))
    }
}
