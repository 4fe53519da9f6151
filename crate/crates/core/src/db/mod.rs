//! SQLite access: result sets, execution limits, provenance retrieval and
//! bag-semantics comparison.

mod gateway;
mod provenance;

use std::cmp::Ordering;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::SchemaError;
use crate::sql::{AggregateRef, ColumnRef, Literal};

pub(crate) use gateway::projection_origins;
pub use gateway::{introspect_schema, load_catalog, Gateway, Session};
pub use provenance::{LineageEntry, ProvenanceTable};

#[derive(Debug, Error)]
pub enum DbError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("unknown database {0:?}")]
    UnknownDatabase(String),
    #[error("cannot open database {path}: {message}")]
    Open { path: String, message: String },
    #[error("sql execution error: {0}")]
    SqlExecution(String),
    #[error("query exceeded the {0:?} timeout")]
    Timeout(Duration),
    #[error("rewritten query retrieved no provenance")]
    EmptyProvenance,
    #[error("query could not be re-parsed: {0}")]
    Parse(#[from] crate::sql::SqlError),
}

/// A single SQLite value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Integer(v) => Some(*v as f64),
            Value::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// SQL literal that matches this value, if one can be written.
    pub fn to_literal(&self) -> Option<Literal> {
        match self {
            Value::Null => Some(Literal::Null),
            Value::Integer(v) => Some(Literal::Integer(*v)),
            Value::Real(v) if v.is_finite() => Some(Literal::Float(*v)),
            Value::Text(s) => Some(Literal::String(s.clone())),
            _ => None,
        }
    }

    pub fn from_literal(literal: &Literal) -> Option<Value> {
        Some(match literal {
            Literal::Null => Value::Null,
            Literal::Integer(v) => Value::Integer(*v),
            Literal::Float(v) => Value::Real(*v),
            Literal::String(s) => Value::Text(s.clone()),
        })
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Integer(_) | Value::Real(_) => 1,
            Value::Text(_) => 2,
            Value::Blob(_) => 3,
        }
    }

    /// Total order used for sorting: NULL, numbers, text, blobs.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Integer(a), Value::Integer(b)) => a.cmp(b),
            (a, b) if a.rank() == 1 && b.rank() == 1 => a.as_f64().unwrap_or(0.0).total_cmp(&b.as_f64().unwrap_or(0.0)),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (Value::Blob(a), Value::Blob(b)) => a.cmp(b),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }

    /// Equality after numeric normalisation: integers and reals compare by
    /// value within a relative tolerance of 1e-9; text compares exactly.
    pub fn normalized_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Integer(a), Value::Integer(b)) => a == b,
            (a, b) if a.rank() == 1 && b.rank() == 1 => {
                let (x, y) = (a.as_f64().unwrap_or(0.0), b.as_f64().unwrap_or(0.0));
                x == y || (x - y).abs() <= NUMERIC_TOLERANCE * x.abs().max(y.abs())
            }
            (a, b) => a == b,
        }
    }
}

pub const NUMERIC_TOLERANCE: f64 = 1e-9;

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Integer(v) => write!(f, "{v}"),
            Value::Real(v) => {
                if v.is_finite() && *v == v.trunc() && v.abs() < 1e15 {
                    write!(f, "{v:.1}")
                } else {
                    write!(f, "{v}")
                }
            }
            Value::Text(s) => f.write_str(s),
            Value::Blob(b) => write!(f, "<{} bytes>", b.len()),
        }
    }
}

pub type ResultRow = Vec<Value>;

/// Where a result column's values come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnOrigin {
    Column(ColumnRef),
    Aggregate(AggregateRef),
    /// Expanded from `*` or `t.*`.
    Asterisk {
        column: Option<ColumnRef>,
    },
    Expression(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultColumn {
    pub output_name: String,
    pub origin: ColumnOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub columns: Vec<ResultColumn>,
    pub rows: Vec<ResultRow>,
    /// Rows actually returned; equals `rows.len()`.
    pub row_count: usize,
    /// Execution stopped at the row limit.
    pub truncated: bool,
}

impl ResultSet {
    pub fn new(columns: Vec<ResultColumn>, rows: Vec<ResultRow>) -> Self {
        let row_count = rows.len();
        Self { columns, rows, row_count, truncated: false }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub timeout: Duration,
    pub max_rows: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { timeout: Duration::from_secs(30), max_rows: 10_000 }
    }
}

/// Multiset equality of rows, ignoring column names and row order.
pub fn bag_equal(a: &ResultSet, b: &ResultSet) -> bool {
    a.columns.len() == b.columns.len() && rows_bag_equal(&a.rows, &b.rows)
}

pub fn rows_bag_equal(a: &[ResultRow], b: &[ResultRow]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let (sa, sb) = (sorted_rows(a), sorted_rows(b));
    sa.iter().zip(&sb).all(|(x, y)| x.len() == y.len() && x.iter().zip(y.iter()).all(|(p, q)| p.normalized_eq(q)))
}

fn sorted_rows(rows: &[ResultRow]) -> Vec<&ResultRow> {
    let mut v: Vec<&ResultRow> = rows.iter().collect();
    v.sort_by(|x, y| compare_rows(x, y));
    v
}

fn compare_rows(a: &[Value], b: &[Value]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or_else(|| a.len().cmp(&b.len()))
}
