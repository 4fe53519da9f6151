//! SQL model: parsing, schema resolution, rendering and clause-level
//! decomposition into query units.

pub mod ast;
mod lexer;
mod parser;
mod resolve;
pub mod units;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::DatabaseSchema;
pub use ast::{Expr, Literal, Query, ResolvedColumn, Select, SetOperator};
pub use units::{
    predicates_of, AggregateArg, AggregateRef, ClauseKind, Connective, Operand, Predicate, PredicateOp, QueryUnit,
    UnitElement,
};

/// Malformed SQL, with the byte offset at which parsing failed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(position: usize, message: impl Into<String>) -> Self {
        Self { position, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqlError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unsupported syntax: {0}")]
    UnsupportedSyntax(String),
}

/// A column reference after alias resolution. `table` is the canonical
/// schema table when the reference resolved, otherwise the written
/// qualifier (if any).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: Option<String>,
    pub column: String,
    /// The alias or table name addressing this table instance in the query.
    pub binding: Option<String>,
}

impl ColumnRef {
    pub fn new(table: &str, column: &str) -> Self {
        Self { table: Some(table.to_string()), column: column.to_string(), binding: None }
    }

    pub fn from_expr(c: &ast::ColumnExpr) -> Self {
        match &c.resolved {
            Some(r) => {
                Self { table: Some(r.table.clone()), column: r.column.clone(), binding: Some(r.binding.clone()) }
            }
            None => Self { table: c.qualifier.clone(), column: c.name.clone(), binding: None },
        }
    }

    pub fn is_resolved(&self) -> bool {
        self.table.is_some() && self.binding.is_some()
    }

    /// Same (table, column) ignoring the binding, case-insensitively.
    pub fn same_column(&self, other: &ColumnRef) -> bool {
        self.column.eq_ignore_ascii_case(&other.column)
            && match (&self.table, &other.table) {
                (Some(a), Some(b)) => a.eq_ignore_ascii_case(b),
                (None, None) => true,
                _ => false,
            }
    }

    fn without_binding(&self) -> Self {
        Self { table: self.table.clone(), column: self.column.clone(), binding: None }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.table {
            Some(t) => write!(f, "{t}.{}", self.column),
            None => f.write_str(&self.column),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TableRef {
    /// Canonical schema name when known, else as written.
    pub name: String,
    pub binding: String,
}

/// Columns referenced anywhere in a query, deduplicated by (table, column).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReferencedColumns {
    pub columns: BTreeSet<ColumnRef>,
    /// Some projection used `*` or `t.*`.
    pub asterisk: bool,
}

/// A natural-language question posed against one database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NlQuery {
    text: String,
    pub db_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("question text is empty")]
pub struct EmptyQuestion;

impl NlQuery {
    pub fn new(text: impl Into<String>, db_id: impl Into<String>) -> Result<Self, EmptyQuestion> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(EmptyQuestion);
        }
        Ok(Self { text, db_id: db_id.into() })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// A parsed, schema-resolved SQL statement.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlQuery {
    pub raw_text: String,
    pub statement: Query,
    pub units: Vec<QueryUnit>,
    /// References that did not resolve against the schema.
    pub unresolved: Vec<String>,
}

/// Parses `sql` and resolves it against `schema`.
pub fn parse(sql: &str, schema: &DatabaseSchema) -> Result<SqlQuery, SqlError> {
    let mut statement = parser::parse_statement(sql)?;
    let unresolved = resolve::resolve_query(&mut statement, schema);
    let units = units::decompose_query(&statement, sql.len());
    Ok(SqlQuery { raw_text: sql.to_string(), statement, units, unresolved })
}

/// Parses without a schema; column references stay unresolved.
pub fn parse_unresolved(sql: &str) -> Result<Query, SqlError> {
    parser::parse_statement(sql)
}

impl SqlQuery {
    /// Builds a query from a tree, e.g. after rewriting. The raw text is the
    /// rendering of the tree, re-parsed so spans are accurate.
    pub fn from_statement(statement: &Query, schema: &DatabaseSchema) -> Result<SqlQuery, SqlError> {
        parse(&statement.to_string(), schema)
    }

    pub fn render(&self) -> String {
        self.statement.to_string()
    }

    pub fn is_compound(&self) -> bool {
        matches!(self.statement.body, ast::SetExpr::SetOperation { .. })
    }

    /// Every column referenced in any clause, subqueries included.
    pub fn referenced_columns(&self) -> ReferencedColumns {
        let mut out = ReferencedColumns::default();
        collect_query_columns(&self.statement, &mut out);
        out
    }
}

/// Clause-level units of `query`, recomputed from its tree.
pub fn decompose(query: &SqlQuery) -> Vec<QueryUnit> {
    units::decompose_query(&query.statement, query.raw_text.len())
}

fn collect_query_columns(query: &Query, out: &mut ReferencedColumns) {
    for select in query.branches() {
        for item in &select.projection {
            if matches!(item.expr, Expr::Wildcard | Expr::QualifiedWildcard(_)) {
                out.asterisk = true;
            }
            collect_expr_columns(&item.expr, out);
        }
        if let Some(from) = &select.from {
            for factor in from.factors() {
                if let ast::TableFactor::Derived { subquery, .. } = factor {
                    collect_query_columns(subquery, out);
                }
            }
            for join in &from.joins {
                if let Some(on) = &join.constraint {
                    collect_expr_columns(on, out);
                }
            }
        }
        for e in select.selection.iter().chain(&select.group_by).chain(select.having.iter()) {
            collect_expr_columns(e, out);
        }
    }
    for item in &query.order_by {
        collect_expr_columns(&item.expr, out);
    }
}

fn collect_expr_columns(expr: &Expr, out: &mut ReferencedColumns) {
    expr.walk(&mut |e| match e {
        Expr::Column(c) if c.resolved.is_some() => {
            out.columns.insert(ColumnRef::from_expr(c).without_binding());
        }
        Expr::InSubquery { subquery, .. } | Expr::Exists { subquery, .. } | Expr::Subquery(subquery) => {
            collect_query_columns(subquery, out)
        }
        _ => {}
    });
}
