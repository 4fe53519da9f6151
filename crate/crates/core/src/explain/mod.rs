//! Natural-language explanations of a query result: provenance graph,
//! join semantics, phrase generation and composition.

mod graph;
mod joins;
mod lexicon;
mod phrases;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{annotate, operation_only_with_row, EnrichedProvenanceTable, Payload};
use crate::db::{ColumnOrigin, DbError, ResultRow, ResultSet, Session};
use crate::rewrite::{rewrite, RewriteError};
use crate::schema::DatabaseSchema;
use crate::sql::{ColumnRef, Operand, SqlQuery};

pub use graph::{build_graph, query_tables, EdgeKind, Node, NodeKind, ProvenanceGraph};
pub use joins::{discover_join_semantics, list_phrase, JoinSemantics, Topology, TopologyPool};
pub use lexicon::{number_word, ColumnEntry, Lexicon};
pub use phrases::{compose_text, generate_phrases, Phrase, PhraseContext, PhraseRole};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error(transparent)]
    Db(#[from] DbError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// Opening clause about the result's shape; always a prefix of `text`.
    pub summary: String,
    pub phrases: Vec<String>,
    pub text: String,
    pub subject_row: Option<ResultRow>,
}

/// Optional post-editing of explanation text for human readers. Verifier
/// input always uses the unpolished text.
pub trait Polisher {
    fn polish(&self, text: &str) -> String;
}

/// Leaves text unchanged.
pub struct NoPolish;

impl Polisher for NoPolish {
    fn polish(&self, text: &str) -> String {
        text.to_string()
    }
}

impl Explanation {
    pub fn polished(&self, polisher: &dyn Polisher) -> String {
        polisher.polish(&self.text)
    }
}

/// The summary clause without its closing period.
fn summary_clause(result: &ResultSet) -> String {
    let columns = result.columns.len();
    let aggregates: Vec<&str> = result
        .columns
        .iter()
        .filter_map(|c| match &c.origin {
            ColumnOrigin::Aggregate(a) => Some(a.func.as_str()),
            _ => None,
        })
        .collect();
    let col_word = |n: usize| format!("{} column{}", number_word(n), if n == 1 { "" } else { "s" });
    let rows = match result.row_count {
        1 => "one row".to_string(),
        n => format!("{n} rows"),
    };
    if aggregates.is_empty() {
        return format!("The query returns a result set with {} and {rows}", col_word(columns));
    }
    let types = aggregates.join(", ");
    if aggregates.len() == columns {
        let kind = if columns == 1 { "of aggregation type" } else { "of aggregation types" };
        format!("The query returns a result with {} {kind} ({types}) and {rows}", col_word(columns))
    } else {
        let kind = if aggregates.len() == 1 { "aggregation type" } else { "aggregation types" };
        format!(
            "The query returns a result with {}, {} of {kind} ({types}), and {rows}",
            col_word(columns),
            number_word(aggregates.len())
        )
    }
}

/// One sentence describing the shape of a result.
pub fn summarize(result: &ResultSet) -> String {
    format!("{}.", summary_clause(result))
}

/// Joins a summary (with or without its closing period) and phrases.
pub fn compose(summary: &str, phrases: &[Phrase], subject_row: Option<ResultRow>) -> Explanation {
    let clause = summary.strip_suffix('.').unwrap_or(summary);
    Explanation {
        summary: clause.to_string(),
        phrases: phrases.iter().map(|p| p.text.clone()).collect(),
        text: compose_text(clause, phrases),
        subject_row,
    }
}

/// Explanation pipeline with its data: topology pool and lexicon.
#[derive(Debug, Clone, Default)]
pub struct Explainer {
    pub pool: TopologyPool,
    pub lexicon: Lexicon,
}

impl Explainer {
    pub fn new(pool: TopologyPool, lexicon: Lexicon) -> Self {
        Self { pool, lexicon }
    }

    /// Explains `result` (the output of `query`) through `row`, or through
    /// the first row when none is given.
    pub fn explain(
        &self,
        session: &Session<'_>,
        query: &SqlQuery,
        result: &ResultSet,
        row: Option<&ResultRow>,
    ) -> Result<Explanation, ExplainError> {
        let schema = session.schema();
        let subject = row.or_else(|| result.rows.first());
        let enriched = match self.enrich(session, query, result, subject)? {
            Some(e) => e,
            None => operation_only_with_row(query, schema, subject),
        };
        Ok(self.explain_enriched(&enriched, result, subject.cloned(), schema))
    }

    fn enrich(
        &self,
        session: &Session<'_>,
        query: &SqlQuery,
        result: &ResultSet,
        subject: Option<&ResultRow>,
    ) -> Result<Option<EnrichedProvenanceTable>, ExplainError> {
        let schema = session.schema();
        let rewritten = match rewrite(query, subject, result, schema) {
            Ok(Some(r)) => r,
            Ok(None) => return Ok(None),
            Err(RewriteError::Reparse(e)) => {
                log::warn!("provenance rewrite unavailable: {e}");
                return Ok(None);
            }
        };
        match session.fetch_provenance(&rewritten) {
            Ok(prov) => Ok(Some(annotate(prov, query, &rewritten, schema))),
            Err(DbError::EmptyProvenance) => Ok(None),
            Err(DbError::SqlExecution(e)) => {
                log::warn!("provenance query failed, using query semantics only: {e}");
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Graph, phrases and composition for an already enriched table.
    pub fn explain_enriched(
        &self,
        enriched: &EnrichedProvenanceTable,
        result: &ResultSet,
        subject_row: Option<ResultRow>,
        schema: &DatabaseSchema,
    ) -> Explanation {
        let graph = build_graph(enriched, None);
        let join = (graph.tables.len() > 1).then(|| {
            discover_join_semantics(schema, &graph.tables, &join_conditions(enriched), &self.pool, &self.lexicon)
        });
        let ctx = PhraseContext { schema, lexicon: &self.lexicon, result_rows: result.row_count };
        let phrases = generate_phrases(&graph, join.as_ref(), &ctx);
        compose(&summary_clause(result), &phrases, subject_row)
    }
}

/// Column pairs equated by JOIN conditions of the first branch.
pub fn join_conditions(enriched: &EnrichedProvenanceTable) -> Vec<(ColumnRef, ColumnRef)> {
    enriched
        .annotations
        .iter()
        .filter(|a| a.source.branch.unwrap_or(0) == 0)
        .filter_map(|a| match &a.payload {
            Payload::Join(p) => match (&p.lhs, &p.rhs) {
                (Operand::Column(l), Operand::Column(r)) => Some((l.clone(), r.clone())),
                _ => None,
            },
            _ => None,
        })
        .collect()
}

/// Explains with the bundled topology pool and lexicon.
pub fn explain(
    session: &Session<'_>,
    query: &SqlQuery,
    result: &ResultSet,
    row: Option<&ResultRow>,
) -> Result<Explanation, ExplainError> {
    Explainer::default().explain(session, query, result, row)
}
