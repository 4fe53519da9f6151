//! Provenance rewriting. A query plus one of its result rows becomes a
//! retrieval query whose rows are the source tuples behind that result row.
//!
//! Rules run in a fixed order: pin the result row (rule 1), project every
//! referenced column and key (rule 2), then take aggregation apart (rule 3).
//! Compound queries are rewritten branch by branch.

use serde::Serialize;
use thiserror::Error;

use crate::db::{projection_origins, ColumnOrigin, ResultRow, ResultSet, Value};
use crate::schema::DatabaseSchema;
use crate::sql::ast::*;
use crate::sql::{AggregateRef, ColumnRef, SqlError, SqlQuery, TableRef};

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("rewritten query failed to re-parse: {0}")]
    Reparse(#[from] SqlError),
}

/// One rewritten SELECT branch.
#[derive(Debug, Clone)]
pub struct RewrittenBranch {
    /// Position of the branch in the original query, left to right.
    pub branch_id: usize,
    /// The branch after all three rules.
    pub query: SqlQuery,
    /// Output columns of `query`, wildcards expanded.
    pub columns: Vec<ColumnRef>,
    /// Base tables whose rowids are appended to the retrieval query.
    pub lineage: Vec<TableRef>,
    /// `query` without DISTINCT and with one rowid column per lineage table.
    pub retrieval_sql: String,
}

/// A removed HAVING or ORDER BY condition that could not survive rule 3.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemovedCondition {
    pub branch_id: usize,
    pub clause: &'static str,
    pub text: String,
    pub expr: Expr,
}

#[derive(Debug, Clone)]
pub struct RewrittenQuery {
    pub branches: Vec<RewrittenBranch>,
    /// The result row the provenance is for.
    pub subject_row: ResultRow,
    pub added_projections: Vec<ColumnRef>,
    /// Rule 1 predicates, one per pinned result column and branch.
    pub added_result_conditions: Vec<Expr>,
    /// Result column positions rule 1 could not pin.
    pub skipped_result_columns: Vec<usize>,
    pub removed_aggregates: Vec<AggregateRef>,
    pub removed_group_by: Vec<Expr>,
    /// Aggregate conditions dropped from HAVING or ORDER BY.
    pub removed_conditions: Vec<RemovedCondition>,
    /// HAVING conjuncts without aggregates, moved into WHERE.
    pub moved_having: Vec<Expr>,
    pub dropped_limit: bool,
}

impl RewrittenQuery {
    /// The rewritten first branch (the whole query when not compound).
    pub fn query(&self) -> &SqlQuery {
        &self.branches[0].query
    }

    /// Conjunction of the rule 1 predicates, if any were added.
    pub fn added_result_condition(&self) -> Option<Expr> {
        self.added_result_conditions.iter().cloned().reduce(Expr::and)
    }
}

/// Rewrites `query` for provenance of `row`. Returns `None` when the result
/// is empty or no row is given.
pub fn rewrite(
    query: &SqlQuery,
    row: Option<&ResultRow>,
    result: &ResultSet,
    schema: &DatabaseSchema,
) -> Result<Option<RewrittenQuery>, RewriteError> {
    let Some(row) = row else { return Ok(None) };
    if result.row_count == 0 || result.rows.is_empty() {
        return Ok(None);
    }
    let compound = query.is_compound();
    let mut out = RewrittenQuery {
        branches: Vec::new(),
        subject_row: row.clone(),
        added_projections: Vec::new(),
        added_result_conditions: Vec::new(),
        skipped_result_columns: Vec::new(),
        removed_aggregates: Vec::new(),
        removed_group_by: Vec::new(),
        removed_conditions: Vec::new(),
        moved_having: Vec::new(),
        dropped_limit: false,
    };
    for (branch_id, select) in query.statement.branches().into_iter().enumerate() {
        let mut select = select.clone();
        let (mut order_by, mut limit) = if compound {
            (Vec::new(), None)
        } else {
            (query.statement.order_by.clone(), query.statement.limit.clone())
        };

        let pinned = rule1(&mut select, row, schema);
        for idx in &pinned.skipped {
            if !out.skipped_result_columns.contains(idx) {
                out.skipped_result_columns.push(*idx);
            }
        }
        let pinned_any = !pinned.added.is_empty();
        out.added_result_conditions.extend(pinned.added);

        for c in rule2(&mut select, schema) {
            if !out.added_projections.iter().any(|x| x == &c) {
                out.added_projections.push(c);
            }
        }

        let log = rule3(&mut select, &mut order_by);
        let deaggregated = !log.aggregates.is_empty() || !log.group_by.is_empty() || log.had_having;
        out.removed_aggregates.extend(log.aggregates);
        out.removed_group_by.extend(log.group_by);
        out.moved_having.extend(log.moved_having);
        out.removed_conditions.extend(log.removed.into_iter().map(|(clause, expr)| RemovedCondition {
            branch_id,
            clause,
            text: expr.to_string(),
            expr,
        }));

        if limit.is_some() && (pinned_any || deaggregated) {
            limit = None;
            out.dropped_limit = true;
        }

        let statement = Query { body: SetExpr::Select(Box::new(select)), order_by, limit, layout: Default::default() };
        let rewritten = SqlQuery::from_statement(&statement, schema)?;
        let first = rewritten.statement.body.first_select();
        let columns = output_columns(first, schema);
        let lineage = lineage_tables(first, schema);
        let retrieval_sql = retrieval_statement(&rewritten.statement, &lineage).to_string();
        out.branches.push(RewrittenBranch { branch_id, query: rewritten, columns, lineage, retrieval_sql });
    }
    Ok(Some(out))
}

struct Rule1Outcome {
    added: Vec<Expr>,
    skipped: Vec<usize>,
}

/// Pins each result column with a column origin to the row's value.
fn rule1(select: &mut Select, row: &ResultRow, schema: &DatabaseSchema) -> Rule1Outcome {
    let origins = projection_origins(select, schema);
    let mut added = Vec::new();
    let mut skipped = Vec::new();
    if origins.len() != row.len() {
        skipped.extend(0..row.len());
        return Rule1Outcome { added, skipped };
    }
    let existing: Vec<String> =
        select.selection.as_ref().map(|s| s.conjuncts().iter().map(|c| c.to_string()).collect()).unwrap_or_default();
    for (idx, (origin, value)) in origins.iter().zip(row).enumerate() {
        let ColumnOrigin::Column(col) = origin else {
            skipped.push(idx);
            continue;
        };
        let Some(target) = column_expr(col) else {
            skipped.push(idx);
            continue;
        };
        let predicate = match value.to_literal() {
            Some(Literal::Null) => Expr::IsNull { expr: Box::new(target), negated: false },
            Some(lit) => Expr::binary(target, BinaryOperator::Eq, Expr::Literal(lit)),
            None => {
                skipped.push(idx);
                continue;
            }
        };
        let text = predicate.to_string();
        if existing.contains(&text) || added.iter().any(|e: &Expr| e.to_string() == text) {
            added.push(predicate);
            continue;
        }
        select.selection = Some(match select.selection.take() {
            Some(w) => w.and(predicate.clone()),
            None => predicate.clone(),
        });
        added.push(predicate);
    }
    Rule1Outcome { added, skipped }
}

fn column_expr(col: &ColumnRef) -> Option<Expr> {
    let binding = col.binding.clone()?;
    Some(Expr::Column(ColumnExpr {
        qualifier: Some(binding.clone()),
        name: col.column.clone(),
        quoted: false,
        resolved: Some(ResolvedColumn { table: col.table.clone()?, column: col.column.clone(), binding }),
    }))
}

/// Base-table bindings of a SELECT's FROM clause, in order.
fn base_bindings(select: &Select, schema: &DatabaseSchema) -> Vec<TableRef> {
    let Some(from) = &select.from else { return Vec::new() };
    from.factors()
        .filter_map(|f| match f {
            TableFactor::Table { name, alias } => schema
                .table(name)
                .map(|t| TableRef { name: t.name.clone(), binding: alias.clone().unwrap_or_else(|| name.clone()) }),
            TableFactor::Derived { .. } => None,
        })
        .collect()
}

/// Adds every column referenced in the branch and every primary key of its
/// tables to the projection.
fn rule2(select: &mut Select, schema: &DatabaseSchema) -> Vec<ColumnRef> {
    let bindings = base_bindings(select, schema);
    let bound = |c: &ColumnRef| {
        c.binding.as_deref().is_some_and(|b| bindings.iter().any(|t| t.binding.eq_ignore_ascii_case(b)))
            && c.column != "rowid"
    };
    let mut wanted: Vec<ColumnRef> = Vec::new();
    let push = |c: ColumnRef, wanted: &mut Vec<ColumnRef>| {
        if bound(&c) && !wanted.iter().any(|w| same_instance(w, &c)) {
            wanted.push(c);
        }
    };
    let mut exprs: Vec<&Expr> = select.projection.iter().map(|i| &i.expr).collect();
    if let Some(from) = &select.from {
        exprs.extend(from.joins.iter().filter_map(|j| j.constraint.as_ref()));
    }
    exprs.extend(select.selection.iter());
    exprs.extend(select.group_by.iter());
    exprs.extend(select.having.iter());
    for e in exprs {
        for c in e.columns() {
            push(ColumnRef::from_expr(c), &mut wanted);
        }
    }
    for t in &bindings {
        if let Some(def) = schema.table(&t.name) {
            for pk in def.primary_keys() {
                push(
                    ColumnRef {
                        table: Some(def.name.clone()),
                        column: pk.name.clone(),
                        binding: Some(t.binding.clone()),
                    },
                    &mut wanted,
                );
            }
        }
    }

    let covered = output_columns(select, schema);
    let mut added = Vec::new();
    for c in wanted {
        if covered.iter().any(|p| same_instance(p, &c)) {
            continue;
        }
        if let Some(expr) = column_expr(&c) {
            select.projection.push(SelectItem { expr, alias: None });
            added.push(ColumnRef { binding: None, ..c });
        }
    }
    added
}

fn same_instance(a: &ColumnRef, b: &ColumnRef) -> bool {
    a.column.eq_ignore_ascii_case(&b.column)
        && match (&a.binding, &b.binding) {
            (Some(x), Some(y)) => x.eq_ignore_ascii_case(y),
            _ => false,
        }
}

#[derive(Default)]
struct Rule3Log {
    aggregates: Vec<AggregateRef>,
    group_by: Vec<Expr>,
    moved_having: Vec<Expr>,
    removed: Vec<(&'static str, Expr)>,
    had_having: bool,
}

/// Replaces aggregates with their argument columns and removes grouping.
fn rule3(select: &mut Select, order_by: &mut Vec<OrderByItem>) -> Rule3Log {
    let mut log = Rule3Log::default();
    let mut projection = Vec::new();
    let mut removed_aliases = Vec::new();
    for item in std::mem::take(&mut select.projection) {
        if !item.expr.contains_aggregate() {
            projection.push(item);
            continue;
        }
        item.expr.walk(&mut |e| {
            if let Expr::Function(f) = e {
                if f.is_aggregate() {
                    log.aggregates.push(AggregateRef::from_call(f));
                }
            }
        });
        if let Some(alias) = &item.alias {
            removed_aliases.push(alias.clone());
        }
        for c in item.expr.columns() {
            projection.push(SelectItem { expr: Expr::Column(c.clone()), alias: None });
        }
    }
    // Argument columns take the aggregate's place; later copies added by
    // rule 2 are dropped.
    let mut seen: Vec<ResolvedColumn> = Vec::new();
    projection.retain(|item| match &item.expr {
        Expr::Column(ColumnExpr { resolved: Some(r), .. }) if item.alias.is_none() => {
            let dup = seen
                .iter()
                .any(|s| s.binding.eq_ignore_ascii_case(&r.binding) && s.column.eq_ignore_ascii_case(&r.column));
            seen.push(r.clone());
            !dup
        }
        _ => true,
    });
    if projection.is_empty() {
        projection.push(SelectItem { expr: Expr::Wildcard, alias: None });
    }
    select.projection = projection;

    log.group_by = std::mem::take(&mut select.group_by);
    if let Some(having) = select.having.take() {
        log.had_having = true;
        for conjunct in having.conjuncts() {
            if conjunct.contains_aggregate() {
                log.removed.push(("having", conjunct.clone()));
            } else {
                log.moved_having.push(conjunct.clone());
                select.selection = Some(match select.selection.take() {
                    Some(w) => w.and(conjunct.clone()),
                    None => conjunct.clone(),
                });
            }
        }
    }
    order_by.retain(|item| {
        let alias_ref = matches!(&item.expr, Expr::Column(c) if c.qualifier.is_none()
            && removed_aliases.iter().any(|a| a.eq_ignore_ascii_case(&c.name)));
        if item.expr.contains_aggregate() || alias_ref {
            log.removed.push(("order_by", item.expr.clone()));
            false
        } else {
            true
        }
    });
    log
}

/// Output columns of a rewritten branch as column references. Non-column
/// outputs get a table-less reference named by their text.
fn output_columns(select: &Select, schema: &DatabaseSchema) -> Vec<ColumnRef> {
    projection_origins(select, schema)
        .into_iter()
        .map(|o| match o {
            ColumnOrigin::Column(c) | ColumnOrigin::Asterisk { column: Some(c) } => c,
            ColumnOrigin::Aggregate(a) => ColumnRef { table: None, column: a.func, binding: None },
            ColumnOrigin::Asterisk { column: None } => ColumnRef { table: None, column: "*".into(), binding: None },
            ColumnOrigin::Expression(text) => ColumnRef { table: None, column: text, binding: None },
        })
        .collect()
}

fn lineage_tables(select: &Select, schema: &DatabaseSchema) -> Vec<TableRef> {
    base_bindings(select, schema)
}

fn retrieval_statement(query: &Query, lineage: &[TableRef]) -> Query {
    let mut q = query.clone();
    if let SetExpr::Select(select) = &mut q.body {
        select.distinct = false;
        for t in lineage {
            select.projection.push(SelectItem { expr: Expr::column(Some(&t.binding), "rowid"), alias: None });
        }
    }
    q
}

/// Whether `value` satisfies the pinning literal (NULL matches NULL).
pub fn value_matches(value: &Value, literal: &Literal) -> bool {
    match (value, literal) {
        (Value::Null, Literal::Null) => true,
        (v, l) => Value::from_literal(l).is_some_and(|lv| lv.normalized_eq(v)),
    }
}
