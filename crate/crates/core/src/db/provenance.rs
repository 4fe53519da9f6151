use std::collections::HashSet;

use serde::Serialize;

use super::{DbError, Session, Value};
use crate::rewrite::RewrittenQuery;
use crate::sql::{ColumnRef, TableRef};

/// Source tuple behind one provenance row: a table instance and its rowid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct LineageEntry {
    pub table: TableRef,
    pub rowid: i64,
}

/// Rows retrieved by a rewritten query, each tagged with a tuple id.
#[derive(Debug, Clone)]
pub struct ProvenanceTable {
    pub tuple_ids: Vec<String>,
    pub columns: Vec<ColumnRef>,
    pub rows: Vec<Vec<Value>>,
    /// Per row, the base-table tuples it was built from.
    pub lineage: Vec<Vec<LineageEntry>>,
    /// Per row, the branch of a compound query it came from.
    pub branch_ids: Vec<usize>,
    /// The rewritten query the rows came from; absent for an empty table.
    pub source_query: Option<RewrittenQuery>,
}

impl ProvenanceTable {
    /// A table with no rows and no columns.
    pub fn empty() -> Self {
        Self {
            tuple_ids: Vec::new(),
            columns: Vec::new(),
            rows: Vec::new(),
            lineage: Vec::new(),
            branch_ids: Vec::new(),
            source_query: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, column: &ColumnRef) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c == column)
            .or_else(|| self.columns.iter().position(|c| c.same_column(column)))
    }

    /// Output name for a column: `table.column`, or `binding.column` when the
    /// table occurs more than once.
    pub fn column_name(&self, idx: usize) -> String {
        let c = &self.columns[idx];
        let Some(table) = &c.table else { return c.column.clone() };
        let instances: HashSet<&str> = self
            .columns
            .iter()
            .filter(|x| x.table.as_deref().is_some_and(|t| t.eq_ignore_ascii_case(table)))
            .filter_map(|x| x.binding.as_deref())
            .collect();
        match (&c.binding, instances.len() > 1) {
            (Some(b), true) => format!("{b}.{}", c.column),
            _ => format!("{table}.{}", c.column),
        }
    }

    pub fn value(&self, row: usize, column: &ColumnRef) -> Option<&Value> {
        self.column_index(column).and_then(|i| self.rows.get(row).and_then(|r| r.get(i)))
    }
}

impl Session<'_> {
    /// Executes each rewritten branch and assembles the provenance table.
    ///
    /// Tuple ids are the initial of the driving table followed by its rowid,
    /// where the driving table is the first one in FROM order whose rowids
    /// are unique across the retrieved rows.
    pub fn fetch_provenance(&self, rewritten: &RewrittenQuery) -> Result<ProvenanceTable, DbError> {
        let mut columns: Vec<ColumnRef> = Vec::new();
        let mut raw: Vec<(usize, Vec<(ColumnRef, Value)>, Vec<LineageEntry>)> = Vec::new();
        for branch in &rewritten.branches {
            let (names, rows, _) = self.run(&branch.retrieval_sql)?;
            let width = names.len() - branch.lineage.len();
            let branch_cols: Vec<ColumnRef> = if branch.columns.len() == width {
                branch.columns.clone()
            } else {
                names[..width].iter().map(|n| ColumnRef { table: None, column: n.clone(), binding: None }).collect()
            };
            for c in &branch_cols {
                if !columns.contains(c) {
                    columns.push(c.clone());
                }
            }
            for row in rows {
                let lineage = branch
                    .lineage
                    .iter()
                    .zip(&row[width..])
                    .filter_map(|(t, v)| match v {
                        Value::Integer(id) => Some(LineageEntry { table: t.clone(), rowid: *id }),
                        _ => None,
                    })
                    .collect();
                let cells = branch_cols.iter().cloned().zip(row.into_iter().take(width)).collect();
                raw.push((branch.branch_id, cells, lineage));
            }
        }
        if raw.is_empty() {
            return Err(DbError::EmptyProvenance);
        }
        let rows: Vec<Vec<Value>> = raw
            .iter()
            .map(|(_, cells, _)| {
                columns
                    .iter()
                    .map(|c| cells.iter().find(|(k, _)| k == c).map_or(Value::Null, |(_, v)| v.clone()))
                    .collect()
            })
            .collect();
        let lineage: Vec<Vec<LineageEntry>> = raw.iter().map(|(_, _, l)| l.clone()).collect();
        let branch_ids = raw.iter().map(|(b, _, _)| *b).collect();
        let tuple_ids = tuple_ids(&lineage);
        Ok(ProvenanceTable { tuple_ids, columns, rows, lineage, branch_ids, source_query: Some(rewritten.clone()) })
    }
}

fn tuple_ids(lineage: &[Vec<LineageEntry>]) -> Vec<String> {
    let initial = |t: &TableRef| t.name.chars().next().map(|c| c.to_ascii_uppercase()).unwrap_or('T');
    let single = |i: usize| -> Option<Vec<String>> {
        let ids: Vec<String> = lineage
            .iter()
            .map(|l| {
                l.iter().find(|e| e.table == lineage[0][i].table).map(|e| format!("{}{}", initial(&e.table), e.rowid))
            })
            .collect::<Option<_>>()?;
        let unique: HashSet<&String> = ids.iter().collect();
        (unique.len() == ids.len()).then_some(ids)
    };
    let candidates = lineage.first().map_or(0, Vec::len);
    if let Some(ids) = (0..candidates).find_map(single) {
        return ids;
    }
    // No single table identifies the rows: combine every table's id, then
    // fall back to retrieval order for exact duplicates.
    let mut seen = HashSet::new();
    lineage
        .iter()
        .enumerate()
        .map(|(n, l)| {
            let mut id = l.iter().map(|e| format!("{}{}", initial(&e.table), e.rowid)).collect::<Vec<_>>().join("-");
            if id.is_empty() || !seen.insert(id.clone()) {
                id = format!("{id}#{}", n + 1);
                seen.insert(id.clone());
            }
            id
        })
        .collect()
}
