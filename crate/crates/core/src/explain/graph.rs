//! Provenance graph: a table (or joint-table) root, one node per column
//! and one node per distinct value, labelled with annotations.

use std::collections::BTreeMap;

use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::visit::EdgeRef;
use petgraph::Direction;

use crate::annotate::{Annotation, AnnotationKind, EnrichedProvenanceTable, Payload, Target};
use crate::db::Value;
use crate::sql::{ColumnRef, TableRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Table,
    JointTable,
    Column,
    Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub label: String,
    pub column: Option<ColumnRef>,
    pub value: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    HasAttribute,
    HasValue,
}

#[derive(Debug, Clone)]
pub struct ProvenanceGraph {
    pub graph: DiGraph<Node, EdgeKind>,
    pub root: NodeIndex,
    pub labels: BTreeMap<NodeIndex, Vec<Annotation>>,
    /// Base tables in FROM order, one per binding.
    pub tables: Vec<TableRef>,
    /// Provenance rows the value nodes were drawn from.
    pub row_count: usize,
}

impl ProvenanceGraph {
    pub fn column_nodes(&self) -> impl Iterator<Item = NodeIndex> + '_ {
        self.graph
            .edges_directed(self.root, Direction::Outgoing)
            .filter(|e| *e.weight() == EdgeKind::HasAttribute)
            .map(|e| e.target())
    }

    /// Distinct values of a column node, in first-seen order.
    pub fn values(&self, column: NodeIndex) -> Vec<&Value> {
        let mut v: Vec<(NodeIndex, &Value)> = self
            .graph
            .edges_directed(column, Direction::Outgoing)
            .filter_map(|e| self.graph[e.target()].value.as_ref().map(|val| (e.target(), val)))
            .collect();
        v.sort_by_key(|(n, _)| *n);
        v.into_iter().map(|(_, val)| val).collect()
    }

    pub fn find_column(&self, column: &ColumnRef) -> Option<NodeIndex> {
        let cols: Vec<NodeIndex> = self.column_nodes().collect();
        let node_col = |n: &NodeIndex| self.graph[*n].column.as_ref();
        cols.iter()
            .copied()
            .find(|n| node_col(n) == Some(column))
            .or_else(|| cols.iter().copied().find(|n| node_col(n).is_some_and(|c| c.same_column(column))))
    }

    pub fn labels_of(&self, node: NodeIndex) -> &[Annotation] {
        self.labels.get(&node).map_or(&[], Vec::as_slice)
    }

    /// Every label in the graph, root first, then columns in node order.
    pub fn all_labels(&self) -> Vec<(NodeIndex, &Annotation)> {
        let mut out: Vec<(NodeIndex, &Annotation)> = self.labels_of(self.root).iter().map(|a| (self.root, a)).collect();
        let mut cols: Vec<NodeIndex> = self.column_nodes().collect();
        cols.sort();
        for c in cols {
            out.extend(self.labels_of(c).iter().map(|a| (c, a)));
        }
        out
    }

    pub fn labelled(&self, kind: AnnotationKind) -> Vec<&Annotation> {
        self.all_labels().into_iter().filter(|(_, a)| a.kind == kind).map(|(_, a)| a).collect()
    }

    pub fn is_well_formed(&self) -> bool {
        let incoming = |n: NodeIndex| self.graph.edges_directed(n, Direction::Incoming).count();
        let ok_nodes = self.graph.node_indices().all(|n| match self.graph[n].kind {
            NodeKind::Column | NodeKind::Value => incoming(n) == 1,
            NodeKind::Table | NodeKind::JointTable => incoming(n) == 0,
        });
        let ok_edges = self.graph.edge_references().all(|e| {
            let (s, t) = (self.graph[e.source()].kind, self.graph[e.target()].kind);
            match e.weight() {
                EdgeKind::HasAttribute => matches!(s, NodeKind::Table | NodeKind::JointTable) && t == NodeKind::Column,
                EdgeKind::HasValue => s == NodeKind::Column && t == NodeKind::Value,
            }
        });
        ok_nodes && ok_edges && !petgraph::algo::is_cyclic_directed(&self.graph)
    }
}

/// Base tables referenced by FROM and JOIN clauses of the first branch.
pub fn query_tables(enriched: &EnrichedProvenanceTable) -> Vec<TableRef> {
    let mut out: Vec<TableRef> = Vec::new();
    for a in &enriched.annotations {
        if let Payload::Table(t) = &a.payload {
            if a.source.branch.unwrap_or(0) == 0 && !out.contains(t) {
                out.push(t.clone());
            }
        }
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map_or_else(String::new, |f| f.to_uppercase().chain(c).collect())
}

/// Builds the graph. `tuple` restricts value nodes to one provenance row;
/// `None` keeps the distinct values of every row.
pub fn build_graph(enriched: &EnrichedProvenanceTable, tuple: Option<usize>) -> ProvenanceGraph {
    let tables = query_tables(enriched);
    let mut graph = DiGraph::new();
    let root = graph.add_node(Node {
        kind: if tables.len() > 1 { NodeKind::JointTable } else { NodeKind::Table },
        label: tables.iter().map(|t| capitalize(&t.name)).collect::<Vec<_>>().join("-"),
        column: None,
        value: None,
    });

    let base = &enriched.base;
    let columns: Vec<ColumnRef> = if enriched.operation_only {
        let mut cols: Vec<ColumnRef> = Vec::new();
        for a in &enriched.annotations {
            if let Target::Column(c) = &a.target {
                if !cols.contains(c) {
                    cols.push(c.clone());
                }
            }
        }
        cols
    } else {
        base.columns.clone()
    };
    let rows: Vec<usize> = match tuple {
        Some(i) if i < base.rows.len() => vec![i],
        Some(_) => Vec::new(),
        None => (0..base.rows.len()).collect(),
    };
    for (ci, col) in columns.iter().enumerate() {
        let label = if enriched.operation_only { col.column.clone() } else { base.column_name(ci) };
        let cnode = graph.add_node(Node { kind: NodeKind::Column, label, column: Some(col.clone()), value: None });
        graph.add_edge(root, cnode, EdgeKind::HasAttribute);
        if enriched.operation_only {
            continue;
        }
        let mut seen: Vec<&Value> = Vec::new();
        for &r in &rows {
            let v = &base.rows[r][ci];
            if !seen.contains(&v) {
                seen.push(v);
                let vnode = graph.add_node(Node {
                    kind: NodeKind::Value,
                    label: v.to_string(),
                    column: None,
                    value: Some(v.clone()),
                });
                graph.add_edge(cnode, vnode, EdgeKind::HasValue);
            }
        }
    }

    let mut pg = ProvenanceGraph { graph, root, labels: BTreeMap::new(), tables, row_count: rows.len() };
    for a in &enriched.annotations {
        let node = match &a.target {
            Target::Column(c) => pg.find_column(c).unwrap_or(root),
            Target::WholeTable { .. } => root,
        };
        pg.labels.entry(node).or_default().push(a.clone());
    }
    pg
}
