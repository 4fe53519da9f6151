//! Join semantics: the join graph is matched against a pool of small
//! topologies, each with a phrase template.

use petgraph::algo::isomorphism::subgraph_isomorphisms_iter;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::lexicon::Lexicon;
use crate::schema::DatabaseSchema;
use crate::sql::{ColumnRef, TableRef};

const BUILTIN_POOL: &str = include_str!("../../data/topology_pool.json");

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct Topology {
    pub pattern_id: String,
    pub node_count: usize,
    /// Directed edges from the referencing table to the referenced one.
    pub edges: Vec<(usize, usize)>,
    /// `{i}` is node i's noun, `{i:plural}` its plural.
    pub phrase_template: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct TopologyPool(pub Vec<Topology>);

impl Default for TopologyPool {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TopologyPool {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_POOL).expect("bundled topology pool is valid JSON")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text).map(TopologyPool)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JoinSemantics {
    pub pattern_id: Option<String>,
    pub rendered_phrase: String,
    /// Joined tables in FROM order.
    pub tables: Vec<String>,
}

/// Describes how `tables` relate, given the join conditions between them.
///
/// Edges follow foreign keys from the referencing table; a join on columns
/// without a declared key is oriented left to right. When several node
/// assignments fit a pattern, the one that keeps FROM order wins.
pub fn discover_join_semantics(
    schema: &DatabaseSchema,
    tables: &[TableRef],
    conditions: &[(ColumnRef, ColumnRef)],
    pool: &TopologyPool,
    lexicon: &Lexicon,
) -> JoinSemantics {
    let names: Vec<String> = tables.iter().map(|t| t.name.clone()).collect();
    let nouns: Vec<String> = tables.iter().map(|t| lexicon.table_noun(schema, &t.name)).collect();
    let mut graph = DiGraph::<usize, ()>::new();
    let nodes: Vec<_> = (0..tables.len()).map(|i| graph.add_node(i)).collect();
    let position = |c: &ColumnRef| {
        tables.iter().position(|t| c.binding.as_deref().is_some_and(|b| b.eq_ignore_ascii_case(&t.binding)))
    };
    for (a, b) in conditions {
        let (Some(i), Some(j)) = (position(a), position(b)) else { continue };
        if i == j {
            continue;
        }
        let (from, to) = if references(schema, b, a) { (j, i) } else { (i, j) };
        if graph.find_edge(nodes[from], nodes[to]).is_none() && graph.find_edge(nodes[to], nodes[from]).is_none() {
            graph.add_edge(nodes[from], nodes[to], ());
        }
    }
    // Tables joined without a condition still link through declared keys.
    if conditions.is_empty() {
        for i in 0..tables.len() {
            for j in 0..tables.len() {
                let linked = schema
                    .links_between(&tables[i].name, &tables[j].name)
                    .any(|(t, _)| t.name.eq_ignore_ascii_case(&tables[i].name));
                if i != j && linked && graph.find_edge(nodes[j], nodes[i]).is_none() {
                    graph.update_edge(nodes[i], nodes[j], ());
                }
            }
        }
    }

    for topology in &pool.0 {
        if topology.node_count != graph.node_count() || topology.edges.len() != graph.edge_count() {
            continue;
        }
        let mut pattern = DiGraph::<usize, ()>::new();
        let pnodes: Vec<_> = (0..topology.node_count).map(|i| pattern.add_node(i)).collect();
        if topology.edges.iter().any(|&(a, b)| a >= topology.node_count || b >= topology.node_count) {
            continue;
        }
        for &(a, b) in &topology.edges {
            pattern.add_edge(pnodes[a], pnodes[b], ());
        }
        let mut nm = |_: &usize, _: &usize| true;
        let mut em = |_: &(), _: &()| true;
        let (pattern_ref, graph_ref) = (&pattern, &graph);
        let Some(mappings) = subgraph_isomorphisms_iter(&pattern_ref, &graph_ref, &mut nm, &mut em) else { continue };
        // The lexicographically smallest mapping keeps pattern slots in FROM order.
        let Some(best) = mappings.min() else { continue };
        let phrase = render(&topology.phrase_template, &best, &nouns, lexicon);
        return JoinSemantics { pattern_id: Some(topology.pattern_id.clone()), rendered_phrase: phrase, tables: names };
    }
    JoinSemantics { pattern_id: None, rendered_phrase: list_phrase(&nouns), tables: names }
}

/// Whether `from` is a foreign key pointing at `to`.
fn references(schema: &DatabaseSchema, from: &ColumnRef, to: &ColumnRef) -> bool {
    let (Some(ft), Some(tt)) = (&from.table, &to.table) else { return false };
    schema.table(ft).is_some_and(|t| {
        t.foreign_keys.iter().any(|fk| {
            fk.column.eq_ignore_ascii_case(&from.column)
                && fk.foreign_table.eq_ignore_ascii_case(tt)
                && fk.foreign_column.eq_ignore_ascii_case(&to.column)
        })
    })
}

fn render(template: &str, mapping: &[usize], nouns: &[String], lexicon: &Lexicon) -> String {
    let mut out = template.to_string();
    for (slot, &node) in mapping.iter().enumerate() {
        out = out.replace(&format!("{{{slot}:plural}}"), &lexicon.plural(&nouns[node]));
        out = out.replace(&format!("{{{slot}}}"), &nouns[node]);
    }
    out
}

/// "a", "a and b", "a, b and c".
pub fn list_phrase(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}
