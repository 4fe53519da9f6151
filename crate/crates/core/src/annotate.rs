//! Attaches clause-level semantics from the original query (and the
//! rewriter's change log) to the columns of a provenance table.

use serde::Serialize;

use crate::db::{ProvenanceTable, Value};
use crate::rewrite::RewrittenQuery;
use crate::schema::DatabaseSchema;
use crate::sql::{
    predicates_of, AggregateArg, AggregateRef, ClauseKind, ColumnRef, Operand, Predicate, PredicateOp, QueryUnit,
    SetOperator, SqlQuery, TableRef, UnitElement,
};

/// Annotation kinds, declared in the priority order used when several
/// annotations label the same element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationKind {
    Filter,
    Aggregate,
    Grouping,
    Projection,
    Ordering,
    SetOp,
    TableScope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySide {
    Original,
    Rewritten,
}

/// Where an annotation came from: a unit (addressed by its index path
/// through nested units) and an element within it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct UnitSource {
    pub side: QuerySide,
    /// Branch of a compound query, if inside one.
    pub branch: Option<usize>,
    pub clause: ClauseKind,
    pub path: Vec<usize>,
    pub element: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Target {
    Column(ColumnRef),
    /// The whole provenance table, optionally narrowed to one base table.
    WholeTable {
        table: Option<String>,
    },
}

impl Target {
    pub fn column(&self) -> Option<&ColumnRef> {
        match self {
            Target::Column(c) => Some(c),
            Target::WholeTable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Payload {
    Filter(Predicate),
    /// A predicate over a subquery, carrying the subquery's own annotations.
    Subquery {
        predicate: Option<Predicate>,
        annotations: Vec<Annotation>,
    },
    Aggregate {
        aggregate: AggregateRef,
        value: Option<Value>,
    },
    Projection {
        position: Option<usize>,
        value: Option<Value>,
    },
    Distinct,
    Grouping,
    Ordering {
        descending: bool,
    },
    Limit {
        count: i64,
    },
    SetOp(SetOperator),
    Table(TableRef),
    Join(Predicate),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Annotation {
    pub source: UnitSource,
    pub kind: AnnotationKind,
    pub target: Target,
    pub payload: Payload,
}

/// A unit element no provenance column could be found for.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Unattached {
    pub source: UnitSource,
    pub element: UnitElement,
}

#[derive(Debug, Clone)]
pub struct EnrichedProvenanceTable {
    pub base: ProvenanceTable,
    pub annotations: Vec<Annotation>,
    /// Aggregates and aggregate conditions removed by the rewriter,
    /// rebuilt from its change log.
    pub removed_aggregate_annotations: Vec<Annotation>,
    pub unattached: Vec<Unattached>,
    /// Built from the query alone, without provenance rows.
    pub operation_only: bool,
}

impl EnrichedProvenanceTable {
    /// Annotations in phrase-generation priority, source order within a kind.
    pub fn prioritized(&self) -> Vec<&Annotation> {
        let mut v: Vec<&Annotation> = self.annotations.iter().collect();
        v.sort_by_key(|a| a.kind);
        v
    }

    pub fn of_kind(&self, kind: AnnotationKind) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(move |a| a.kind == kind)
    }
}

/// Annotates `prov` with the semantics of `original` and the change log of
/// `rewritten`.
pub fn annotate(
    prov: ProvenanceTable,
    original: &SqlQuery,
    rewritten: &RewrittenQuery,
    schema: &DatabaseSchema,
) -> EnrichedProvenanceTable {
    let mut ctx = Context {
        schema,
        columns: Some(&prov.columns),
        subject: Some(&rewritten.subject_row),
        annotations: Vec::new(),
        unattached: Vec::new(),
    };
    ctx.units(&original.units, None, &[]);
    let removed = removed_annotations(rewritten, schema);
    let Context { annotations, unattached, .. } = ctx;
    EnrichedProvenanceTable {
        base: prov,
        annotations,
        removed_aggregate_annotations: removed,
        unattached,
        operation_only: false,
    }
}

/// Annotations taken from the query alone, for empty results or when
/// provenance is unavailable.
pub fn operation_only_semantics(original: &SqlQuery, schema: &DatabaseSchema) -> EnrichedProvenanceTable {
    operation_only_with_row(original, schema, None)
}

/// Like [`operation_only_semantics`], taking projected values from `row`
/// when the result has one but provenance is empty (e.g. a zero count).
pub fn operation_only_with_row(
    original: &SqlQuery,
    schema: &DatabaseSchema,
    row: Option<&Vec<Value>>,
) -> EnrichedProvenanceTable {
    let mut ctx = Context { schema, columns: None, subject: row, annotations: Vec::new(), unattached: Vec::new() };
    ctx.units(&original.units, None, &[]);
    let Context { annotations, unattached, .. } = ctx;
    EnrichedProvenanceTable {
        base: ProvenanceTable::empty(),
        annotations,
        removed_aggregate_annotations: Vec::new(),
        unattached,
        operation_only: true,
    }
}

fn removed_annotations(rewritten: &RewrittenQuery, schema: &DatabaseSchema) -> Vec<Annotation> {
    let source =
        |clause, element| UnitSource { side: QuerySide::Rewritten, branch: None, clause, path: Vec::new(), element };
    let mut out: Vec<Annotation> = rewritten
        .removed_aggregates
        .iter()
        .enumerate()
        .map(|(i, a)| Annotation {
            source: source(ClauseKind::Select, i),
            kind: AnnotationKind::Aggregate,
            target: aggregate_target(a, schema),
            payload: Payload::Aggregate { aggregate: a.clone(), value: None },
        })
        .collect();
    for (i, removed) in rewritten.removed_conditions.iter().enumerate() {
        let clause = if removed.clause == "having" { ClauseKind::Having } else { ClauseKind::OrderBy };
        for p in predicates_of(&removed.expr) {
            let target = match &p.lhs {
                Operand::Aggregate(a) => aggregate_target(a, schema),
                Operand::Column(c) => Target::Column(c.clone()),
                _ => Target::WholeTable { table: None },
            };
            out.push(Annotation {
                source: UnitSource { branch: Some(removed.branch_id), ..source(clause, i) },
                kind: AnnotationKind::Filter,
                target,
                payload: Payload::Filter(p),
            });
        }
    }
    out
}

/// `count(*)` and counts over a single-column primary key describe the whole table; other
/// aggregates describe their argument column.
pub fn aggregate_target(a: &AggregateRef, schema: &DatabaseSchema) -> Target {
    match &a.arg {
        AggregateArg::Star => Target::WholeTable { table: None },
        AggregateArg::Column(c) => {
            let is_key = c
                .table
                .as_deref()
                .and_then(|t| schema.table(t))
                .and_then(|t| t.single_primary_key())
                .is_some_and(|k| k.name.eq_ignore_ascii_case(&c.column));
            if a.func == "count" && is_key && !a.distinct {
                Target::WholeTable { table: c.table.clone() }
            } else {
                Target::Column(c.clone())
            }
        }
        AggregateArg::Expr(_) => Target::WholeTable { table: None },
    }
}

struct Context<'a> {
    schema: &'a DatabaseSchema,
    /// Provenance columns to match against; `None` accepts any resolved column.
    columns: Option<&'a [ColumnRef]>,
    subject: Option<&'a Vec<Value>>,
    annotations: Vec<Annotation>,
    unattached: Vec<Unattached>,
}

impl Context<'_> {
    fn units(&mut self, units: &[QueryUnit], branch: Option<usize>, path: &[usize]) {
        for (i, unit) in units.iter().enumerate() {
            let mut p = path.to_vec();
            p.push(i);
            self.unit(unit, branch, &p);
        }
    }

    fn unit(&mut self, unit: &QueryUnit, branch: Option<usize>, path: &[usize]) {
        let mut position = Some(0usize);
        for (idx, element) in unit.elements.iter().enumerate() {
            let source = UnitSource {
                side: QuerySide::Original,
                branch,
                clause: unit.clause_kind,
                path: path.to_vec(),
                element: idx,
            };
            if unit.clause_kind == ClauseKind::SetOp {
                if let UnitElement::Subquery(child) = element {
                    let branch_id =
                        unit.elements[..idx].iter().filter(|e| matches!(e, UnitElement::Subquery(_))).count();
                    let mut p = path.to_vec();
                    p.push(*child);
                    self.units(&unit.children[*child].children, Some(branch_id), &p);
                    continue;
                }
            }
            let produced = self.element(unit, element, source.clone(), &mut position);
            if !produced {
                self.unattached.push(Unattached { source, element: element.clone() });
            }
        }
    }

    fn push(&mut self, source: UnitSource, kind: AnnotationKind, target: Target, payload: Payload) {
        self.annotations.push(Annotation { source, kind, target, payload });
    }

    /// Resolves a column against the provenance columns, returning the
    /// provenance column's own reference.
    fn locate(&self, column: &ColumnRef) -> Option<ColumnRef> {
        match self.columns {
            None => column.is_resolved().then(|| column.clone()),
            Some(cols) => {
                cols.iter().find(|c| c == &column).or_else(|| cols.iter().find(|c| c.same_column(column))).cloned()
            }
        }
    }

    fn subject_value(&self, position: Option<usize>) -> Option<Value> {
        position.and_then(|p| self.subject.and_then(|row| row.get(p).cloned()))
    }

    fn operand_target(&self, operand: &Operand) -> Option<Target> {
        match operand {
            Operand::Column(c) => self.locate(c).map(Target::Column),
            Operand::Aggregate(a) => Some(self.aggregate_target(a)),
            Operand::Expression { columns, .. } => columns.iter().find_map(|c| self.locate(c)).map(Target::Column),
            Operand::None => Some(Target::WholeTable { table: None }),
            _ => None,
        }
    }

    fn aggregate_target(&self, a: &AggregateRef) -> Target {
        match aggregate_target(a, self.schema) {
            Target::Column(c) => match self.locate(&c) {
                Some(found) => Target::Column(found),
                None => Target::WholeTable { table: c.table },
            },
            whole => whole,
        }
    }

    fn nested(&self, unit: &QueryUnit, idx: usize) -> Vec<Annotation> {
        let mut inner = Context {
            schema: self.schema,
            columns: None,
            subject: None,
            annotations: Vec::new(),
            unattached: Vec::new(),
        };
        if let Some(child) = unit.children.get(idx) {
            inner.units(&child.children, None, &[idx]);
        }
        inner.annotations
    }

    /// Annotates one element; returns false when nothing could be attached.
    fn element(
        &mut self,
        unit: &QueryUnit,
        element: &UnitElement,
        source: UnitSource,
        position: &mut Option<usize>,
    ) -> bool {
        use AnnotationKind as K;
        let clause = unit.clause_kind;
        let mut advance = |width: Option<usize>| {
            let here = *position;
            *position = match (here, width) {
                (Some(p), Some(w)) => Some(p + w),
                _ => None,
            };
            here
        };
        match element {
            UnitElement::Distinct => {
                self.push(source, K::Projection, Target::WholeTable { table: None }, Payload::Distinct);
                true
            }
            UnitElement::Asterisk { table } => {
                let width = self.asterisk_width(table.as_deref());
                advance(width);
                let table = table.as_ref().map(|q| self.binding_table(q));
                self.push(
                    source,
                    K::Projection,
                    Target::WholeTable { table },
                    Payload::Projection { position: None, value: None },
                );
                true
            }
            UnitElement::Column(c) => {
                let pos = if clause == ClauseKind::Select { advance(Some(1)) } else { None };
                let Some(target) = self.locate(c) else { return false };
                let (kind, payload) = match clause {
                    ClauseKind::GroupBy => (K::Grouping, Payload::Grouping),
                    _ => (K::Projection, Payload::Projection { position: pos, value: self.subject_value(pos) }),
                };
                self.push(source, kind, Target::Column(target), payload);
                true
            }
            UnitElement::Aggregate(a) => {
                let pos = if clause == ClauseKind::Select { advance(Some(1)) } else { None };
                let target = self.aggregate_target(a);
                let value = self.subject_value(pos);
                let kind = if clause == ClauseKind::GroupBy { K::Grouping } else { K::Aggregate };
                self.push(source, kind, target, Payload::Aggregate { aggregate: a.clone(), value });
                true
            }
            UnitElement::Expression { columns, .. } => {
                let pos = if clause == ClauseKind::Select { advance(Some(1)) } else { None };
                let Some(target) = columns.iter().find_map(|c| self.locate(c)) else { return false };
                let (kind, payload) = match clause {
                    ClauseKind::GroupBy => (K::Grouping, Payload::Grouping),
                    _ => (K::Projection, Payload::Projection { position: pos, value: self.subject_value(pos) }),
                };
                self.push(source, kind, Target::Column(target), payload);
                true
            }
            UnitElement::Literal(l) => {
                if clause == ClauseKind::Select {
                    advance(Some(1));
                }
                match (clause, l) {
                    (ClauseKind::Limit, crate::sql::Literal::Integer(n)) => {
                        self.push(
                            source,
                            K::Ordering,
                            Target::WholeTable { table: None },
                            Payload::Limit { count: *n },
                        );
                        true
                    }
                    _ => false,
                }
            }
            UnitElement::Table(t) => {
                let target = Target::WholeTable { table: Some(t.name.clone()) };
                self.push(source, K::TableScope, target, Payload::Table(t.clone()));
                true
            }
            UnitElement::Subquery(idx) => {
                let annotations = self.nested(unit, *idx);
                let kind = match clause {
                    ClauseKind::Select => {
                        advance(Some(1));
                        K::Projection
                    }
                    ClauseKind::From | ClauseKind::Join => K::TableScope,
                    _ => K::Filter,
                };
                self.push(
                    source,
                    kind,
                    Target::WholeTable { table: None },
                    Payload::Subquery { predicate: None, annotations },
                );
                true
            }
            UnitElement::SetOperator(op) => {
                self.push(source, K::SetOp, Target::WholeTable { table: None }, Payload::SetOp(*op));
                true
            }
            UnitElement::OrderKey { key, descending } => {
                let Some(target) = self.operand_target(key) else { return false };
                self.push(source, K::Ordering, target, Payload::Ordering { descending: *descending });
                true
            }
            UnitElement::Predicate(p) => self.predicate(unit, p, source),
        }
    }

    fn predicate(&mut self, unit: &QueryUnit, p: &Predicate, source: UnitSource) -> bool {
        let join = source.clause != ClauseKind::Having
            && p.op == PredicateOp::Eq
            && !p.negated
            && match (&p.lhs, &p.rhs) {
                (Operand::Column(a), Operand::Column(b)) => a.binding.is_some() && a.binding != b.binding,
                _ => false,
            };
        let Some(target) = self.operand_target(&p.lhs) else { return false };
        if let Operand::Subquery(idx) = p.rhs {
            let annotations = self.nested(unit, idx);
            let payload = Payload::Subquery { predicate: Some(p.clone()), annotations };
            self.push(source, AnnotationKind::Filter, target, payload);
        } else if join {
            self.push(source, AnnotationKind::TableScope, target, Payload::Join(p.clone()));
        } else {
            self.push(source, AnnotationKind::Filter, target, Payload::Filter(p.clone()));
        }
        true
    }

    fn binding_table(&self, qualifier: &str) -> String {
        self.columns
            .into_iter()
            .flatten()
            .find(|c| c.binding.as_deref().is_some_and(|b| b.eq_ignore_ascii_case(qualifier)))
            .and_then(|c| c.table.clone())
            .or_else(|| self.schema.table(qualifier).map(|t| t.name.clone()))
            .unwrap_or_else(|| qualifier.to_string())
    }

    /// Output width of a wildcard, when it can be known from the schema.
    fn asterisk_width(&self, qualifier: Option<&str>) -> Option<usize> {
        let table = self.binding_table(qualifier?);
        self.schema.table(&table).map(|t| t.columns.len())
    }
}

/// Whether a predicate compares a column against literals only.
pub fn is_literal_filter(p: &Predicate) -> bool {
    let literal = |o: &Operand| matches!(o, Operand::Literal(_));
    matches!(p.lhs, Operand::Column(_))
        && match (&p.op, &p.rhs) {
            (PredicateOp::In, Operand::List(items)) => items.iter().all(literal),
            (PredicateOp::Between, Operand::Range(a, b)) => literal(a) && literal(b),
            (PredicateOp::IsNull, Operand::None) => true,
            (_, rhs) => literal(rhs),
        }
}
