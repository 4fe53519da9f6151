//! Clause-level query units. Each top-level clause becomes one unit whose
//! span runs up to the next unit, so top-level spans tile the statement.
//! Subqueries are single units nested under the unit that mentions them.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::{ColumnRef, TableRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseKind {
    Select,
    From,
    Join,
    Where,
    GroupBy,
    Having,
    OrderBy,
    Limit,
    SetOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryUnit {
    pub clause_kind: ClauseKind,
    pub elements: Vec<UnitElement>,
    pub source_span: Range<usize>,
    pub is_subquery: bool,
    /// Nested subquery units, addressed by `UnitElement::Subquery` and
    /// `Operand::Subquery` indices.
    pub children: Vec<QueryUnit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AggregateArg {
    Star,
    Column(ColumnRef),
    Expr(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRef {
    /// Lowercase function name.
    pub func: String,
    pub arg: AggregateArg,
    pub distinct: bool,
}

impl AggregateRef {
    pub fn from_call(f: &FunctionCall) -> Self {
        let arg = match f.args.first() {
            None | Some(Expr::Wildcard) => AggregateArg::Star,
            Some(Expr::Column(c)) => AggregateArg::Column(ColumnRef::from_expr(c)),
            Some(other) => AggregateArg::Expr(other.to_string()),
        };
        Self { func: f.name.clone(), arg, distinct: f.distinct }
    }

    pub fn column(&self) -> Option<&ColumnRef> {
        match &self.arg {
            AggregateArg::Column(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredicateOp {
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Like,
    In,
    Between,
    IsNull,
    Exists,
    /// A boolean expression with no recognisable comparison shape.
    Truth,
}

impl PredicateOp {
    fn from_binary(op: BinaryOperator) -> Option<(Self, bool)> {
        use BinaryOperator as B;
        Some(match op {
            B::Eq => (Self::Eq, false),
            B::NotEq => (Self::NotEq, false),
            B::Lt => (Self::Lt, false),
            B::LtEq => (Self::LtEq, false),
            B::Gt => (Self::Gt, false),
            B::GtEq => (Self::GtEq, false),
            B::Like => (Self::Like, false),
            B::NotLike => (Self::Like, true),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connective {
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Column(ColumnRef),
    Aggregate(AggregateRef),
    Literal(Literal),
    List(Vec<Operand>),
    Range(Box<Operand>, Box<Operand>),
    Subquery(usize),
    Expression { text: String, columns: Vec<ColumnRef> },
    None,
}

impl Operand {
    pub fn column(&self) -> Option<&ColumnRef> {
        match self {
            Operand::Column(c) => Some(c),
            _ => None,
        }
    }

    pub fn literal(&self) -> Option<&Literal> {
        match self {
            Operand::Literal(l) => Some(l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub lhs: Operand,
    pub op: PredicateOp,
    pub rhs: Operand,
    /// How this predicate joins the one before it in the clause.
    pub connective: Option<Connective>,
    pub negated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UnitElement {
    Column(ColumnRef),
    Asterisk { table: Option<String> },
    Aggregate(AggregateRef),
    Table(TableRef),
    Predicate(Predicate),
    Literal(Literal),
    Subquery(usize),
    Expression { text: String, columns: Vec<ColumnRef> },
    Distinct,
    SetOperator(SetOperator),
    OrderKey { key: Operand, descending: bool },
}

/// Decomposes a query whose source text is `text_len` bytes long.
pub(crate) fn decompose_query(query: &Query, text_len: usize) -> Vec<QueryUnit> {
    let mut units = query_units(query);
    tile(&mut units, 0, text_len);
    units
}

/// Units of one query level with their natural (token-tight) spans.
fn query_units(query: &Query) -> Vec<QueryUnit> {
    let mut units = match &query.body {
        SetExpr::Select(select) => select_units(select),
        SetExpr::SetOperation { .. } => vec![set_op_unit(&query.body)],
    };
    if let Some(span) = query.layout.order_by {
        let mut b = UnitBuilder::new(ClauseKind::OrderBy, span);
        for item in &query.order_by {
            let key = b.operand(&item.expr);
            b.elements.push(UnitElement::OrderKey { key, descending: item.descending.unwrap_or(false) });
        }
        units.push(b.finish());
    }
    if let (Some(span), Some(limit)) = (query.layout.limit, &query.limit) {
        let mut b = UnitBuilder::new(ClauseKind::Limit, span);
        b.elements.push(UnitElement::Literal(Literal::Integer(limit.count)));
        if let Some(offset) = limit.offset {
            b.elements.push(UnitElement::Literal(Literal::Integer(offset)));
        }
        units.push(b.finish());
    }
    units
}

fn set_op_unit(body: &SetExpr) -> QueryUnit {
    let branches = body.branches();
    let start = branches.first().map_or(0, |s| s.layout.span.start);
    let end = branches.last().map_or(0, |s| s.layout.span.end);
    let mut b = UnitBuilder::new(ClauseKind::SetOp, Span { start, end });
    push_set_ops(body, &mut b);
    for select in branches {
        let mut children = select_units(select);
        let span = select.layout.span;
        tile(&mut children, span.start, span.end);
        let idx = b.children.len();
        b.children.push(QueryUnit {
            clause_kind: ClauseKind::Select,
            elements: Vec::new(),
            source_span: span.start..span.end,
            is_subquery: true,
            children,
        });
        b.elements.push(UnitElement::Subquery(idx));
    }
    b.finish()
}

fn push_set_ops(body: &SetExpr, b: &mut UnitBuilder) {
    if let SetExpr::SetOperation { op, left, right, .. } = body {
        push_set_ops(left, b);
        b.elements.push(UnitElement::SetOperator(*op));
        push_set_ops(right, b);
    }
}

fn select_units(select: &Select) -> Vec<QueryUnit> {
    let layout = &select.layout;
    let select_end = [layout.from, layout.selection, layout.group_by, layout.having]
        .iter()
        .flatten()
        .map(|s| s.start)
        .min()
        .unwrap_or(layout.span.end);
    let mut units = Vec::new();

    let mut b = UnitBuilder::new(ClauseKind::Select, Span { start: layout.span.start, end: select_end });
    if select.distinct {
        b.elements.push(UnitElement::Distinct);
    }
    for item in &select.projection {
        let el = b.projection_element(&item.expr);
        b.elements.push(el);
    }
    units.push(b.finish());

    if let (Some(from), Some(span)) = (&select.from, layout.from) {
        let mut b = UnitBuilder::new(ClauseKind::From, span);
        b.table_factor(&from.first);
        units.push(b.finish());
        for (join, span) in from.joins.iter().zip(&layout.joins) {
            let mut b = UnitBuilder::new(ClauseKind::Join, *span);
            b.table_factor(&join.factor);
            if let Some(on) = &join.constraint {
                b.predicates(on, None, false);
            }
            units.push(b.finish());
        }
    }
    if let (Some(sel), Some(span)) = (&select.selection, layout.selection) {
        let mut b = UnitBuilder::new(ClauseKind::Where, span);
        b.predicates(sel, None, false);
        units.push(b.finish());
    }
    if let Some(span) = layout.group_by {
        let mut b = UnitBuilder::new(ClauseKind::GroupBy, span);
        for g in &select.group_by {
            let el = b.projection_element(g);
            b.elements.push(el);
        }
        units.push(b.finish());
    }
    if let (Some(h), Some(span)) = (&select.having, layout.having) {
        let mut b = UnitBuilder::new(ClauseKind::Having, span);
        b.predicates(h, None, false);
        units.push(b.finish());
    }
    units
}

/// Stretches spans so consecutive units meet and the first and last touch
/// `start` and `end`.
fn tile(units: &mut [QueryUnit], start: usize, end: usize) {
    let n = units.len();
    for i in 0..n {
        let s = if i == 0 { start } else { units[i - 1].source_span.end };
        let e = if i + 1 == n { end } else { units[i + 1].source_span.start };
        units[i].source_span = s..e;
    }
}

struct UnitBuilder {
    kind: ClauseKind,
    span: Span,
    elements: Vec<UnitElement>,
    children: Vec<QueryUnit>,
}

impl UnitBuilder {
    fn new(kind: ClauseKind, span: Span) -> Self {
        Self { kind, span, elements: Vec::new(), children: Vec::new() }
    }

    fn finish(self) -> QueryUnit {
        QueryUnit {
            clause_kind: self.kind,
            elements: self.elements,
            source_span: self.span.start..self.span.end,
            is_subquery: false,
            children: self.children,
        }
    }

    fn subquery(&mut self, query: &Query) -> usize {
        let span = query.layout.span;
        let mut children = query_units(query);
        tile(&mut children, span.start, span.end);
        self.children.push(QueryUnit {
            clause_kind: ClauseKind::Select,
            elements: Vec::new(),
            source_span: span.start..span.end,
            is_subquery: true,
            children,
        });
        self.children.len() - 1
    }

    fn table_factor(&mut self, factor: &TableFactor) {
        match factor {
            TableFactor::Table { name, alias } => self.elements.push(UnitElement::Table(TableRef {
                name: name.clone(),
                binding: alias.clone().unwrap_or_else(|| name.clone()),
            })),
            TableFactor::Derived { subquery, .. } => {
                let idx = self.subquery(subquery);
                self.elements.push(UnitElement::Subquery(idx));
            }
        }
    }

    fn projection_element(&mut self, expr: &Expr) -> UnitElement {
        match expr {
            Expr::Wildcard => UnitElement::Asterisk { table: None },
            Expr::QualifiedWildcard(t) => UnitElement::Asterisk { table: Some(t.clone()) },
            Expr::Subquery(q) => UnitElement::Subquery(self.subquery(q)),
            other => match self.operand(other) {
                Operand::Column(c) => UnitElement::Column(c),
                Operand::Aggregate(a) => UnitElement::Aggregate(a),
                Operand::Literal(l) => UnitElement::Literal(l),
                Operand::Subquery(i) => UnitElement::Subquery(i),
                Operand::Expression { text, columns } => UnitElement::Expression { text, columns },
                Operand::List(_) | Operand::Range(..) | Operand::None => {
                    UnitElement::Expression { text: other.to_string(), columns: expr_columns(other) }
                }
            },
        }
    }

    fn operand(&mut self, expr: &Expr) -> Operand {
        match expr {
            Expr::Column(c) => Operand::Column(ColumnRef::from_expr(c)),
            Expr::Literal(l) => Operand::Literal(l.clone()),
            Expr::Function(f) if f.is_aggregate() => Operand::Aggregate(AggregateRef::from_call(f)),
            Expr::Subquery(q) => Operand::Subquery(self.subquery(q)),
            Expr::Nested(inner) => self.operand(inner),
            other => Operand::Expression { text: other.to_string(), columns: expr_columns(other) },
        }
    }

    /// Flattens a boolean tree into predicates, recording connectives.
    fn predicates(&mut self, expr: &Expr, connective: Option<Connective>, negated: bool) {
        match expr {
            Expr::Binary { left, op: op @ (BinaryOperator::And | BinaryOperator::Or), right } if !negated => {
                let joiner = if *op == BinaryOperator::And { Connective::And } else { Connective::Or };
                self.predicates(left, connective, false);
                self.predicates(right, Some(joiner), false);
            }
            Expr::Nested(inner) => self.predicates(inner, connective, negated),
            Expr::Unary { op: UnaryOperator::Not, expr: inner } => self.predicates(inner, connective, !negated),
            other => {
                let mut p = self.predicate(other);
                p.connective = connective;
                p.negated ^= negated;
                self.elements.push(UnitElement::Predicate(p));
            }
        }
    }

    fn predicate(&mut self, expr: &Expr) -> Predicate {
        let mk = |lhs, op, rhs, negated| Predicate { lhs, op, rhs, connective: None, negated };
        match expr {
            Expr::Binary { left, op, right } => match PredicateOp::from_binary(*op) {
                Some((pop, neg)) => {
                    let l = self.operand(left);
                    let r = self.operand(right);
                    mk(l, pop, r, neg)
                }
                None => mk(self.operand(expr), PredicateOp::Truth, Operand::None, false),
            },
            Expr::InList { expr: e, list, negated } => {
                let l = self.operand(e);
                let items = list.iter().map(|x| self.operand(x)).collect();
                mk(l, PredicateOp::In, Operand::List(items), *negated)
            }
            Expr::InSubquery { expr: e, subquery, negated } => {
                let l = self.operand(e);
                let idx = self.subquery(subquery);
                mk(l, PredicateOp::In, Operand::Subquery(idx), *negated)
            }
            Expr::Between { expr: e, low, high, negated } => {
                let l = self.operand(e);
                let lo = self.operand(low);
                let hi = self.operand(high);
                mk(l, PredicateOp::Between, Operand::Range(Box::new(lo), Box::new(hi)), *negated)
            }
            Expr::IsNull { expr: e, negated } => {
                let l = self.operand(e);
                mk(l, PredicateOp::IsNull, Operand::None, *negated)
            }
            Expr::Exists { subquery, negated } => {
                let idx = self.subquery(subquery);
                mk(Operand::None, PredicateOp::Exists, Operand::Subquery(idx), *negated)
            }
            other => mk(self.operand(other), PredicateOp::Truth, Operand::None, false),
        }
    }
}

fn expr_columns(expr: &Expr) -> Vec<ColumnRef> {
    expr.columns().into_iter().map(ColumnRef::from_expr).collect()
}

impl QueryUnit {
    /// All predicates in this unit, in clause order.
    pub fn predicates(&self) -> impl Iterator<Item = &Predicate> {
        self.elements.iter().filter_map(|e| match e {
            UnitElement::Predicate(p) => Some(p),
            _ => None,
        })
    }
}

/// Flattens a boolean expression into predicates, as a WHERE unit would.
pub fn predicates_of(expr: &Expr) -> Vec<Predicate> {
    let mut b = UnitBuilder::new(ClauseKind::Where, Span::default());
    b.predicates(expr, None, false);
    b.elements
        .into_iter()
        .filter_map(|e| match e {
            UnitElement::Predicate(p) => Some(p),
            _ => None,
        })
        .collect()
}
