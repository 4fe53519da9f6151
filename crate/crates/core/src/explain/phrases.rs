//! Phrase generation from a labelled provenance graph, and sentence
//! composition.

use serde::Serialize;

use super::graph::ProvenanceGraph;
use super::joins::{list_phrase, JoinSemantics};
use super::lexicon::Lexicon;
use crate::annotate::{Annotation, AnnotationKind, Payload, QuerySide, Target};
use crate::db::Value;
use crate::schema::DatabaseSchema;
use crate::sql::{
    AggregateArg, AggregateRef, ClauseKind, ColumnRef, Connective, Literal, Operand, Predicate, PredicateOp,
    SetOperator,
};

/// How a phrase is placed when the explanation is composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhraseRole {
    /// Appended to the summary: "…, filtered by …".
    Filter,
    /// Opens the main sentence: "For flights with …,".
    Scope,
    /// The main sentence body.
    Main,
    /// A follow-up sentence starting with "So".
    Consequence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Phrase {
    pub role: PhraseRole,
    pub text: String,
    /// Lead-in for the sentence this phrase opens, e.g. "That is,".
    pub connective: Option<&'static str>,
}

impl Phrase {
    fn new(role: PhraseRole, text: String) -> Self {
        Self { role, text, connective: None }
    }
}

/// Inputs phrase generation needs besides the graph.
pub struct PhraseContext<'a> {
    pub schema: &'a DatabaseSchema,
    pub lexicon: &'a Lexicon,
    /// Rows in the query result.
    pub result_rows: usize,
}

const TOTAL_LEAD: &str = "That is,";
const SINGLE_LEAD: &str = "Here,";
const EXAMPLE_LEAD: &str = "Among them, for example,";

/// The entity an explanation talks about: a column and its value.
struct Entity {
    column: ColumnRef,
    value: String,
}

struct Writer<'a> {
    graph: &'a ProvenanceGraph,
    join: Option<&'a JoinSemantics>,
    ctx: &'a PhraseContext<'a>,
}

/// One phrase per labelled element group, in annotation priority order.
pub fn generate_phrases(graph: &ProvenanceGraph, join: Option<&JoinSemantics>, ctx: &PhraseContext<'_>) -> Vec<Phrase> {
    if graph.all_labels().is_empty() {
        return Vec::new();
    }
    Writer { graph, join, ctx }.phrases()
}

impl Writer<'_> {
    fn schema(&self) -> &DatabaseSchema {
        self.ctx.schema
    }

    fn lex(&self) -> &Lexicon {
        self.ctx.lexicon
    }

    fn labelled(&self, kind: AnnotationKind) -> Vec<&Annotation> {
        self.graph.labelled(kind).into_iter().filter(|a| a.source.side == QuerySide::Original).collect()
    }

    fn table_noun(&self, table: &str) -> String {
        self.lex().table_noun(self.schema(), table)
    }

    fn column_noun(&self, c: &ColumnRef) -> String {
        self.lex().column_noun(self.schema(), c)
    }

    fn is_key(&self, c: &ColumnRef) -> bool {
        c.table
            .as_deref()
            .and_then(|t| self.schema().table(t))
            .and_then(|t| t.single_primary_key())
            .is_some_and(|k| k.name.eq_ignore_ascii_case(&c.column))
    }

    fn first_table(&self) -> Option<String> {
        self.graph.tables.first().map(|t| t.name.clone())
    }

    fn groupings(&self) -> Vec<ColumnRef> {
        self.labelled(AnnotationKind::Grouping).into_iter().filter_map(|a| a.target.column().cloned()).collect()
    }

    /// Table counted by `count(*)`: the first one not holding a grouping
    /// column, else the first table.
    fn counted_table(&self, a: &AggregateRef) -> Option<String> {
        if let Some(c) = a.column() {
            return c.table.clone();
        }
        let groups = self.groupings();
        self.graph
            .tables
            .iter()
            .find(|t| !groups.iter().any(|g| g.binding.as_deref().is_some_and(|b| b.eq_ignore_ascii_case(&t.binding))))
            .map(|t| t.name.clone())
            .or_else(|| self.first_table())
    }

    /// Plural noun for what an aggregate counts.
    fn counted_plural(&self, a: &AggregateRef, qualified: bool) -> String {
        match a.column() {
            Some(c) if !self.is_key(c) => {
                let noun = self.lex().plural(&self.column_noun(c));
                match self.lex().qualifier(c) {
                    Some(q) if qualified => format!("{q} {noun}"),
                    _ => noun,
                }
            }
            _ => self.counted_table(a).map_or_else(|| "rows".to_string(), |t| self.lex().plural(&self.table_noun(&t))),
        }
    }

    fn aggregate_subject(&self, a: &AggregateRef) -> String {
        match a.func.as_str() {
            "count" => {
                let distinct = if a.distinct { "distinct " } else { "" };
                format!("the number of {distinct}{}", self.counted_plural(a, false))
            }
            f => format!("the {} of {}", function_word(f), self.argument_noun(a)),
        }
    }

    fn argument_noun(&self, a: &AggregateRef) -> String {
        match &a.arg {
            AggregateArg::Column(c) => self.column_noun(c),
            AggregateArg::Expr(text) => text.clone(),
            AggregateArg::Star => "rows".into(),
        }
    }

    fn operand_text(&self, o: &Operand) -> String {
        match o {
            Operand::Column(c) => self.lex().qualified_column_noun(self.schema(), c),
            Operand::Aggregate(a) => self.aggregate_subject(a),
            Operand::Literal(l) => l.to_text(),
            Operand::List(items) => {
                let texts: Vec<String> = items.iter().map(|i| self.operand_text(i)).collect();
                match texts.as_slice() {
                    [] => String::new(),
                    [one] => one.clone(),
                    [init @ .., last] => format!("{} or {last}", init.join(", ")),
                }
            }
            Operand::Range(lo, hi) => format!("{} and {}", self.operand_text(lo), self.operand_text(hi)),
            Operand::Expression { text, .. } => text.clone(),
            Operand::Subquery(_) | Operand::None => String::new(),
        }
    }

    fn predicate_text(&self, p: &Predicate) -> String {
        let subject = self.operand_text(&p.lhs);
        let rhs = self.operand_text(&p.rhs);
        let aggregate = matches!(p.lhs, Operand::Aggregate(_));
        let not = if p.negated { "not " } else { "" };
        match p.op {
            PredicateOp::Eq if p.negated => format!("{subject} other than {rhs}"),
            PredicateOp::Eq if aggregate => format!("{subject} equal to {rhs}"),
            PredicateOp::Eq => format!("{subject} {rhs}"),
            PredicateOp::NotEq if p.negated => format!("{subject} {rhs}"),
            PredicateOp::NotEq => format!("{subject} other than {rhs}"),
            PredicateOp::Gt => format!("{subject} {not}greater than {rhs}"),
            PredicateOp::GtEq => format!("{subject} {not}at least {rhs}"),
            PredicateOp::Lt => format!("{subject} {not}less than {rhs}"),
            PredicateOp::LtEq => format!("{subject} {not}at most {rhs}"),
            PredicateOp::Like => format!("{subject} {not}like {rhs}"),
            PredicateOp::In if p.negated => format!("{subject} other than {rhs}"),
            PredicateOp::In => format!("{subject} {rhs}"),
            PredicateOp::Between => format!("{subject} {not}between {rhs}"),
            PredicateOp::IsNull if p.negated => format!("{subject} present"),
            PredicateOp::IsNull => format!("{subject} missing"),
            PredicateOp::Exists | PredicateOp::Truth => format!("{not}{subject}").trim().to_string(),
        }
    }

    fn nested_filters(&self, annotations: &[Annotation]) -> String {
        let parts: Vec<(Option<Connective>, String)> = annotations
            .iter()
            .filter(|a| a.kind == AnnotationKind::Filter)
            .filter_map(|a| self.filter_text(a).map(|t| (filter_connective(a), t)))
            .collect();
        join_with_connectives(&parts)
    }

    fn filter_text(&self, a: &Annotation) -> Option<String> {
        match &a.payload {
            Payload::Filter(p) => Some(self.predicate_text(p)),
            Payload::Subquery { predicate, annotations } => {
                let inner = self.nested_filters(annotations);
                let with = if inner.is_empty() { String::new() } else { format!(" with {inner}") };
                let plural = |c: Option<&ColumnRef>| {
                    c.and_then(|c| c.table.as_deref())
                        .map_or_else(|| "entries".into(), |t| self.lex().plural(&self.table_noun(t)))
                };
                let Some(p) = predicate else { return Some(format!("restricted to a subquery{with}")) };
                let lhs = p.lhs.column();
                Some(match p.op {
                    PredicateOp::In if p.negated => format!("excluding {}{with}", plural(lhs)),
                    PredicateOp::In => format!("limited to {}{with}", plural(lhs)),
                    PredicateOp::Exists => {
                        let inner_table = annotations.iter().find_map(|x| match &x.payload {
                            Payload::Table(t) => Some(t.name.clone()),
                            _ => None,
                        });
                        let what =
                            inner_table.map_or_else(|| "entries".into(), |t| self.lex().plural(&self.table_noun(&t)));
                        let lead = if p.negated { "without" } else { "with" };
                        format!("{lead} related {what}{with}")
                    }
                    _ => {
                        let agg = annotations.iter().find_map(|x| match &x.payload {
                            Payload::Aggregate { aggregate, .. } => Some(self.aggregate_subject(aggregate)),
                            _ => None,
                        });
                        let target = agg.unwrap_or_else(|| "a subquery value".into());
                        let scope = if inner.is_empty() { String::new() } else { format!(" for {inner}") };
                        let mut q = p.clone();
                        q.rhs = Operand::Literal(Literal::String(format!("{target}{scope}")));
                        self.predicate_text(&q)
                    }
                })
            }
            _ => None,
        }
    }

    /// Row filters (WHERE) grouped by branch, plus group filters (HAVING).
    fn filters(&self) -> (Vec<(Option<usize>, &Annotation)>, Vec<&Annotation>) {
        let mut rows = Vec::new();
        let mut groups = Vec::new();
        for a in self.labelled(AnnotationKind::Filter) {
            if a.source.clause == ClauseKind::Having {
                groups.push(a);
            } else {
                rows.push((a.source.branch, a));
            }
        }
        (rows, groups)
    }

    fn branch_filter_text(&self, filters: &[(Option<usize>, &Annotation)]) -> Option<String> {
        let mut branches: Vec<Option<usize>> = Vec::new();
        for (b, _) in filters {
            if !branches.contains(b) {
                branches.push(*b);
            }
        }
        let per_branch: Vec<Vec<&Annotation>> =
            branches.iter().map(|b| filters.iter().filter(|(x, _)| x == b).map(|(_, a)| *a).collect()).collect();
        // One equality on the same column in every branch reads as a list.
        if per_branch.len() > 1 {
            let single: Option<Vec<(&ColumnRef, String)>> = per_branch
                .iter()
                .map(|fs| match fs.as_slice() {
                    [a] => equality(a).map(|(c, v)| (c, v.to_text())),
                    _ => None,
                })
                .collect();
            if let Some(eqs) = single {
                if eqs.iter().all(|(c, _)| c.same_column(eqs[0].0)) {
                    let values: Vec<String> = eqs.iter().map(|(_, v)| v.clone()).collect();
                    let noun = self.lex().qualified_column_noun(self.schema(), eqs[0].0);
                    return Some(format!("{noun} {}", values.join(" or ")));
                }
            }
        }
        let texts: Vec<String> = per_branch
            .iter()
            .map(|fs| {
                let parts: Vec<(Option<Connective>, String)> =
                    fs.iter().filter_map(|a| self.filter_text(a).map(|t| (filter_connective(a), t))).collect();
                join_with_connectives(&parts)
            })
            .filter(|t| !t.is_empty())
            .collect();
        (!texts.is_empty()).then(|| texts.join(" or "))
    }

    fn ordering_text(&self) -> Vec<String> {
        let mut out = Vec::new();
        for a in self.labelled(AnnotationKind::Ordering) {
            match (&a.payload, &a.target) {
                (Payload::Ordering { descending }, Target::Column(c)) => {
                    let dir = if *descending { "descending" } else { "ascending" };
                    out.push(format!(
                        "sorted by {} in {dir} order",
                        self.lex().qualified_column_noun(self.schema(), c)
                    ));
                }
                (Payload::Limit { count }, _) if out.iter().all(|t| !t.starts_with("keeping")) => {
                    let rows = if *count == 1 { "row".to_string() } else { "rows".to_string() };
                    out.push(format!("keeping the first {count} {rows}"));
                }
                _ => {}
            }
        }
        out
    }

    /// A single value of `column` across the graph's rows.
    fn sole_value(&self, column: &ColumnRef) -> Option<String> {
        let node = self.graph.find_column(column)?;
        match self.graph.values(node).as_slice() {
            [v] if !v.is_null() => Some(v.to_string()),
            _ => None,
        }
    }

    fn projection_value(&self, column: &ColumnRef) -> Option<String> {
        self.labelled(AnnotationKind::Projection).into_iter().find_map(|a| match (&a.payload, &a.target) {
            (Payload::Projection { value: Some(v), .. }, Target::Column(c))
                if c.same_column(column) && !v.is_null() =>
            {
                Some(v.to_string())
            }
            _ => None,
        })
    }

    fn projected_columns(&self) -> Vec<(ColumnRef, Value)> {
        self.labelled(AnnotationKind::Projection)
            .into_iter()
            .filter(|a| a.source.branch.unwrap_or(0) == 0 && a.source.clause == ClauseKind::Select)
            .filter_map(|a| match (&a.payload, &a.target) {
                (Payload::Projection { value: Some(v), .. }, Target::Column(c)) => Some((c.clone(), v.clone())),
                _ => None,
            })
            .collect()
    }

    fn entity(&self, filters: &[(Option<usize>, &Annotation)], allow_plain: bool) -> Option<Entity> {
        if let Some(g) = self.groupings().first() {
            let value = self.projection_value(g).or_else(|| self.sole_value(g))?;
            return Some(Entity { column: g.clone(), value });
        }
        let projected = self.projected_columns();
        if let Some((c, v)) = projected.iter().find(|(c, v)| self.lex().is_name_column(c) && !v.is_null()) {
            return Some(Entity { column: c.clone(), value: v.to_string() });
        }
        // A name filter identifies the entity only when it is on the table
        // the query projects from.
        let projected_table = |c: &ColumnRef| projected.is_empty() || projected.iter().any(|(p, _)| p.table == c.table);
        for (_, a) in filters {
            if let Some((c, lit)) = equality(a) {
                if self.lex().is_name_column(c) && projected_table(c) {
                    return Some(Entity { column: c.clone(), value: lit.to_text() });
                }
            }
        }
        if allow_plain {
            if let Some((c, v)) = projected.iter().find(|(_, v)| !v.is_null()) {
                return Some(Entity { column: c.clone(), value: v.to_string() });
            }
        }
        None
    }

    fn entity_text(&self, e: &Entity) -> String {
        let table = e.column.table.as_deref().map(|t| self.table_noun(t)).unwrap_or_default();
        if self.lex().is_name_column(&e.column) {
            format!("{table} {}", e.value).trim().to_string()
        } else {
            format!("{table} with {} {}", self.column_noun(&e.column), e.value).trim().to_string()
        }
    }

    /// ", whose country code is ABW" when the entity's key joins the tables.
    fn key_clause(&self, e: &Entity) -> String {
        let Some(table) = e.column.table.as_deref() else { return String::new() };
        let Some(pk) = self.schema().table(table).and_then(|t| t.single_primary_key()) else { return String::new() };
        let key =
            ColumnRef { table: Some(table.to_string()), column: pk.name.clone(), binding: e.column.binding.clone() };
        let joined = self.labelled(AnnotationKind::TableScope).into_iter().any(|a| match &a.payload {
            Payload::Join(p) => [&p.lhs, &p.rhs].iter().any(|o| o.column().is_some_and(|c| c.same_column(&key))),
            _ => false,
        });
        if !joined || key.same_column(&e.column) {
            return String::new();
        }
        let Some(value) = self.sole_value(&key) else { return String::new() };
        let table_noun = self.table_noun(table);
        let noun = self.column_noun(&key);
        let noun = if noun.contains(&table_noun) { noun } else { format!("{table_noun} {noun}") };
        format!(", whose {noun} is {value}")
    }

    fn aggregate_fact(&self, a: &AggregateRef, value: &str) -> String {
        match a.func.as_str() {
            "count" => {
                let distinct = if a.distinct { "distinct " } else { "" };
                format!("has {value} {distinct}{}", self.counted_plural(a, true))
            }
            f => format!("has a {} {} of {value}", function_word(f), self.argument_noun(a)),
        }
    }

    fn aggregates(&self) -> Vec<(AggregateRef, Option<String>, &Annotation)> {
        self.labelled(AnnotationKind::Aggregate)
            .into_iter()
            .filter(|a| a.source.clause == ClauseKind::Select && a.source.branch.unwrap_or(0) == 0)
            .filter_map(|a| match &a.payload {
                Payload::Aggregate { aggregate, value } => {
                    Some((aggregate.clone(), value.as_ref().map(Value::to_string), a))
                }
                _ => None,
            })
            .collect()
    }

    fn set_op_fact(&self, row_filters: &[(Option<usize>, &Annotation)]) -> Option<String> {
        let op = self.labelled(AnnotationKind::SetOp).into_iter().find_map(|a| match a.payload {
            Payload::SetOp(op) => Some(op),
            _ => None,
        })?;
        let eqs: Vec<(Option<usize>, &ColumnRef, String)> =
            row_filters.iter().filter_map(|(b, a)| equality(a).map(|(c, l)| (*b, c, l.to_text()))).collect();
        let (_, column, _) = eqs.first()?;
        if !eqs.iter().all(|(_, c, _)| c.same_column(column)) {
            return None;
        }
        let present: Vec<String> = self
            .graph
            .find_column(column)
            .map(|n| self.graph.values(n).iter().map(|v| v.to_string()).collect())
            .unwrap_or_default();
        let included: Vec<String> =
            eqs.iter().filter(|(_, _, v)| present.contains(v)).map(|(_, _, v)| v.clone()).collect();
        if included.is_empty() {
            return None;
        }
        let table_noun = column.table.as_deref().map(|t| self.table_noun(t)).unwrap_or_default();
        let noun = self.column_noun(column);
        let plural = if table_noun.rsplit(' ').next() == Some(noun.as_str()) {
            self.lex().plural(&table_noun)
        } else {
            self.lex().plural(&noun)
        };
        Some(match op {
            SetOperator::Intersect => format!("where its {plural} include {}", list_phrase(&included)),
            SetOperator::Union => format!("where its {plural} include {}", included.join(" or ")),
            SetOperator::Except => {
                let excluded: Vec<String> =
                    eqs.iter().filter(|(b, _, _)| b.unwrap_or(0) > 0).map(|(_, _, v)| v.clone()).collect();
                format!("where its {plural} include {} but not {}", list_phrase(&included), excluded.join(" or "))
            }
        })
    }

    /// Facts about the entity from its projected columns.
    fn projection_facts(&self, entity: &Entity) -> Vec<String> {
        let mut facts = Vec::new();
        for (c, v) in self.projected_columns() {
            if c.same_column(&entity.column) {
                continue;
            }
            let same_table = c.table == entity.column.table;
            let noun = self.column_noun(&c);
            let fact = match &v {
                Value::Null => format!("has no {noun}"),
                _ if self.lex().is_name_column(&c) && !same_table => {
                    let t = c.table.as_deref().map(|t| self.table_noun(t)).unwrap_or_default();
                    format!("is associated with the {t} {v}")
                }
                Value::Text(_) => format!("belongs to the {noun} {v}"),
                _ => format!("has {noun} {v}"),
            };
            if !facts.contains(&fact) {
                facts.push(fact);
            }
        }
        facts
    }

    /// Name columns of other joined tables, when they hold one value.
    fn association_facts(&self, entity: &Entity) -> Vec<String> {
        let mut facts = Vec::new();
        for node in self.graph.column_nodes() {
            let Some(c) = self.graph.graph[node].column.as_ref() else { continue };
            if !self.lex().is_name_column(c) || c.table == entity.column.table {
                continue;
            }
            if let Some(v) = self.sole_value(c) {
                let t = c.table.as_deref().map(|t| self.table_noun(t)).unwrap_or_default();
                let fact = format!("is associated with the {t} {v}");
                if !facts.contains(&fact) {
                    facts.push(fact);
                }
            }
        }
        facts
    }

    fn lead(&self, total: bool) -> &'static str {
        if self.ctx.result_rows > 1 {
            EXAMPLE_LEAD
        } else if total {
            TOTAL_LEAD
        } else {
            SINGLE_LEAD
        }
    }

    fn phrases(&self) -> Vec<Phrase> {
        let (mut row_filters, group_filters) = self.filters();
        let aggregates = self.aggregates();
        let groupings = self.groupings();
        let mut out: Vec<Phrase> = Vec::new();
        let mut body: Vec<Phrase> = Vec::new();

        let total = aggregates.first().filter(|(a, _, ann)| {
            groupings.is_empty() && a.func == "count" && matches!(ann.target, Target::WholeTable { .. })
        });
        if self.ctx.result_rows == 0 {
            if let Some(t) = self.first_table() {
                let mut p = Phrase::new(
                    PhraseRole::Main,
                    format!("no {} satisfy these conditions", self.lex().plural(&self.table_noun(&t))),
                );
                p.connective = Some(TOTAL_LEAD);
                body.push(p);
            }
        } else if let Some((a, value, _)) = total {
            let counted = self.counted_plural(a, false);
            let counted_table = self.counted_table(a);
            // Equality filters on other tables become the scope of the count.
            if let (Some(join), Some(ct)) = (self.join, counted_table.as_deref()) {
                let (scoped, rest): (Vec<_>, Vec<_>) = row_filters.iter().partition(|(_, f)| {
                    equality(f).is_some_and(|(c, _)| c.table.as_deref().is_some_and(|t| !t.eq_ignore_ascii_case(ct)))
                });
                if !scoped.is_empty() {
                    let values: Vec<String> =
                        scoped.iter().filter_map(|(_, f)| equality(f)).map(|(_, l)| l.to_text()).collect();
                    let mut p = Phrase::new(
                        PhraseRole::Scope,
                        format!("for {} {}", join.rendered_phrase, values.join(" and ")),
                    );
                    p.connective = Some(self.lead(true));
                    body.push(p);
                    row_filters = rest;
                }
            }
            let text = match value {
                Some(v) => format!("there are {v} {counted} in total"),
                None => format!("the {counted} are counted"),
            };
            let mut p = Phrase::new(PhraseRole::Main, text);
            if body.is_empty() {
                p.connective = Some(self.lead(true));
            }
            body.push(p);
        } else if !aggregates.is_empty() {
            let facts: Vec<String> =
                aggregates.iter().filter_map(|(a, v, _)| v.as_ref().map(|v| self.aggregate_fact(a, v))).collect();
            match self.entity(&row_filters, false) {
                Some(e) if !facts.is_empty() => {
                    let text = if !groupings.is_empty() {
                        format!("the {} {}", self.entity_text(&e), list_phrase(&facts))
                    } else {
                        format!("{}{}, {}", self.entity_text(&e), self.key_clause(&e), list_phrase(&facts))
                    };
                    let mut p = Phrase::new(PhraseRole::Main, text);
                    p.connective = Some(self.lead(false));
                    body.push(p);
                    if groupings.is_empty() {
                        for (a, v, _) in &aggregates {
                            if let (Some(v), Some(c)) = (v, a.column()) {
                                if a.func == "count" && !self.is_key(c) {
                                    let noun = self.lex().plural(&self.column_noun(c));
                                    body.push(Phrase::new(
                                        PhraseRole::Consequence,
                                        format!("the count of {noun} is {v}"),
                                    ));
                                }
                            }
                        }
                    }
                }
                _ => {
                    let texts: Vec<String> = aggregates
                        .iter()
                        .filter_map(|(a, v, _)| {
                            let v = v.as_ref()?;
                            Some(if a.func == "count" {
                                let distinct = if a.distinct { "distinct " } else { "" };
                                format!("there are {v} {distinct}{} in total", self.counted_plural(a, true))
                            } else {
                                format!("{} is {v}", self.aggregate_subject(a))
                            })
                        })
                        .collect();
                    if !texts.is_empty() {
                        let mut p = Phrase::new(PhraseRole::Main, list_phrase(&texts));
                        p.connective = Some(self.lead(true));
                        body.push(p);
                    }
                }
            }
        } else if let Some(e) = self.entity(&row_filters, true) {
            let mut facts = self.projection_facts(&e);
            if let Some(f) = self.set_op_fact(&row_filters) {
                facts.push(f);
            }
            if facts.is_empty() {
                facts = self.association_facts(&e);
            }
            let text = if facts.is_empty() {
                self.entity_text(&e)
            } else {
                format!("{}, {}", self.entity_text(&e), list_phrase(&facts))
            };
            let mut p = Phrase::new(PhraseRole::Main, text);
            p.connective = Some(self.lead(false));
            body.push(p);
        }

        let mut filter_parts: Vec<String> = Vec::new();
        if let Some(t) = self.branch_filter_text(&row_filters) {
            filter_parts.push(t);
        }
        let group_parts: Vec<(Option<Connective>, String)> =
            group_filters.iter().filter_map(|a| self.filter_text(a).map(|t| (filter_connective(a), t))).collect();
        let group_text = join_with_connectives(&group_parts);
        if !group_text.is_empty() {
            filter_parts.push(group_text);
        }
        if !filter_parts.is_empty() {
            out.push(Phrase::new(PhraseRole::Filter, format!("filtered by {}", filter_parts.join(" and "))));
        }
        for o in self.ordering_text() {
            out.push(Phrase::new(PhraseRole::Filter, o));
        }
        out.extend(body);
        out
    }
}

fn function_word(f: &str) -> &str {
    match f {
        "count" => "number",
        "sum" => "total",
        "avg" => "average",
        "min" => "minimum",
        "max" => "maximum",
        other => other,
    }
}

/// `column = literal` filters, as (column, literal).
fn equality(a: &Annotation) -> Option<(&ColumnRef, &Literal)> {
    match &a.payload {
        Payload::Filter(p) if p.op == PredicateOp::Eq && !p.negated => match (&p.lhs, &p.rhs) {
            (Operand::Column(c), Operand::Literal(l)) => Some((c, l)),
            _ => None,
        },
        _ => None,
    }
}

fn filter_connective(a: &Annotation) -> Option<Connective> {
    match &a.payload {
        Payload::Filter(p) => p.connective,
        Payload::Subquery { predicate: Some(p), .. } => p.connective,
        _ => None,
    }
}

fn join_with_connectives(parts: &[(Option<Connective>, String)]) -> String {
    let mut out = String::new();
    for (i, (conn, text)) in parts.iter().enumerate() {
        if i > 0 {
            out.push_str(if *conn == Some(Connective::Or) { " or " } else { " and " });
        }
        out.push_str(text);
    }
    out
}

/// Joins the summary clause and phrases into sentences.
pub fn compose_text(summary: &str, phrases: &[Phrase]) -> String {
    let mut text = summary.to_string();
    let filters: Vec<&str> = phrases.iter().filter(|p| p.role == PhraseRole::Filter).map(|p| p.text.as_str()).collect();
    for f in &filters {
        text.push_str(", ");
        text.push_str(f);
    }
    text.push('.');
    let mut sentence = String::new();
    let flush = |sentence: &mut String, text: &mut String| {
        if !sentence.is_empty() {
            text.push(' ');
            text.push_str(&capitalize_first(sentence));
            text.push('.');
            sentence.clear();
        }
    };
    for p in phrases.iter().filter(|p| p.role != PhraseRole::Filter) {
        match p.role {
            PhraseRole::Scope => {
                flush(&mut sentence, &mut text);
                if let Some(c) = p.connective {
                    sentence.push_str(c);
                    sentence.push(' ');
                }
                sentence.push_str(&p.text);
            }
            PhraseRole::Main => {
                if sentence.is_empty() {
                    if let Some(c) = p.connective {
                        sentence.push_str(c);
                        sentence.push(' ');
                    }
                } else {
                    sentence.push_str(", ");
                }
                sentence.push_str(&p.text);
                flush(&mut sentence, &mut text);
            }
            PhraseRole::Consequence => {
                flush(&mut sentence, &mut text);
                sentence.push_str("So ");
                sentence.push_str(&p.text);
                flush(&mut sentence, &mut text);
            }
            PhraseRole::Filter => {}
        }
    }
    flush(&mut sentence, &mut text);
    text
}

fn capitalize_first(s: &str) -> String {
    let mut c = s.chars();
    c.next().map_or_else(String::new, |f| f.to_uppercase().chain(c).collect())
}
