//! Structured form of the supported SELECT dialect, with SQL rendering via
//! `Display`. Rendering followed by parsing yields an identical tree.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Byte range in the source text. Compares equal to every other span so
/// that source positions never affect structural equality of trees.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// Where each trailing clause of a query starts in the source text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryLayout {
    pub span: Span,
    pub order_by: Option<Span>,
    pub limit: Option<Span>,
}

/// Where each clause of a SELECT block starts in the source text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectLayout {
    pub span: Span,
    pub from: Option<Span>,
    pub joins: Vec<Span>,
    pub selection: Option<Span>,
    pub group_by: Option<Span>,
    pub having: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub body: SetExpr,
    pub order_by: Vec<OrderByItem>,
    pub limit: Option<Limit>,
    #[serde(skip)]
    pub layout: QueryLayout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SetExpr {
    Select(Box<Select>),
    SetOperation { op: SetOperator, all: bool, left: Box<SetExpr>, right: Box<SetExpr> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetOperator {
    Union,
    Intersect,
    Except,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Select {
    pub distinct: bool,
    pub projection: Vec<SelectItem>,
    pub from: Option<FromClause>,
    pub selection: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
    #[serde(skip)]
    pub layout: SelectLayout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectItem {
    pub expr: Expr,
    pub alias: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FromClause {
    pub first: TableFactor,
    pub joins: Vec<Join>,
}

impl FromClause {
    pub fn factors(&self) -> impl Iterator<Item = &TableFactor> {
        std::iter::once(&self.first).chain(self.joins.iter().map(|j| &j.factor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TableFactor {
    Table { name: String, alias: Option<String> },
    Derived { subquery: Box<Query>, alias: Option<String> },
}

impl TableFactor {
    /// The name the rest of the query uses to address this factor.
    pub fn binding(&self) -> Option<&str> {
        match self {
            TableFactor::Table { name, alias } => Some(alias.as_deref().unwrap_or(name)),
            TableFactor::Derived { alias, .. } => alias.as_deref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JoinOperator {
    Inner,
    Left,
    Cross,
    /// `FROM a, b`
    Comma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Join {
    pub operator: JoinOperator,
    pub factor: TableFactor,
    pub constraint: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderByItem {
    pub expr: Expr,
    pub descending: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Limit {
    pub count: i64,
    pub offset: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResolvedColumn {
    /// Canonical table name from the schema.
    pub table: String,
    /// Canonical column name from the schema.
    pub column: String,
    /// Alias or table name the query uses for this table instance.
    pub binding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnExpr {
    pub qualifier: Option<String>,
    pub name: String,
    /// Written in double quotes; falls back to a string literal when it
    /// does not resolve (SQLite semantics).
    #[serde(default)]
    pub quoted: bool,
    pub resolved: Option<ResolvedColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Null,
    Integer(i64),
    Float(f64),
    String(String),
}

impl Literal {
    /// SQLite literal syntax.
    pub fn to_sql(&self) -> String {
        match self {
            Literal::Null => "NULL".into(),
            Literal::Integer(v) => v.to_string(),
            Literal::Float(v) => format_float(*v),
            Literal::String(s) => format!("'{}'", s.replace('\'', "''")),
        }
    }

    /// Plain text as it would read in prose.
    pub fn to_text(&self) -> String {
        match self {
            Literal::String(s) => s.clone(),
            other => other.to_sql(),
        }
    }
}

pub(crate) fn format_float(v: f64) -> String {
    if v.is_finite() && v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOperator {
    Or,
    And,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Like,
    NotLike,
    Plus,
    Minus,
    Multiply,
    Divide,
    Modulo,
    Concat,
}

impl BinaryOperator {
    pub fn precedence(self) -> u8 {
        use BinaryOperator::*;
        match self {
            Or => 1,
            And => 2,
            Eq | NotEq | Like | NotLike => 4,
            Lt | LtEq | Gt | GtEq => 5,
            Plus | Minus => 6,
            Multiply | Divide | Modulo => 7,
            Concat => 8,
        }
    }

    pub fn is_comparison(self) -> bool {
        use BinaryOperator::*;
        matches!(self, Eq | NotEq | Lt | LtEq | Gt | GtEq | Like | NotLike)
    }

    pub fn symbol(self) -> &'static str {
        use BinaryOperator::*;
        match self {
            Or => "OR",
            And => "AND",
            Eq => "=",
            NotEq => "!=",
            Lt => "<",
            LtEq => "<=",
            Gt => ">",
            GtEq => ">=",
            Like => "LIKE",
            NotLike => "NOT LIKE",
            Plus => "+",
            Minus => "-",
            Multiply => "*",
            Divide => "/",
            Modulo => "%",
            Concat => "||",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnaryOperator {
    Not,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionCall {
    /// Lowercased.
    pub name: String,
    pub distinct: bool,
    pub args: Vec<Expr>,
}

pub const AGGREGATES: [&str; 5] = ["count", "sum", "avg", "min", "max"];

impl FunctionCall {
    pub fn is_aggregate(&self) -> bool {
        // min/max with two or more arguments are scalar in SQLite.
        AGGREGATES.contains(&self.name.as_str())
            && (self.args.len() <= 1 || !matches!(self.name.as_str(), "min" | "max"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Column(ColumnExpr),
    Literal(Literal),
    Wildcard,
    QualifiedWildcard(String),
    Function(FunctionCall),
    Binary { left: Box<Expr>, op: BinaryOperator, right: Box<Expr> },
    Unary { op: UnaryOperator, expr: Box<Expr> },
    InList { expr: Box<Expr>, list: Vec<Expr>, negated: bool },
    InSubquery { expr: Box<Expr>, subquery: Box<Query>, negated: bool },
    Between { expr: Box<Expr>, low: Box<Expr>, high: Box<Expr>, negated: bool },
    IsNull { expr: Box<Expr>, negated: bool },
    Exists { subquery: Box<Query>, negated: bool },
    Subquery(Box<Query>),
    Nested(Box<Expr>),
}

impl Expr {
    pub fn column(qualifier: Option<&str>, name: &str) -> Expr {
        Expr::Column(ColumnExpr {
            qualifier: qualifier.map(str::to_string),
            name: name.to_string(),
            quoted: false,
            resolved: None,
        })
    }

    pub fn binary(left: Expr, op: BinaryOperator, right: Expr) -> Expr {
        Expr::Binary { left: Box::new(left), op, right: Box::new(right) }
    }

    /// Conjoins `other` onto `self`, parenthesising OR-trees so the new
    /// conjunct binds to the whole existing condition.
    pub fn and(self, other: Expr) -> Expr {
        let wrap = |e: Expr| match e {
            Expr::Binary { op: BinaryOperator::Or, .. } => Expr::Nested(Box::new(e)),
            e => e,
        };
        Expr::binary(wrap(self), BinaryOperator::And, wrap(other))
    }

    /// Whether an aggregate call occurs in this expression, not counting
    /// nested subqueries.
    pub fn contains_aggregate(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if let Expr::Function(f) = e {
                if f.is_aggregate() {
                    found = true;
                }
            }
        });
        found
    }

    /// Pre-order traversal that does not descend into subqueries.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Expr)) {
        visit(self);
        match self {
            Expr::Function(f) => f.args.iter().for_each(|a| a.walk(visit)),
            Expr::Binary { left, right, .. } => {
                left.walk(visit);
                right.walk(visit);
            }
            Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } | Expr::Nested(expr) => expr.walk(visit),
            Expr::InList { expr, list, .. } => {
                expr.walk(visit);
                list.iter().for_each(|e| e.walk(visit));
            }
            Expr::InSubquery { expr, .. } => expr.walk(visit),
            Expr::Between { expr, low, high, .. } => {
                expr.walk(visit);
                low.walk(visit);
                high.walk(visit);
            }
            Expr::Column(_)
            | Expr::Literal(_)
            | Expr::Wildcard
            | Expr::QualifiedWildcard(_)
            | Expr::Exists { .. }
            | Expr::Subquery(_) => {}
        }
    }

    pub fn walk_mut(&mut self, visit: &mut impl FnMut(&mut Expr)) {
        visit(self);
        match self {
            Expr::Function(f) => f.args.iter_mut().for_each(|a| a.walk_mut(visit)),
            Expr::Binary { left, right, .. } => {
                left.walk_mut(visit);
                right.walk_mut(visit);
            }
            Expr::Unary { expr, .. } | Expr::IsNull { expr, .. } | Expr::Nested(expr) => expr.walk_mut(visit),
            Expr::InList { expr, list, .. } => {
                expr.walk_mut(visit);
                list.iter_mut().for_each(|e| e.walk_mut(visit));
            }
            Expr::InSubquery { expr, .. } => expr.walk_mut(visit),
            Expr::Between { expr, low, high, .. } => {
                expr.walk_mut(visit);
                low.walk_mut(visit);
                high.walk_mut(visit);
            }
            Expr::Column(_)
            | Expr::Literal(_)
            | Expr::Wildcard
            | Expr::QualifiedWildcard(_)
            | Expr::Exists { .. }
            | Expr::Subquery(_) => {}
        }
    }

    /// Columns referenced directly by this expression (not inside subqueries).
    pub fn columns(&self) -> Vec<&ColumnExpr> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Column(c) = e {
                out.push(c);
            }
        });
        out
    }

    /// Splits a conjunction into its conjuncts.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        match self {
            Expr::Binary { left, op: BinaryOperator::And, right } => {
                let mut v = left.conjuncts();
                v.extend(right.conjuncts());
                v
            }
            other => vec![other],
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Unary { op: UnaryOperator::Not, .. } => 3,
            Expr::InList { .. } | Expr::InSubquery { .. } | Expr::Between { .. } | Expr::IsNull { .. } => 4,
            _ => 10,
        }
    }
}

impl Query {
    pub fn select(select: Select) -> Query {
        Query {
            body: SetExpr::Select(Box::new(select)),
            order_by: Vec::new(),
            limit: None,
            layout: QueryLayout::default(),
        }
    }

    /// The SELECT blocks of the body in left-to-right order.
    pub fn branches(&self) -> Vec<&Select> {
        self.body.branches()
    }
}

impl SetExpr {
    pub fn branches(&self) -> Vec<&Select> {
        match self {
            SetExpr::Select(s) => vec![s],
            SetExpr::SetOperation { left, right, .. } => {
                let mut v = left.branches();
                v.extend(right.branches());
                v
            }
        }
    }

    pub fn branches_mut(&mut self) -> Vec<&mut Select> {
        match self {
            SetExpr::Select(s) => vec![s],
            SetExpr::SetOperation { left, right, .. } => {
                let mut v = left.branches_mut();
                v.extend(right.branches_mut());
                v
            }
        }
    }

    pub fn first_select(&self) -> &Select {
        match self {
            SetExpr::Select(s) => s,
            SetExpr::SetOperation { left, .. } => left.first_select(),
        }
    }
}

impl Select {
    pub fn is_aggregating(&self) -> bool {
        !self.group_by.is_empty()
            || self.having.is_some()
            || self.projection.iter().any(|i| i.expr.contains_aggregate())
    }
}

// ---------------------------------------------------------------- rendering

const RESERVED: [&str; 40] = [
    "select",
    "from",
    "where",
    "group",
    "by",
    "having",
    "order",
    "limit",
    "offset",
    "union",
    "intersect",
    "except",
    "all",
    "distinct",
    "as",
    "join",
    "inner",
    "left",
    "outer",
    "cross",
    "on",
    "and",
    "or",
    "not",
    "in",
    "like",
    "between",
    "is",
    "null",
    "exists",
    "asc",
    "desc",
    "case",
    "when",
    "then",
    "else",
    "end",
    "with",
    "natural",
    "using",
];

pub(crate) fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(word))
}

pub(crate) struct Ident<'a>(pub &'a str);

impl fmt::Display for Ident<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.0;
        let bare = !s.is_empty()
            && !s.starts_with(|c: char| c.is_ascii_digit())
            && s.chars().all(|c| c == '_' || c.is_alphanumeric())
            && !is_reserved(s);
        if bare {
            f.write_str(s)
        } else {
            write!(f, "`{}`", s.replace('`', "``"))
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.body)?;
        if !self.order_by.is_empty() {
            f.write_str(" ORDER BY ")?;
            for (i, item) in self.order_by.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", item.expr)?;
                match item.descending {
                    Some(true) => f.write_str(" DESC")?,
                    Some(false) => f.write_str(" ASC")?,
                    None => {}
                }
            }
        }
        if let Some(limit) = &self.limit {
            write!(f, " LIMIT {}", limit.count)?;
            if let Some(offset) = limit.offset {
                write!(f, " OFFSET {offset}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for SetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetExpr::Select(s) => write!(f, "{s}"),
            SetExpr::SetOperation { op, all, left, right } => {
                write!(f, "{left} {op}")?;
                if *all {
                    f.write_str(" ALL")?;
                }
                write!(f, " {right}")
            }
        }
    }
}

impl fmt::Display for SetOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SetOperator::Union => "UNION",
            SetOperator::Intersect => "INTERSECT",
            SetOperator::Except => "EXCEPT",
        })
    }
}

impl fmt::Display for Select {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        if self.distinct {
            f.write_str("DISTINCT ")?;
        }
        for (i, item) in self.projection.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", item.expr)?;
            if let Some(alias) = &item.alias {
                write!(f, " AS {}", Ident(alias))?;
            }
        }
        if let Some(from) = &self.from {
            write!(f, " FROM {}", from.first)?;
            for join in &from.joins {
                match join.operator {
                    JoinOperator::Comma => write!(f, ", {}", join.factor)?,
                    JoinOperator::Inner => write!(f, " JOIN {}", join.factor)?,
                    JoinOperator::Left => write!(f, " LEFT JOIN {}", join.factor)?,
                    JoinOperator::Cross => write!(f, " CROSS JOIN {}", join.factor)?,
                }
                if let Some(on) = &join.constraint {
                    write!(f, " ON {on}")?;
                }
            }
        }
        if let Some(selection) = &self.selection {
            write!(f, " WHERE {selection}")?;
        }
        if !self.group_by.is_empty() {
            f.write_str(" GROUP BY ")?;
            for (i, e) in self.group_by.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{e}")?;
            }
        }
        if let Some(having) = &self.having {
            write!(f, " HAVING {having}")?;
        }
        Ok(())
    }
}

impl fmt::Display for TableFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableFactor::Table { name, alias } => {
                write!(f, "{}", Ident(name))?;
                if let Some(alias) = alias {
                    write!(f, " AS {}", Ident(alias))?;
                }
                Ok(())
            }
            TableFactor::Derived { subquery, alias } => {
                write!(f, "({subquery})")?;
                if let Some(alias) = alias {
                    write!(f, " AS {}", Ident(alias))?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for ColumnExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(q) = &self.qualifier {
            write!(f, "{}.", Ident(q))?;
        }
        if self.quoted {
            write!(f, "\"{}\"", self.name.replace('"', "\"\""))
        } else {
            write!(f, "{}", Ident(&self.name))
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sql())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Operands binding looser than their parent get parentheses. Parsed
        // trees never need this (explicit parentheses are `Nested`).
        let child = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Column(c) => write!(f, "{c}"),
            Expr::Literal(l) => write!(f, "{l}"),
            Expr::Wildcard => f.write_str("*"),
            Expr::QualifiedWildcard(q) => write!(f, "{}.*", Ident(q)),
            Expr::Function(call) => {
                write!(f, "{}(", call.name)?;
                if call.distinct {
                    f.write_str("DISTINCT ")?;
                }
                for (i, a) in call.args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Binary { left, op, right } => {
                let p = op.precedence();
                child(f, left, p)?;
                write!(f, " {} ", op.symbol())?;
                child(f, right, p + 1)
            }
            Expr::Unary { op: UnaryOperator::Not, expr } => {
                f.write_str("NOT ")?;
                child(f, expr, 3)
            }
            Expr::Unary { op: UnaryOperator::Minus, expr } => {
                f.write_str("-")?;
                child(f, expr, 10)
            }
            Expr::InList { expr, list, negated } => {
                child(f, expr, 5)?;
                f.write_str(if *negated { " NOT IN (" } else { " IN (" })?;
                for (i, e) in list.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_str(")")
            }
            Expr::InSubquery { expr, subquery, negated } => {
                child(f, expr, 5)?;
                write!(f, "{} ({subquery})", if *negated { " NOT IN" } else { " IN" })
            }
            Expr::Between { expr, low, high, negated } => {
                child(f, expr, 5)?;
                f.write_str(if *negated { " NOT BETWEEN " } else { " BETWEEN " })?;
                child(f, low, 5)?;
                f.write_str(" AND ")?;
                child(f, high, 5)
            }
            Expr::IsNull { expr, negated } => {
                child(f, expr, 5)?;
                f.write_str(if *negated { " IS NOT NULL" } else { " IS NULL" })
            }
            Expr::Exists { subquery, negated } => {
                write!(f, "{}EXISTS ({subquery})", if *negated { "NOT " } else { "" })
            }
            Expr::Subquery(q) => write!(f, "({q})"),
            Expr::Nested(e) => write!(f, "({e})"),
        }
    }
}
