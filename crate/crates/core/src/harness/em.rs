//! EM-lite: clause-level comparison that ignores literal values, keyword
//! case, alias names and the order of commutative conditions.

use crate::sql::ast::{
    BinaryOperator, Expr, FromClause, JoinOperator, Query, Select, SetExpr, TableFactor, UnaryOperator,
};
use crate::sql::SqlQuery;

/// True when both queries have the same clause components after
/// normalization.
pub fn exact_match(pred: &SqlQuery, gold: &SqlQuery) -> bool {
    canonical_form(pred) == canonical_form(gold)
}

/// Normalized rendering compared by [`exact_match`].
pub fn canonical_form(query: &SqlQuery) -> String {
    Canon::default().query(&query.statement)
}

/// Stack of FROM scopes mapping bindings to `table#occurrence`.
#[derive(Default)]
struct Canon {
    scopes: Vec<Vec<(String, String)>>,
}

fn sorted_join(mut parts: Vec<String>, sep: &str) -> String {
    parts.sort();
    parts.join(sep)
}

impl Canon {
    fn query(&mut self, q: &Query) -> String {
        let mut out = self.set_expr(&q.body);
        if !q.order_by.is_empty() {
            // ORDER BY refers to the first branch's scope.
            let scope = self.first_scope(&q.body);
            self.scopes.push(scope);
            let items: Vec<String> = q
                .order_by
                .iter()
                .map(|o| format!("{}{}", self.expr(&o.expr), if o.descending == Some(true) { " desc" } else { " asc" }))
                .collect();
            self.scopes.pop();
            out += &format!(" order({})", items.join(","));
        }
        if q.limit.is_some() {
            out += " limit";
        }
        out
    }

    fn first_scope(&self, body: &SetExpr) -> Vec<(String, String)> {
        from_scope(body.first_select().from.as_ref())
    }

    fn set_expr(&mut self, body: &SetExpr) -> String {
        match body {
            SetExpr::Select(s) => self.select(s),
            SetExpr::SetOperation { op, all, left, right } => {
                format!("({}) {op:?}{} ({})", self.set_expr(left), if *all { " all" } else { "" }, self.set_expr(right))
                    .to_lowercase()
            }
        }
    }

    fn select(&mut self, s: &Select) -> String {
        self.scopes.push(from_scope(s.from.as_ref()));
        let projection: Vec<String> = s.projection.iter().map(|i| self.expr(&i.expr)).collect();
        let mut out = format!("select{}({})", if s.distinct { " distinct" } else { "" }, sorted_join(projection, ","));
        if let Some(from) = &s.from {
            out += &format!(" from({})", self.from(from));
        }
        if let Some(w) = &s.selection {
            out += &format!(" where({})", self.expr(w));
        }
        if !s.group_by.is_empty() {
            let keys: Vec<String> = s.group_by.iter().map(|e| self.expr(e)).collect();
            out += &format!(" group({})", sorted_join(keys, ","));
        }
        if let Some(h) = &s.having {
            out += &format!(" having({})", self.expr(h));
        }
        self.scopes.pop();
        out
    }

    fn from(&mut self, from: &FromClause) -> String {
        let mut tables = vec![self.factor(&from.first)];
        let mut conditions = Vec::new();
        for join in &from.joins {
            let kind = match join.operator {
                JoinOperator::Left => "left ",
                _ => "",
            };
            tables.push(format!("{kind}{}", self.factor(&join.factor)));
            if let Some(c) = &join.constraint {
                conditions.extend(self.conjuncts(c));
            }
        }
        let mut out = sorted_join(tables, ",");
        if !conditions.is_empty() {
            out += &format!(" on({})", sorted_join(conditions, " and "));
        }
        out
    }

    fn factor(&mut self, f: &TableFactor) -> String {
        match f {
            TableFactor::Table { name, .. } => name.to_lowercase(),
            TableFactor::Derived { subquery, .. } => format!("({})", self.query(subquery)),
        }
    }

    fn conjuncts(&mut self, e: &Expr) -> Vec<String> {
        match e {
            Expr::Binary { left, op: BinaryOperator::And, right } => {
                let mut v = self.conjuncts(left);
                v.extend(self.conjuncts(right));
                v
            }
            Expr::Nested(inner) => self.conjuncts(inner),
            other => vec![self.expr(other)],
        }
    }

    fn disjuncts(&mut self, e: &Expr) -> Vec<String> {
        match e {
            Expr::Binary { left, op: BinaryOperator::Or, right } => {
                let mut v = self.disjuncts(left);
                v.extend(self.disjuncts(right));
                v
            }
            Expr::Nested(inner) => self.disjuncts(inner),
            other => vec![self.expr(other)],
        }
    }

    fn binding(&self, binding: &str, table: &str) -> String {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter())
            .find(|(b, _)| b.eq_ignore_ascii_case(binding))
            .map_or_else(|| table.to_lowercase(), |(_, canon)| canon.clone())
    }

    fn expr(&mut self, e: &Expr) -> String {
        match e {
            Expr::Column(c) => match &c.resolved {
                Some(r) => format!("{}.{}", self.binding(&r.binding, &r.table), r.column.to_lowercase()),
                None if c.quoted => "?".to_string(),
                None => c.name.to_lowercase(),
            },
            Expr::Literal(_) => "?".to_string(),
            Expr::Wildcard => "*".to_string(),
            Expr::QualifiedWildcard(q) => format!("{}.*", self.binding(q, q)),
            Expr::Function(f) => {
                let args: Vec<String> = f.args.iter().map(|a| self.expr(a)).collect();
                format!("{}({}{})", f.name, if f.distinct { "distinct " } else { "" }, args.join(","))
            }
            Expr::Binary { op: BinaryOperator::And, .. } => format!("and[{}]", sorted_join(self.conjuncts(e), ";")),
            Expr::Binary { op: BinaryOperator::Or, .. } => format!("or[{}]", sorted_join(self.disjuncts(e), ";")),
            Expr::Binary { left, op, right } => {
                let (l, r) = (self.expr(left), self.expr(right));
                let (l, r, sym) = match op {
                    BinaryOperator::Eq | BinaryOperator::NotEq if r < l => (r, l, op.symbol()),
                    BinaryOperator::Gt if r != "?" && r < l => (r, l, "<"),
                    BinaryOperator::Lt if r != "?" && r < l => (r, l, ">"),
                    BinaryOperator::GtEq if r != "?" && r < l => (r, l, "<="),
                    BinaryOperator::LtEq if r != "?" && r < l => (r, l, ">="),
                    _ => (l, r, op.symbol()),
                };
                format!("{l} {} {r}", sym.to_lowercase())
            }
            Expr::Unary { op, expr } => {
                let inner = self.expr(expr);
                match op {
                    UnaryOperator::Not => format!("not({inner})"),
                    UnaryOperator::Minus => match **expr {
                        Expr::Literal(_) => "?".to_string(),
                        _ => format!("-({inner})"),
                    },
                }
            }
            Expr::InList { expr, list, negated } => {
                let items: Vec<String> = list.iter().map(|i| self.expr(i)).collect();
                format!("{}{}in[{}]", self.expr(expr), neg(*negated), sorted_join(items, ","))
            }
            Expr::InSubquery { expr, subquery, negated } => {
                format!("{}{}in({})", self.expr(expr), neg(*negated), self.query(subquery))
            }
            Expr::Between { expr, low, high, negated } => {
                format!("{}{}between({},{})", self.expr(expr), neg(*negated), self.expr(low), self.expr(high))
            }
            Expr::IsNull { expr, negated } => format!("{} is{} null", self.expr(expr), neg(*negated).trim_end()),
            Expr::Exists { subquery, negated } => format!("{}exists({})", neg(*negated), self.query(subquery)),
            Expr::Subquery(q) => format!("({})", self.query(q)),
            Expr::Nested(inner) => self.expr(inner),
        }
    }
}

fn neg(negated: bool) -> &'static str {
    if negated {
        " not "
    } else {
        " "
    }
}

/// Bindings of one FROM clause, numbered per table in order of appearance.
fn from_scope(from: Option<&FromClause>) -> Vec<(String, String)> {
    let Some(from) = from else { return Vec::new() };
    let mut seen: Vec<String> = Vec::new();
    let mut scope = Vec::new();
    for (i, factor) in from.factors().enumerate() {
        let base = match factor {
            TableFactor::Table { name, .. } => name.to_lowercase(),
            TableFactor::Derived { .. } => format!("derived{i}"),
        };
        let n = seen.iter().filter(|t| **t == base).count();
        seen.push(base.clone());
        let canon = if n == 0 { base } else { format!("{base}#{n}") };
        if let Some(b) = factor.binding() {
            scope.push((b.to_string(), canon));
        }
    }
    scope
}
