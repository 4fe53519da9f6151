//! Binds column references to schema columns, canonicalising aliases.

use super::ast::*;
use crate::schema::DatabaseSchema;

pub(crate) const ROWID_NAMES: [&str; 3] = ["rowid", "oid", "_rowid_"];

struct Binding {
    name: String,
    /// Canonical table name for base tables.
    table: Option<String>,
    /// Output column names of a derived table.
    derived_columns: Vec<String>,
}

struct Scope<'p> {
    bindings: Vec<Binding>,
    parent: Option<&'p Scope<'p>>,
}

enum Lookup {
    Found(ResolvedColumn),
    Ambiguous,
    Missing,
}

impl Scope<'_> {
    fn lookup(&self, schema: &DatabaseSchema, qualifier: Option<&str>, name: &str) -> Lookup {
        let mut hits = Vec::new();
        for b in &self.bindings {
            if let Some(q) = qualifier {
                if !b.name.eq_ignore_ascii_case(q) {
                    continue;
                }
            }
            if let Some(table) = &b.table {
                if ROWID_NAMES.iter().any(|r| r.eq_ignore_ascii_case(name)) && qualifier.is_some() {
                    hits.push(ResolvedColumn { table: table.clone(), column: "rowid".into(), binding: b.name.clone() });
                } else if let Some(col) = schema.column(table, name) {
                    hits.push(ResolvedColumn {
                        table: table.clone(),
                        column: col.name.clone(),
                        binding: b.name.clone(),
                    });
                }
            } else if let Some(col) = b.derived_columns.iter().find(|c| c.eq_ignore_ascii_case(name)) {
                hits.push(ResolvedColumn { table: b.name.clone(), column: col.clone(), binding: b.name.clone() });
            }
        }
        match hits.len() {
            1 => Lookup::Found(hits.pop().expect("one hit")),
            0 => match self.parent {
                Some(p) => p.lookup(schema, qualifier, name),
                None => Lookup::Missing,
            },
            _ => Lookup::Ambiguous,
        }
    }
}

/// Resolves every column of `query` in place; returns the references that
/// could not be resolved.
pub fn resolve_query(query: &mut Query, schema: &DatabaseSchema) -> Vec<String> {
    let mut unresolved = Vec::new();
    resolve_in(query, schema, None, &mut unresolved);
    unresolved
}

fn resolve_in(query: &mut Query, schema: &DatabaseSchema, parent: Option<&Scope<'_>>, unresolved: &mut Vec<String>) {
    let mut first_scope_bindings = None;
    let mut aliases = Vec::new();
    for select in query.body.branches_mut() {
        let bindings = resolve_select(select, schema, parent, unresolved);
        aliases.extend(select.projection.iter().filter_map(|i| i.alias.clone()));
        if first_scope_bindings.is_none() {
            first_scope_bindings = Some(bindings);
        }
    }
    let compound = matches!(query.body, SetExpr::SetOperation { .. });
    // ORDER BY of a plain SELECT sees its FROM tables; of a compound, only
    // output columns.
    let scope =
        Scope { bindings: if compound { Vec::new() } else { first_scope_bindings.unwrap_or_default() }, parent };
    for item in &mut query.order_by {
        resolve_expr(&mut item.expr, schema, &scope, &aliases, unresolved);
    }
}

fn resolve_select(
    select: &mut Select,
    schema: &DatabaseSchema,
    parent: Option<&Scope<'_>>,
    unresolved: &mut Vec<String>,
) -> Vec<Binding> {
    let mut bindings = Vec::new();
    if let Some(from) = &mut select.from {
        let factors = std::iter::once(&mut from.first).chain(from.joins.iter_mut().map(|j| &mut j.factor));
        for factor in factors {
            match factor {
                TableFactor::Table { name, alias } => {
                    let table = schema.table(name).map(|t| t.name.clone());
                    if table.is_none() {
                        unresolved.push(name.clone());
                    }
                    bindings.push(Binding {
                        name: alias.clone().unwrap_or_else(|| name.clone()),
                        table,
                        derived_columns: Vec::new(),
                    });
                }
                TableFactor::Derived { subquery, alias } => {
                    resolve_in(subquery, schema, parent, unresolved);
                    let derived_columns = subquery
                        .body
                        .first_select()
                        .projection
                        .iter()
                        .filter_map(|item| {
                            item.alias.clone().or_else(|| match &item.expr {
                                Expr::Column(c) => Some(c.name.clone()),
                                other => Some(other.to_string()),
                            })
                        })
                        .collect();
                    bindings.push(Binding { name: alias.clone().unwrap_or_default(), table: None, derived_columns });
                }
            }
        }
    }
    let scope = Scope { bindings, parent };
    let aliases: Vec<String> = select.projection.iter().filter_map(|i| i.alias.clone()).collect();
    for item in &mut select.projection {
        resolve_expr(&mut item.expr, schema, &scope, &[], unresolved);
    }
    if let Some(from) = &mut select.from {
        for join in &mut from.joins {
            if let Some(on) = &mut join.constraint {
                resolve_expr(on, schema, &scope, &[], unresolved);
            }
        }
    }
    if let Some(sel) = &mut select.selection {
        resolve_expr(sel, schema, &scope, &aliases, unresolved);
    }
    for g in &mut select.group_by {
        resolve_expr(g, schema, &scope, &aliases, unresolved);
    }
    if let Some(h) = &mut select.having {
        resolve_expr(h, schema, &scope, &aliases, unresolved);
    }
    scope.bindings
}

fn resolve_expr(
    expr: &mut Expr,
    schema: &DatabaseSchema,
    scope: &Scope<'_>,
    output_aliases: &[String],
    unresolved: &mut Vec<String>,
) {
    let recurse =
        |e: &mut Expr, unresolved: &mut Vec<String>| resolve_expr(e, schema, scope, output_aliases, unresolved);
    match expr {
        Expr::Column(c) => match scope.lookup(schema, c.qualifier.as_deref(), &c.name) {
            Lookup::Found(r) => c.resolved = Some(r),
            Lookup::Ambiguous | Lookup::Missing => {
                if c.quoted && c.qualifier.is_none() {
                    let text = c.name.clone();
                    *expr = Expr::Literal(Literal::String(text));
                } else if c.qualifier.is_none() && output_aliases.iter().any(|a| a.eq_ignore_ascii_case(&c.name)) {
                    // reference to an output alias
                } else {
                    unresolved.push(c.to_string());
                }
            }
        },
        Expr::InSubquery { expr: inner, subquery, .. } => {
            recurse(inner, unresolved);
            resolve_in(subquery, schema, Some(scope), unresolved);
        }
        Expr::Exists { subquery, .. } | Expr::Subquery(subquery) => {
            resolve_in(subquery, schema, Some(scope), unresolved)
        }
        Expr::Function(f) => f.args.iter_mut().for_each(|a| recurse(a, unresolved)),
        Expr::Binary { left, right, .. } => {
            recurse(left, unresolved);
            recurse(right, unresolved);
        }
        Expr::Unary { expr: inner, .. } | Expr::IsNull { expr: inner, .. } | Expr::Nested(inner) => {
            recurse(inner, unresolved)
        }
        Expr::InList { expr: inner, list, .. } => {
            recurse(inner, unresolved);
            list.iter_mut().for_each(|e| recurse(e, unresolved));
        }
        Expr::Between { expr: inner, low, high, .. } => {
            recurse(inner, unresolved);
            recurse(low, unresolved);
            recurse(high, unresolved);
        }
        Expr::Literal(_) | Expr::Wildcard | Expr::QualifiedWildcard(_) => {}
    }
}
