mod common;

use std::collections::BTreeSet;

use common::*;
use cyclesql::db::{ResultSet, Value};
use cyclesql::rewrite::{rewrite, value_matches, RewrittenQuery};
use cyclesql::sql::{self, ColumnRef, Expr, SqlQuery};
use proptest::prelude::*;

fn world() -> &'static Fixture {
    use std::sync::OnceLock;
    static FX: OnceLock<Fixture> = OnceLock::new();
    FX.get_or_init(world_fixture)
}

fn run(fx: &Fixture, db: &str, q: &str) -> (SqlQuery, ResultSet) {
    let parsed = sql::parse(q, fx.schema(db)).unwrap();
    let result = fx.gateway.session(db).unwrap().execute(&parsed).unwrap();
    (parsed, result)
}

fn rewrite_row(fx: &Fixture, db: &str, q: &str, pick: impl Fn(&Vec<Value>) -> bool) -> RewrittenQuery {
    let (parsed, result) = run(fx, db, q);
    let row = result.rows.iter().find(|r| pick(r)).expect("row");
    rewrite(&parsed, Some(row), &result, fx.schema(db)).unwrap().expect("rewritten")
}

fn has_aggregation(q: &SqlQuery) -> bool {
    q.statement.branches().iter().any(|s| {
        !s.group_by.is_empty()
            || s.having.is_some()
            || s.projection.iter().any(|p| p.expr.contains_aggregate())
            || s.selection.as_ref().is_some_and(Expr::contains_aggregate)
    })
}

fn projected(rw: &RewrittenQuery) -> Vec<ColumnRef> {
    rw.branches.iter().flat_map(|b| b.columns.clone()).collect()
}

fn projects(rw: &RewrittenQuery, table: &str, column: &str) -> bool {
    projected(rw).iter().any(|c| c.same_column(&ColumnRef::new(table, column)))
}

#[test]
fn aggregate_only_result_is_not_pinned() {
    let fx = flight_fixture();
    let rw = rewrite_row(&fx, "flight_1", FIG2_WRONG_SQL, |_| true);
    assert!(rw.added_result_conditions.is_empty());
    assert_eq!(rw.skipped_result_columns, vec![0]);
    assert_eq!(rw.removed_aggregates.len(), 1);
    assert_eq!(rw.removed_aggregates[0].func, "count");
    assert!(!has_aggregation(rw.query()));
    for (t, c) in [("flight", "flno"), ("flight", "aid"), ("aircraft", "aid"), ("aircraft", "name")] {
        assert!(projects(&rw, t, c), "missing {t}.{c}");
    }
}

#[test]
fn fig2_provenance_is_two_airbus_flights() {
    let fx = flight_fixture();
    let rw = rewrite_row(&fx, "flight_1", FIG2_WRONG_SQL, |_| true);
    let prov = fx.gateway.session("flight_1").unwrap().fetch_provenance(&rw).unwrap();
    assert_eq!(prov.tuple_ids, vec!["F2", "F3"]);
    let flno = prov.column_index(&ColumnRef::new("flight", "flno")).unwrap();
    let name = prov.column_index(&ColumnRef::new("aircraft", "name")).unwrap();
    let got: BTreeSet<i64> = prov
        .rows
        .iter()
        .map(|r| match r[flno] {
            Value::Integer(v) => v,
            ref other => panic!("{other:?}"),
        })
        .collect();
    assert_eq!(got, BTreeSet::from([7, 13]));
    assert!(prov.rows.iter().all(|r| r[name] == Value::Text("Airbus A340-300".into())));
    for c in [ColumnRef::new("flight", "aid"), ColumnRef::new("aircraft", "aid")] {
        assert!(prov
            .rows
            .iter()
            .all(|r| prov.value(0, &c) == Some(&Value::Integer(3)) && r.len() == prov.columns.len()));
    }
}

#[test]
fn projected_column_is_pinned_to_the_row() {
    let rw = rewrite_row(world(), "world_1", Q2, |_| true);
    let pins: Vec<String> = rw.added_result_conditions.iter().map(|e| e.to_string()).collect();
    assert_eq!(pins.len(), 1);
    assert!(pins[0].ends_with("Continent = 'North America'"), "{pins:?}");
    let sql = rw.query().render();
    assert!(sql.contains("'Anguilla'") && sql.contains("'North America'"), "{sql}");
    assert!(projects(&rw, "country", "Code"));
}

#[test]
fn asterisk_result_is_not_pinned() {
    let fx = flight_fixture();
    let rw = rewrite_row(&fx, "flight_1", "SELECT * FROM Flight", |_| true);
    assert!(rw.added_result_conditions.is_empty());
    assert_eq!(rw.query().statement.body.first_select().selection, None);
}

#[test]
fn null_values_pin_with_is_null() {
    let fx = build(&[DbSpec {
        db_id: "nulls",
        script: "CREATE TABLE t (id INTEGER PRIMARY KEY, a TEXT); INSERT INTO t VALUES (1, NULL), (2, 'x');",
        natural_names: &[],
    }]);
    let rw = rewrite_row(&fx, "nulls", "SELECT a FROM t", |r| r[0].is_null());
    assert!(rw.added_result_conditions[0].to_string().contains("IS NULL"));
    let prov = fx.gateway.session("nulls").unwrap().fetch_provenance(&rw).unwrap();
    assert_eq!(prov.rows.len(), 1);
}

#[test]
fn grouped_query_is_taken_apart() {
    let rw = rewrite_row(world(), "world_1", Q5, |r| r.contains(&Value::Text("Iraq".into())));
    assert!(!has_aggregation(rw.query()));
    assert_eq!(rw.removed_group_by.len(), 1);
    assert_eq!(rw.removed_conditions.len(), 1);
    assert_eq!(rw.removed_conditions[0].clause, "having");
    assert_eq!(rw.removed_conditions[0].text, "count(*) > 2");
    for (t, c) in [("country", "Code"), ("countrylanguage", "CountryCode"), ("countrylanguage", "Language")] {
        assert!(projects(&rw, t, c), "missing {t}.{c}");
    }
    let prov = world().gateway.session("world_1").unwrap().fetch_provenance(&rw).unwrap();
    // Oracle: direct count of Iraq's language rows.
    let (_, direct) = run(world(), "world_1", "SELECT count(*) FROM countrylanguage WHERE CountryCode = 'IRQ'");
    assert_eq!(Value::Integer(prov.rows.len() as i64), direct.rows[0][0]);
    assert_eq!(prov.rows.len(), 5);
}

#[test]
fn aruba_has_four_provenance_rows() {
    let rw = rewrite_row(world(), "world_1", Q1, |_| true);
    let prov = world().gateway.session("world_1").unwrap().fetch_provenance(&rw).unwrap();
    let (_, direct) = run(world(), "world_1", "SELECT count(*) FROM countrylanguage WHERE CountryCode = 'ABW'");
    assert_eq!(Value::Integer(prov.rows.len() as i64), direct.rows[0][0]);
    assert_eq!(prov.rows.len(), 4);
    let unique: BTreeSet<&String> = prov.tuple_ids.iter().collect();
    assert_eq!(unique.len(), prov.tuple_ids.len());
}

#[test]
fn set_operation_branches_are_rewritten_separately() {
    let rw = rewrite_row(world(), "world_1", Q3, |r| r[0] == Value::Text("Seychelles".into()));
    assert_eq!(rw.branches.len(), 2);
    let prov = world().gateway.session("world_1").unwrap().fetch_provenance(&rw).unwrap();
    let lang = prov.column_index(&ColumnRef::new("countrylanguage", "Language")).unwrap();
    let per_branch: Vec<(usize, Value)> =
        prov.branch_ids.iter().copied().zip(prov.rows.iter().map(|r| r[lang].clone())).collect();
    assert!(per_branch.contains(&(0, Value::Text("English".into()))));
    assert!(per_branch.contains(&(1, Value::Text("French".into()))));
}

#[test]
fn empty_result_skips_rewriting() {
    let (parsed, result) = run(world(), "world_1", "SELECT name FROM country WHERE continent = 'Atlantis'");
    assert!(result.rows.is_empty());
    assert!(rewrite(&parsed, None, &result, world().schema("world_1")).unwrap().is_none());
}

#[test]
fn limit_is_dropped_only_when_pinning() {
    let q = "SELECT name FROM country ORDER BY population DESC LIMIT 3";
    let rw = rewrite_row(world(), "world_1", q, |_| true);
    assert!(rw.dropped_limit);
    assert!(rw.query().statement.limit.is_none());
    assert!(!rw.query().statement.order_by.is_empty());
    let q = "SELECT count(*) FROM country";
    let rw = rewrite_row(world(), "world_1", q, |_| true);
    assert!(!rw.dropped_limit);
}

#[test]
fn already_complete_projection_gains_nothing() {
    let q = "SELECT Code, Name FROM country WHERE Name = 'Aruba'";
    let rw = rewrite_row(world(), "world_1", q, |_| true);
    assert!(rw.added_projections.is_empty(), "{:?}", rw.added_projections);
}

fn query_strategy() -> impl Strategy<Value = String> {
    let base = prop::sample::select(vec![
        "SELECT T1.Name FROM country AS T1 JOIN countrylanguage AS T2 ON T1.Code = T2.CountryCode",
        "SELECT T1.Name, count(*) FROM country AS T1 JOIN countrylanguage AS T2 ON T1.Code = T2.CountryCode",
        "SELECT count(T2.Language) FROM country AS T1 JOIN countrylanguage AS T2 ON T1.Code = T2.CountryCode",
        "SELECT T2.Name, T1.Continent FROM country AS T1 JOIN city AS T2 ON T1.Code = T2.CountryCode",
        "SELECT avg(Population), max(Population), Continent FROM country",
        "SELECT DISTINCT Continent FROM country",
        "SELECT * FROM city",
        "SELECT Name FROM country",
    ]);
    let filter = prop::option::of(prop::sample::select(vec![
        "Continent = 'Europe'",
        "Population > 100000",
        "Continent IN ('Asia', 'Africa')",
        "Name LIKE '%a%'",
        "Population BETWEEN 1000 AND 60000000",
    ]));
    let tail = prop::sample::select(vec!["", " ORDER BY 1", " ORDER BY 1 DESC LIMIT 2", " LIMIT 1"]);
    (base, filter, any::<bool>(), tail, 0usize..50).prop_map(|(base, filter, group, tail, pick)| {
        let mut q = base.to_string();
        if let Some(f) = filter.filter(|_| !base.contains("FROM city")) {
            let qualified = if base.contains("AS T1") { format!("T1.{f}") } else { f.to_string() };
            q.push_str(&format!(" WHERE {qualified}"));
        }
        let aggregating = base.contains('(');
        if group && aggregating {
            let key = if base.contains("T1.Name") {
                " GROUP BY T1.Name"
            } else if base.contains("Continent FROM") {
                " GROUP BY Continent"
            } else {
                ""
            };
            q.push_str(key);
        }
        format!("{q}{tail}|{pick}")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn rewritten_queries_are_aggregate_free_and_sound(spec in query_strategy()) {
        let (q, pick) = spec.split_once('|').unwrap();
        let pick: usize = pick.parse().unwrap();
        let fx = world();
        let schema = fx.schema("world_1");
        let (parsed, result) = run(fx, "world_1", q);
        prop_assume!(!result.rows.is_empty());
        let row = &result.rows[pick % result.rows.len()];
        let rw = rewrite(&parsed, Some(row), &result, schema).unwrap().unwrap();
        for b in &rw.branches {
            prop_assert!(!has_aggregation(&b.query), "{}", b.query.render());
        }
        // Original non-aggregate select columns survive.
        for item in &parsed.statement.body.first_select().projection {
            if let Expr::Column(c) = &item.expr {
                let c = ColumnRef::from_expr(c);
                prop_assert!(projected(&rw).iter().any(|x| x.same_column(&c)), "{} lost in {}", c, q);
            }
        }
        // Keys of every joined table are projected.
        for t in ["country", "countrylanguage", "city"] {
            if q.contains(&format!("FROM {t}")) || q.contains(&format!("JOIN {t}")) {
                for k in schema.table(t).unwrap().primary_keys() {
                    prop_assert!(projects(&rw, t, &k.name), "{t}.{} missing for {q}", k.name);
                }
            }
        }
        let prov = fx.gateway.session("world_1").unwrap().fetch_provenance(&rw).unwrap();
        prop_assert!(!prov.rows.is_empty());
        prop_assert_eq!(prov.rows.len(), prov.tuple_ids.len());
        // Each provenance row agrees with the pinned result values.
        let origins = &result.columns;
        for (i, col) in origins.iter().enumerate() {
            if let cyclesql::db::ColumnOrigin::Column(c) = &col.origin {
                if let Some(idx) = prov.column_index(c) {
                    let lit = row[i].to_literal().unwrap();
                    for r in &prov.rows {
                        prop_assert!(value_matches(&r[idx], &lit), "{} vs {:?} in {}", r[idx], lit, q);
                    }
                }
            }
        }
    }
}
