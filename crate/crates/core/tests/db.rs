mod common;

use std::time::Duration;

use common::*;
use cyclesql::db::{bag_equal, load_catalog, ColumnOrigin, DbError, Limits, ResultColumn, ResultSet, Value};
use cyclesql::rewrite::rewrite;
use cyclesql::schema::SchemaError;
use cyclesql::sql;
use proptest::prelude::*;

/// The world_1 entry as distributed with the benchmark, including SQLite's
/// bookkeeping table.
const WORLD_TABLES_JSON: &str = r#"[{
  "db_id": "world_1",
  "table_names_original": ["city", "sqlite_sequence", "country", "countrylanguage"],
  "table_names": ["city", "sqlite sequence", "country", "countrylanguage"],
  "column_names_original": [[-1, "*"],
    [0, "ID"], [0, "Name"], [0, "CountryCode"], [0, "District"], [0, "Population"],
    [1, "name"], [1, "seq"],
    [2, "Code"], [2, "Name"], [2, "Continent"], [2, "Region"], [2, "SurfaceArea"], [2, "IndepYear"],
    [2, "Population"], [2, "LifeExpectancy"], [2, "GNP"], [2, "GNPOld"], [2, "LocalName"],
    [2, "GovernmentForm"], [2, "HeadOfState"], [2, "Capital"], [2, "Code2"],
    [3, "CountryCode"], [3, "Language"], [3, "IsOfficial"], [3, "Percentage"]],
  "column_types": ["text",
    "number", "text", "text", "text", "number",
    "text", "text",
    "text", "text", "text", "text", "number", "number", "number", "number", "number", "number", "text",
    "text", "text", "number", "text",
    "text", "text", "text", "number"],
  "primary_keys": [1, 8, 23],
  "foreign_keys": [[3, 8], [23, 8]]
}]"#;

fn world() -> &'static Fixture {
    use std::sync::OnceLock;
    static FX: OnceLock<Fixture> = OnceLock::new();
    FX.get_or_init(world_fixture)
}

fn rs(rows: Vec<Vec<Value>>) -> ResultSet {
    let width = rows.first().map_or(1, Vec::len);
    let columns = (0..width)
        .map(|i| ResultColumn { output_name: format!("c{i}"), origin: ColumnOrigin::Expression(String::new()) })
        .collect();
    ResultSet::new(columns, rows)
}

fn single_value(fx: &Fixture, db: &str, q: &str) -> Value {
    let parsed = sql::parse(q, fx.schema(db)).unwrap();
    let result = fx.gateway.session(db).unwrap().execute(&parsed).unwrap();
    assert_eq!(result.rows.len(), 1, "{q}");
    result.rows[0][0].clone()
}

#[test]
fn world_catalog_has_four_tables() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tables.json");
    std::fs::write(&path, WORLD_TABLES_JSON).unwrap();
    let catalog = load_catalog(dir.path(), &path).unwrap();
    let world = catalog.get("world_1").unwrap();
    assert_eq!(world.tables.len(), 4);
    let country = world.table("country").unwrap();
    assert_eq!(country.single_primary_key().unwrap().name, "Code");
    assert_eq!(world.table("city").unwrap().foreign_keys[0].foreign_table, "country");
    // No database files were provided.
    assert_eq!(catalog.warnings.len(), 1);
}

#[test]
fn empty_tables_list_gives_empty_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tables.json");
    std::fs::write(&path, "[]").unwrap();
    let catalog = load_catalog(dir.path(), &path).unwrap();
    assert!(catalog.is_empty());
    assert!(catalog.warnings.is_empty());
}

#[test]
fn malformed_catalog_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tables.json");
    std::fs::write(&path, r#"[{"db_id": "x"}]"#).unwrap();
    let err = load_catalog(dir.path(), &path).unwrap_err();
    assert!(matches!(err, DbError::Schema(SchemaError::MalformedCatalog(_))), "{err:?}");
    let err = load_catalog(dir.path(), &dir.path().join("missing.json")).unwrap_err();
    assert!(matches!(err, DbError::Schema(SchemaError::Io { .. })), "{err:?}");
}

#[test]
fn flight_fixture_has_two_tables_of_ten_rows() {
    let fx = flight_fixture();
    let schema = fx.schema("flight_1");
    assert_eq!(schema.tables.len(), 2);
    for t in ["flight", "aircraft"] {
        assert_eq!(single_value(&fx, "flight_1", &format!("SELECT count(*) FROM {t}")), Value::Integer(10));
    }
}

#[test]
fn fig2_query_counts_two_flights() {
    let fx = flight_fixture();
    assert_eq!(single_value(&fx, "flight_1", FIG2_WRONG_SQL), Value::Integer(2));
    assert_eq!(single_value(&fx, "flight_1", "SELECT count(*) FROM Flight WHERE 1=0"), Value::Integer(0));
}

#[test]
fn aruba_speaks_four_languages() {
    assert_eq!(single_value(world(), "world_1", Q1), Value::Integer(4));
}

#[test]
fn result_columns_carry_origins() {
    let parsed = sql::parse(Q5, world().schema("world_1")).unwrap();
    let result = world().gateway.session("world_1").unwrap().execute(&parsed).unwrap();
    assert!(matches!(&result.columns[0].origin, ColumnOrigin::Aggregate(a) if a.func == "count"));
    assert!(matches!(&result.columns[1].origin, ColumnOrigin::Column(c) if c.column.eq_ignore_ascii_case("name")));
}

#[test]
fn engine_errors_propagate() {
    let session = world().gateway.session("world_1").unwrap();
    let err = session.run("SELECT nosuch FROM country").unwrap_err();
    assert!(matches!(&err, DbError::SqlExecution(m) if m.contains("nosuch")), "{err:?}");
    assert!(matches!(world().gateway.session("nope"), Err(DbError::UnknownDatabase(_))));
}

#[test]
fn row_limit_truncates_and_flags() {
    let gateway = world().gateway.clone().with_limits(Limits { max_rows: 3, ..Limits::default() });
    let parsed = sql::parse("SELECT Name FROM country", world().schema("world_1")).unwrap();
    let result = gateway.session("world_1").unwrap().execute(&parsed).unwrap();
    assert_eq!(result.rows.len(), 3);
    assert_eq!(result.row_count, 3);
    assert!(result.truncated);
}

#[test]
fn long_queries_time_out() {
    let timeout = Duration::from_millis(50);
    let gateway = world().gateway.clone().with_limits(Limits { timeout, ..Limits::default() });
    let session = gateway.session("world_1").unwrap();
    let endless = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT count(*) FROM c";
    let started = std::time::Instant::now();
    assert!(matches!(session.run(endless), Err(DbError::Timeout(t)) if t == timeout));
    assert!(started.elapsed() < Duration::from_secs(5));
}

#[test]
fn connections_are_read_only() {
    let session = world().gateway.session("world_1").unwrap();
    assert!(session.run("DELETE FROM country").is_err());
    assert_eq!(
        single_value(world(), "world_1", "SELECT count(*) FROM country WHERE Name = 'Aruba'"),
        Value::Integer(1)
    );
}

#[test]
fn iraq_provenance_has_one_row_per_language() {
    let fx = world();
    let schema = fx.schema("world_1");
    let session = fx.gateway.session("world_1").unwrap();
    let parsed = sql::parse(Q5, schema).unwrap();
    let result = session.execute(&parsed).unwrap();
    let row = result.rows.iter().find(|r| r[1] == Value::Text("Iraq".into())).expect("Iraq row");
    let rewritten = rewrite(&parsed, Some(row), &result, schema).unwrap().unwrap();
    let prov = session.fetch_provenance(&rewritten).unwrap();
    // Oracle: a direct count over the base tables.
    let direct = single_value(
        fx,
        "world_1",
        "SELECT count(*) FROM countrylanguage AS l JOIN country AS c ON c.Code = l.CountryCode WHERE c.Name = 'Iraq'",
    );
    assert_eq!(Value::Integer(prov.rows.len() as i64), direct);
    assert_eq!(prov.rows.len(), 5);
    let mut ids = prov.tuple_ids.clone();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), prov.tuple_ids.len(), "tuple ids are unique");
    assert!(prov.rows.iter().all(|r| r.len() == prov.columns.len()));
}

#[test]
fn empty_table_yields_empty_provenance() {
    let full = flight_fixture();
    let empty = build(&[DbSpec {
        db_id: "flight_1",
        script: "CREATE TABLE aircraft (aid INTEGER PRIMARY KEY, name TEXT, distance INTEGER);
                 CREATE TABLE flight (flno INTEGER PRIMARY KEY, origin TEXT, destination TEXT,
                    aid INTEGER REFERENCES aircraft(aid));",
        natural_names: &[],
    }]);
    let schema = full.schema("flight_1");
    let parsed = sql::parse(FIG2_GOLD_SQL, schema).unwrap();
    let result = full.gateway.session("flight_1").unwrap().execute(&parsed).unwrap();
    let rewritten = rewrite(&parsed, Some(&result.rows[0]), &result, schema).unwrap().unwrap();
    let err = empty.gateway.session("flight_1").unwrap().fetch_provenance(&rewritten).unwrap_err();
    assert!(matches!(err, DbError::EmptyProvenance), "{err:?}");
}

#[test]
fn bag_equality_examples() {
    let a =
        rs(vec![vec![Value::Integer(1), Value::Text("a".into())], vec![Value::Integer(2), Value::Text("b".into())]]);
    let b =
        rs(vec![vec![Value::Integer(2), Value::Text("b".into())], vec![Value::Integer(1), Value::Text("a".into())]]);
    assert!(bag_equal(&a, &b));
    let twice = rs(vec![vec![Value::Integer(1), Value::Text("a".into())]; 2]);
    let once = rs(vec![vec![Value::Integer(1), Value::Text("a".into())]]);
    assert!(!bag_equal(&twice, &once));
    assert!(bag_equal(&rs(vec![vec![Value::Integer(1)]]), &rs(vec![vec![Value::Real(1.0)]])));
    assert!(!bag_equal(&rs(vec![vec![Value::Text("A".into())]]), &rs(vec![vec![Value::Text("a".into())]])));
}

#[test]
fn integer_and_real_equality_agrees_with_sqlite() {
    // Oracle: SQLite's own comparison of the two literals.
    let session = world().gateway.session("world_1").unwrap();
    for (x, y) in [("1", "1.0"), ("2", "2.5"), ("0", "-0.0"), ("'1'", "1")] {
        let (_, rows, _) = session.run(&format!("SELECT {x} = {y}, {x}, {y}")).unwrap();
        let engine = rows[0][0] == Value::Integer(1);
        let ours = bag_equal(&rs(vec![vec![rows[0][1].clone()]]), &rs(vec![vec![rows[0][2].clone()]]));
        assert_eq!(engine, ours, "{x} vs {y}");
    }
}

#[test]
fn unordered_queries_are_deterministic() {
    let parsed = sql::parse(Q4, world().schema("world_1")).unwrap();
    let a = world().gateway.session("world_1").unwrap().execute(&parsed).unwrap();
    let b = world().gateway.session("world_1").unwrap().execute(&parsed).unwrap();
    assert!(bag_equal(&a, &b));
}

fn value_strategy() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        (-5i64..5).prop_map(Value::Integer),
        (-5i64..5).prop_map(|v| Value::Real(v as f64)),
        (-50i64..50).prop_map(|v| Value::Real(v as f64 / 4.0)),
        "[ab]{0,2}".prop_map(Value::Text),
    ]
}

fn rows_strategy() -> impl Strategy<Value = Vec<Vec<Value>>> {
    (1usize..4).prop_flat_map(|w| prop::collection::vec(prop::collection::vec(value_strategy(), w), 0..8))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn bag_equal_is_reflexive(rows in rows_strategy()) {
        let a = rs(rows);
        prop_assert!(bag_equal(&a, &a.clone()));
    }

    #[test]
    fn bag_equal_is_symmetric(x in rows_strategy(), y in rows_strategy()) {
        let (a, b) = (rs(x), rs(y));
        prop_assert_eq!(bag_equal(&a, &b), bag_equal(&b, &a));
    }

    #[test]
    fn bag_equal_ignores_row_order(rows in rows_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(bag_equal(&rs(rows), &rs(shuffled)));
    }
}
