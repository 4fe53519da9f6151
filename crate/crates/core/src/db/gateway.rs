use std::path::{Path, PathBuf};
use std::time::Instant;

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};

use super::{ColumnOrigin, DbError, Limits, ResultColumn, ResultSet, Value};
use crate::schema::{ColumnDef, DatabaseSchema, ForeignKey, SchemaCatalog, TableDef};
use crate::sql::ast::{Expr, Select, TableFactor};
use crate::sql::{AggregateRef, ColumnRef, SqlQuery};

/// Reads a Spider `tables.json` and checks which databases exist under
/// `db_root/database/<db_id>/<db_id>.sqlite`. Missing files become warnings.
pub fn load_catalog(db_root: &Path, tables_json: &Path) -> Result<SchemaCatalog, DbError> {
    let mut catalog = SchemaCatalog::from_tables_json(tables_json)?;
    let missing: Vec<String> =
        catalog.databases.keys().filter(|id| !database_path(db_root, id).exists()).cloned().collect();
    for id in missing {
        catalog.warnings.push(format!("database file for {id:?} not found under {}", db_root.display()));
    }
    Ok(catalog)
}

fn database_path(db_root: &Path, db_id: &str) -> PathBuf {
    db_root.join("database").join(db_id).join(format!("{db_id}.sqlite"))
}

/// Builds a schema from a database's own catalog tables.
pub fn introspect_schema(conn: &Connection, db_id: &str) -> Result<DatabaseSchema, DbError> {
    let sql_err = |e: rusqlite::Error| DbError::SqlExecution(e.to_string());
    let mut names = conn
        .prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid")
        .map_err(sql_err)?;
    let table_names: Vec<String> =
        names.query_map([], |r| r.get(0)).map_err(sql_err)?.collect::<Result<_, _>>().map_err(sql_err)?;
    let mut tables = Vec::new();
    for name in table_names {
        let quoted = name.replace('"', "\"\"");
        let mut info = conn.prepare(&format!("PRAGMA table_info(\"{quoted}\")")).map_err(sql_err)?;
        let columns: Vec<ColumnDef> = info
            .query_map([], |r| {
                Ok(ColumnDef {
                    name: r.get(1)?,
                    natural_name: None,
                    type_tag: r.get::<_, String>(2)?.to_lowercase(),
                    is_primary_key: r.get::<_, i64>(5)? > 0,
                })
            })
            .map_err(sql_err)?
            .collect::<Result<_, _>>()
            .map_err(sql_err)?;
        let mut fk = conn.prepare(&format!("PRAGMA foreign_key_list(\"{quoted}\")")).map_err(sql_err)?;
        let foreign_keys: Vec<ForeignKey> = fk
            .query_map([], |r| {
                Ok(ForeignKey {
                    foreign_table: r.get(2)?,
                    column: r.get(3)?,
                    foreign_column: r.get::<_, Option<String>>(4)?.unwrap_or_default(),
                })
            })
            .map_err(sql_err)?
            .collect::<Result<_, _>>()
            .map_err(sql_err)?;
        tables.push(TableDef { name, natural_name: None, columns, foreign_keys });
    }
    // Foreign keys without an explicit target column point at the primary key.
    let snapshot = tables.clone();
    for t in &mut tables {
        for fk in &mut t.foreign_keys {
            if fk.foreign_column.is_empty() {
                if let Some(pk) = snapshot
                    .iter()
                    .find(|x| x.name.eq_ignore_ascii_case(&fk.foreign_table))
                    .and_then(|x| x.single_primary_key())
                {
                    fk.foreign_column = pk.name.clone();
                }
            }
        }
        t.foreign_keys.retain(|fk| {
            snapshot
                .iter()
                .find(|x| x.name.eq_ignore_ascii_case(&fk.foreign_table))
                .is_some_and(|x| x.column(&fk.foreign_column).is_some())
        });
    }
    Ok(DatabaseSchema::new(db_id, tables)?)
}

/// Catalog plus database locations. Immutable and shareable; open a
/// [`Session`] per worker to run queries.
#[derive(Debug, Clone)]
pub struct Gateway {
    db_root: PathBuf,
    catalog: SchemaCatalog,
    pub limits: Limits,
}

impl Gateway {
    pub fn new(db_root: impl Into<PathBuf>, catalog: SchemaCatalog) -> Self {
        Self { db_root: db_root.into(), catalog, limits: Limits::default() }
    }

    /// Uses `db_root/tables.json` when present, otherwise introspects every
    /// database found under `db_root/database`.
    pub fn open_root(db_root: impl Into<PathBuf>) -> Result<Self, DbError> {
        let db_root = db_root.into();
        let tables_json = db_root.join("tables.json");
        if tables_json.exists() {
            let catalog = load_catalog(&db_root, &tables_json)?;
            return Ok(Self::new(db_root, catalog));
        }
        let mut catalog = SchemaCatalog::default();
        let dir = db_root.join("database");
        let entries = std::fs::read_dir(&dir)
            .map_err(|e| DbError::Open { path: dir.display().to_string(), message: e.to_string() })?;
        let mut ids: Vec<String> =
            entries.filter_map(|e| e.ok()).filter_map(|e| e.file_name().to_str().map(str::to_string)).collect();
        ids.sort();
        for id in ids {
            let path = database_path(&db_root, &id);
            if path.exists() {
                let conn = open_read_only(&path)?;
                catalog.insert(introspect_schema(&conn, &id)?);
            }
        }
        Ok(Self::new(db_root, catalog))
    }

    pub fn with_limits(mut self, limits: Limits) -> Self {
        self.limits = limits;
        self
    }

    pub fn catalog(&self) -> &SchemaCatalog {
        &self.catalog
    }

    pub fn schema(&self, db_id: &str) -> Result<&DatabaseSchema, DbError> {
        self.catalog.get(db_id).ok_or_else(|| DbError::UnknownDatabase(db_id.to_string()))
    }

    pub fn database_path(&self, db_id: &str) -> PathBuf {
        database_path(&self.db_root, db_id)
    }

    /// Opens a read-only connection to `db_id`.
    pub fn session(&self, db_id: &str) -> Result<Session<'_>, DbError> {
        let schema = self.schema(db_id)?;
        let conn = open_read_only(&self.database_path(db_id))?;
        Ok(Session { conn, schema, limits: self.limits })
    }
}

fn open_read_only(path: &Path) -> Result<Connection, DbError> {
    if !path.exists() {
        return Err(DbError::Open { path: path.display().to_string(), message: "file not found".into() });
    }
    Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)
        .map_err(|e| DbError::Open { path: path.display().to_string(), message: e.to_string() })
}

/// One read-only connection bound to a database schema. Not shared across
/// threads.
pub struct Session<'g> {
    conn: Connection,
    schema: &'g DatabaseSchema,
    limits: Limits,
}

impl<'g> Session<'g> {
    pub fn schema(&self) -> &'g DatabaseSchema {
        self.schema
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub fn set_limits(&mut self, limits: Limits) {
        self.limits = limits;
    }

    /// Runs `query` as written and labels its columns with their origins.
    pub fn execute(&self, query: &SqlQuery) -> Result<ResultSet, DbError> {
        let (names, rows, truncated) = self.run(&query.raw_text)?;
        let columns = result_columns(query, self.schema, names);
        let row_count = rows.len();
        Ok(ResultSet { columns, rows, row_count, truncated })
    }

    /// Runs raw SQL, returning column names, rows and the truncation flag.
    pub fn run(&self, sql: &str) -> Result<(Vec<String>, Vec<Vec<Value>>, bool), DbError> {
        let started = Instant::now();
        let timeout = self.limits.timeout;
        self.conn.progress_handler(1_000, Some(move || started.elapsed() > timeout));
        let outcome = self.run_inner(sql);
        self.conn.progress_handler(0, None::<fn() -> bool>);
        outcome.map_err(|e| match e {
            rusqlite::Error::SqliteFailure(f, _) if f.code == rusqlite::ErrorCode::OperationInterrupted => {
                DbError::Timeout(timeout)
            }
            other => DbError::SqlExecution(other.to_string()),
        })
    }

    fn run_inner(&self, sql: &str) -> Result<(Vec<String>, Vec<Vec<Value>>, bool), rusqlite::Error> {
        let mut stmt = self.conn.prepare(sql)?;
        let names: Vec<String> = stmt.column_names().into_iter().map(str::to_string).collect();
        let width = names.len();
        let mut rows = stmt.query([])?;
        let mut out = Vec::new();
        let mut truncated = false;
        while let Some(row) = rows.next()? {
            if out.len() == self.limits.max_rows {
                truncated = true;
                break;
            }
            let mut values = Vec::with_capacity(width);
            for i in 0..width {
                values.push(match row.get_ref(i)? {
                    ValueRef::Null => Value::Null,
                    ValueRef::Integer(v) => Value::Integer(v),
                    ValueRef::Real(v) => Value::Real(v),
                    ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
                    ValueRef::Blob(b) => Value::Blob(b.to_vec()),
                });
            }
            out.push(values);
        }
        Ok((names, out, truncated))
    }
}

/// Pairs the engine's column names with origins from the first SELECT
/// branch; falls back to expression origins when the shapes disagree.
fn result_columns(query: &SqlQuery, schema: &DatabaseSchema, names: Vec<String>) -> Vec<ResultColumn> {
    let mut origins = projection_origins(query.statement.body.first_select(), schema);
    if origins.len() != names.len() {
        origins = names.iter().map(|n| ColumnOrigin::Expression(n.clone())).collect();
    }
    names.into_iter().zip(origins).map(|(output_name, origin)| ResultColumn { output_name, origin }).collect()
}

/// Origins of a SELECT block's output columns, with wildcards expanded.
pub(crate) fn projection_origins(select: &Select, schema: &DatabaseSchema) -> Vec<ColumnOrigin> {
    let mut origins = Vec::new();
    for item in &select.projection {
        match &item.expr {
            Expr::Wildcard | Expr::QualifiedWildcard(_) => {
                let only = match &item.expr {
                    Expr::QualifiedWildcard(q) => Some(q.as_str()),
                    _ => None,
                };
                let Some(from) = &select.from else { continue };
                for factor in from.factors() {
                    let binding = factor.binding().unwrap_or_default();
                    if only.is_some_and(|q| !q.eq_ignore_ascii_case(binding)) {
                        continue;
                    }
                    match factor {
                        TableFactor::Table { name, .. } => match schema.table(name) {
                            Some(t) => origins.extend(t.columns.iter().map(|c| ColumnOrigin::Asterisk {
                                column: Some(ColumnRef {
                                    table: Some(t.name.clone()),
                                    column: c.name.clone(),
                                    binding: Some(binding.to_string()),
                                }),
                            })),
                            None => origins.push(ColumnOrigin::Asterisk { column: None }),
                        },
                        TableFactor::Derived { subquery, .. } => origins.extend(
                            subquery
                                .body
                                .first_select()
                                .projection
                                .iter()
                                .map(|_| ColumnOrigin::Asterisk { column: None }),
                        ),
                    }
                }
            }
            Expr::Column(c) if c.resolved.is_some() => origins.push(ColumnOrigin::Column(ColumnRef::from_expr(c))),
            Expr::Function(f) if f.is_aggregate() => origins.push(ColumnOrigin::Aggregate(AggregateRef::from_call(f))),
            Expr::Nested(inner) if matches!(**inner, Expr::Column(_)) => {
                if let Expr::Column(c) = &**inner {
                    origins.push(ColumnOrigin::Column(ColumnRef::from_expr(c)))
                }
            }
            other => origins.push(ColumnOrigin::Expression(other.to_string())),
        }
    }
    origins
}
