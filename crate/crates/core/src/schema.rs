//! Database schema catalog and Spider `tables.json` ingestion.
//!
//! Identifiers are matched case-insensitively everywhere; the original
//! spelling from the catalog is kept as the canonical form.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed catalog: {0}")]
    MalformedCatalog(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    /// Human-readable name (Spider's `column_names`), when known.
    #[serde(default)]
    pub natural_name: Option<String>,
    pub type_tag: String,
    pub is_primary_key: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub foreign_table: String,
    pub foreign_column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    #[serde(default)]
    pub natural_name: Option<String>,
    pub columns: Vec<ColumnDef>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn primary_keys(&self) -> impl Iterator<Item = &ColumnDef> {
        self.columns.iter().filter(|c| c.is_primary_key)
    }

    /// The single-column primary key, if the key is not composite.
    pub fn single_primary_key(&self) -> Option<&ColumnDef> {
        let mut keys = self.primary_keys();
        match (keys.next(), keys.next()) {
            (Some(k), None) => Some(k),
            _ => None,
        }
    }

    /// Lowercased, space-separated name used when talking about this table.
    pub fn noun(&self) -> String {
        humanize(self.natural_name.as_deref().unwrap_or(&self.name))
    }
}

impl ColumnDef {
    pub fn noun(&self) -> String {
        humanize(self.natural_name.as_deref().unwrap_or(&self.name))
    }
}

/// `CountryLanguage` → `countrylanguage`, `flight_no` → `flight no`.
pub fn humanize(identifier: &str) -> String {
    identifier.replace('_', " ").trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseSchema {
    pub db_id: String,
    pub tables: Vec<TableDef>,
}

impl DatabaseSchema {
    pub fn new(db_id: impl Into<String>, tables: Vec<TableDef>) -> Result<Self, SchemaError> {
        let schema = Self { db_id: db_id.into(), tables };
        schema.validate()?;
        Ok(schema)
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, table: &str, column: &str) -> Option<&ColumnDef> {
        self.table(table).and_then(|t| t.column(column))
    }

    /// Foreign keys linking `a` and `b` in either direction, as
    /// `(referencing table, fk)` pairs.
    pub fn links_between<'a>(
        &'a self,
        a: &'a str,
        b: &'a str,
    ) -> impl Iterator<Item = (&'a TableDef, &'a ForeignKey)> + 'a {
        self.tables.iter().flat_map(move |t| {
            t.foreign_keys.iter().filter_map(move |fk| {
                let forward = t.name.eq_ignore_ascii_case(a) && fk.foreign_table.eq_ignore_ascii_case(b);
                let backward = t.name.eq_ignore_ascii_case(b) && fk.foreign_table.eq_ignore_ascii_case(a);
                (forward || backward).then_some((t, fk))
            })
        })
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut seen = Vec::<String>::new();
        for table in &self.tables {
            let lower = table.name.to_lowercase();
            if seen.contains(&lower) {
                return Err(SchemaError::MalformedCatalog(format!("{}: duplicate table {}", self.db_id, table.name)));
            }
            seen.push(lower);
            let mut cols = Vec::<String>::new();
            for col in &table.columns {
                let lower = col.name.to_lowercase();
                if cols.contains(&lower) {
                    return Err(SchemaError::MalformedCatalog(format!(
                        "{}: duplicate column {}.{}",
                        self.db_id, table.name, col.name
                    )));
                }
                cols.push(lower);
            }
        }
        for table in &self.tables {
            for fk in &table.foreign_keys {
                if table.column(&fk.column).is_none() || self.column(&fk.foreign_table, &fk.foreign_column).is_none() {
                    return Err(SchemaError::MalformedCatalog(format!(
                        "{}: foreign key {}.{} -> {}.{} names a missing column",
                        self.db_id, table.name, fk.column, fk.foreign_table, fk.foreign_column
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemaCatalog {
    pub databases: BTreeMap<String, DatabaseSchema>,
    /// Non-fatal problems found while loading (e.g. missing database files).
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SchemaCatalog {
    pub fn get(&self, db_id: &str) -> Option<&DatabaseSchema> {
        self.databases.get(db_id)
    }

    pub fn insert(&mut self, schema: DatabaseSchema) {
        self.databases.insert(schema.db_id.clone(), schema);
    }

    pub fn len(&self) -> usize {
        self.databases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.databases.is_empty()
    }

    pub fn from_tables_json_str(text: &str) -> Result<Self, SchemaError> {
        let entries: Vec<SpiderTables> =
            serde_json::from_str(text).map_err(|e| SchemaError::MalformedCatalog(e.to_string()))?;
        let mut catalog = SchemaCatalog::default();
        for entry in entries {
            catalog.insert(entry.into_schema()?);
        }
        Ok(catalog)
    }

    pub fn from_tables_json(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SchemaError::Io { path: path.display().to_string(), source })?;
        Self::from_tables_json_str(&text)
    }
}

/// One entry of Spider's `tables.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpiderTables {
    pub db_id: String,
    pub table_names_original: Vec<String>,
    #[serde(default)]
    pub table_names: Vec<String>,
    pub column_names_original: Vec<(i64, String)>,
    #[serde(default)]
    pub column_names: Vec<(i64, String)>,
    pub column_types: Vec<String>,
    #[serde(default)]
    pub primary_keys: Vec<KeyIndex>,
    #[serde(default)]
    pub foreign_keys: Vec<(usize, usize)>,
}

/// Primary keys appear both as plain indices and as lists (composite keys).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeyIndex {
    One(usize),
    Many(Vec<usize>),
}

impl SpiderTables {
    pub fn into_schema(self) -> Result<DatabaseSchema, SchemaError> {
        let bad = |msg: String| SchemaError::MalformedCatalog(format!("{}: {msg}", self.db_id));
        if self.column_types.len() != self.column_names_original.len() {
            return Err(bad("column_types and column_names_original differ in length".into()));
        }
        let mut tables: Vec<TableDef> = self
            .table_names_original
            .iter()
            .enumerate()
            .map(|(i, name)| TableDef {
                name: name.clone(),
                natural_name: self.table_names.get(i).cloned(),
                columns: Vec::new(),
                foreign_keys: Vec::new(),
            })
            .collect();
        let pk: Vec<usize> = self
            .primary_keys
            .iter()
            .flat_map(|k| match k {
                KeyIndex::One(i) => vec![*i],
                KeyIndex::Many(v) => v.clone(),
            })
            .collect();
        // column index -> (table index, position within table)
        let mut locate = vec![None; self.column_names_original.len()];
        for (idx, (table_idx, name)) in self.column_names_original.iter().enumerate() {
            if *table_idx < 0 {
                continue;
            }
            let t = *table_idx as usize;
            let table = tables.get_mut(t).ok_or_else(|| bad(format!("column {name} references table index {t}")))?;
            locate[idx] = Some((t, table.columns.len()));
            table.columns.push(ColumnDef {
                name: name.clone(),
                natural_name: self.column_names.get(idx).map(|(_, n)| n.clone()),
                type_tag: self.column_types[idx].clone(),
                is_primary_key: pk.contains(&idx),
            });
        }
        for &(from, to) in &self.foreign_keys {
            let (ft, fc) = locate
                .get(from)
                .copied()
                .flatten()
                .ok_or_else(|| bad(format!("foreign key column index {from} out of range")))?;
            let (tt, tc) = locate
                .get(to)
                .copied()
                .flatten()
                .ok_or_else(|| bad(format!("foreign key column index {to} out of range")))?;
            let fk = ForeignKey {
                column: tables[ft].columns[fc].name.clone(),
                foreign_table: tables[tt].name.clone(),
                foreign_column: tables[tt].columns[tc].name.clone(),
            };
            tables[ft].foreign_keys.push(fk);
        }
        DatabaseSchema::new(self.db_id.clone(), tables)
    }

    pub fn from_schema(schema: &DatabaseSchema) -> Self {
        let mut column_names_original = vec![(-1, "*".to_string())];
        let mut column_names = vec![(-1, "*".to_string())];
        let mut column_types = vec!["text".to_string()];
        let mut primary_keys = Vec::new();
        let mut index = BTreeMap::new();
        for (t, table) in schema.tables.iter().enumerate() {
            for col in &table.columns {
                let i = column_names_original.len();
                index.insert((table.name.to_lowercase(), col.name.to_lowercase()), i);
                column_names_original.push((t as i64, col.name.clone()));
                column_names.push((t as i64, col.noun()));
                column_types.push(col.type_tag.clone());
                if col.is_primary_key {
                    primary_keys.push(KeyIndex::One(i));
                }
            }
        }
        let foreign_keys = schema
            .tables
            .iter()
            .flat_map(|t| {
                t.foreign_keys.iter().map(|fk| {
                    (
                        index[&(t.name.to_lowercase(), fk.column.to_lowercase())],
                        index[&(fk.foreign_table.to_lowercase(), fk.foreign_column.to_lowercase())],
                    )
                })
            })
            .collect();
        Self {
            db_id: schema.db_id.clone(),
            table_names_original: schema.tables.iter().map(|t| t.name.clone()).collect(),
            table_names: schema.tables.iter().map(|t| t.noun()).collect(),
            column_names_original,
            column_names,
            column_types,
            primary_keys,
            foreign_keys,
        }
    }
}
