//! Nouns for tables and columns, pluralisation and per-column overrides.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::schema::DatabaseSchema;
use crate::sql::ColumnRef;

const BUILTIN: &str = include_str!("../../data/lexicon.json");

#[derive(Debug, Clone, Deserialize)]
pub struct ColumnEntry {
    pub table: String,
    pub column: String,
    pub noun: Option<String>,
    /// Adjective placed before the plural noun, e.g. "spoken".
    pub qualifier: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Lexicon {
    #[serde(default)]
    pub irregular_plurals: BTreeMap<String, String>,
    /// Column names treated as the display name of their table's entities.
    #[serde(default)]
    pub name_columns: Vec<String>,
    #[serde(default)]
    pub columns: Vec<ColumnEntry>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Lexicon {
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN).expect("bundled lexicon is valid JSON")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Plural of a (possibly multi-word) noun; only the last word changes.
    pub fn plural(&self, noun: &str) -> String {
        let (head, last) = match noun.rsplit_once(' ') {
            Some((h, l)) => (Some(h), l),
            None => (None, noun),
        };
        let lower = last.to_lowercase();
        let plural = if let Some(p) = self.irregular_plurals.get(&lower) {
            p.clone()
        } else if lower.ends_with('y') && !lower.ends_with("ay") && !lower.ends_with("ey") && !lower.ends_with("oy") {
            format!("{}ies", &last[..last.len() - 1])
        } else if ["s", "x", "z", "ch", "sh"].iter().any(|s| lower.ends_with(s)) {
            format!("{last}es")
        } else {
            format!("{last}s")
        };
        match head {
            Some(h) => format!("{h} {plural}"),
            None => plural,
        }
    }

    fn entry(&self, col: &ColumnRef) -> Option<&ColumnEntry> {
        let table = col.table.as_deref()?;
        self.columns.iter().find(|e| e.table.eq_ignore_ascii_case(table) && e.column.eq_ignore_ascii_case(&col.column))
    }

    pub fn table_noun(&self, schema: &DatabaseSchema, table: &str) -> String {
        schema.table(table).map_or_else(|| crate::schema::humanize(table), |t| t.noun())
    }

    pub fn column_noun(&self, schema: &DatabaseSchema, col: &ColumnRef) -> String {
        if let Some(noun) = self.entry(col).and_then(|e| e.noun.clone()) {
            return noun;
        }
        col.table
            .as_deref()
            .and_then(|t| schema.column(t, &col.column))
            .map_or_else(|| crate::schema::humanize(&col.column), |c| c.noun())
    }

    pub fn qualifier(&self, col: &ColumnRef) -> Option<&str> {
        self.entry(col).and_then(|e| e.qualifier.as_deref())
    }

    pub fn is_name_column(&self, col: &ColumnRef) -> bool {
        self.name_columns.iter().any(|n| n.eq_ignore_ascii_case(&col.column))
    }

    /// How a column is named when it stands alone: name-like columns carry
    /// their table noun ("country name"), others use their own noun.
    pub fn qualified_column_noun(&self, schema: &DatabaseSchema, col: &ColumnRef) -> String {
        let noun = self.column_noun(schema, col);
        let table = col.table.as_deref().map(|t| self.table_noun(schema, t));
        match table {
            Some(t) if self.is_name_column(col) && !noun.contains(&t) => format!("{t} {noun}"),
            _ => noun,
        }
    }
}

/// Counts written as words up to ten, digits beyond.
pub fn number_word(n: usize) -> String {
    const WORDS: [&str; 11] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    WORDS.get(n).map_or_else(|| n.to_string(), |w| w.to_string())
}
