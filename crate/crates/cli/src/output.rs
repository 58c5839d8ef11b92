// SPDX-License-Identifier: Apache-2.0

//! Tabular output shared by the subcommands.

use kqfc_core::sweeps::{format_f64, to_json_bytes, write_csv, Format};
use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};
use serde_json::Value;

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Text(String),
    Bool(bool),
    /// Written as an empty CSV field and a JSON null.
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Num(v) => s.serialize_f64(*v),
            Cell::Text(t) => s.serialize_str(t),
            Cell::Bool(b) => s.serialize_bool(*b),
            Cell::Empty => s.serialize_none(),
        }
    }
}

/// Rows under a fixed header, plus free-form run metadata for JSON.
pub struct Table {
    pub command: &'static str,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub meta: Value,
    /// Extra top-level JSON members.
    pub extra: Vec<(&'static str, Value)>,
    /// Replaces the flat rows in JSON output.
    pub json_records: Option<Value>,
}

impl Table {
    pub fn new(command: &'static str, columns: &[&str], meta: Value) -> Self {
        Table {
            command,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            meta,
            extra: Vec::new(),
            json_records: None,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Vec<u8> {
        match format {
            Format::Json => to_json_bytes(self).expect("tables serialize"),
            Format::Csv => {
                let rows = self.rows.iter().map(|r| {
                    r.iter()
                        .map(|c| match c {
                            Cell::Num(v) => format_f64(*v),
                            Cell::Text(t) => t.clone(),
                            Cell::Bool(b) => b.to_string(),
                            Cell::Empty => String::new(),
                        })
                        .collect()
                });
                let mut out = Vec::new();
                write_csv(&mut out, &self.columns, rows).expect("writing to memory");
                out
            }
        }
    }
}

struct Row<'a> {
    columns: &'a [String],
    cells: &'a [Cell],
}

impl Serialize for Row<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.columns.len()))?;
        for (c, v) in self.columns.iter().zip(self.cells) {
            m.serialize_entry(c, v)?;
        }
        m.end()
    }
}

impl Serialize for Table {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Row> = self
            .rows
            .iter()
            .map(|r| Row {
                columns: &self.columns,
                cells: r,
            })
            .collect();
        let mut st = s.serialize_struct("Table", 3 + self.extra.len())?;
        st.serialize_field("command", self.command)?;
        st.serialize_field("meta", &self.meta)?;
        match &self.json_records {
            Some(v) => st.serialize_field("records", v)?,
            None => st.serialize_field("records", &rows)?,
        }
        for (k, v) in &self.extra {
            st.serialize_field(k, v)?;
        }
        st.end()
    }
}
