//! Schemas, records, tables and labeled pairs, plus their CSV ingestion.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csv;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: Vec<String>,
    id_index: usize,
}

impl Schema {
    pub fn new(columns: Vec<String>, id_column: &str) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if c.is_empty() {
                return Err(Error::format(1, "empty attribute name in header"));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::format(1, format!("duplicate attribute name {c:?}")));
            }
        }
        let id_index = columns
            .iter()
            .position(|c| c == id_column)
            .ok_or_else(|| Error::format(1, format!("id column {id_column:?} not in header")))?;
        Ok(Self { columns, id_index })
    }

    /// All columns in file order, id included.
    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn id_column(&self) -> &str {
        &self.columns[self.id_index]
    }

    pub fn id_index(&self) -> usize {
        self.id_index
    }

    /// Non-id attribute names, in order.
    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.columns
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != self.id_index)
            .map(|(_, c)| c.as_str())
    }

    /// Number of non-id attributes.
    pub fn arity(&self) -> usize {
        self.columns.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: String,
    /// One entry per non-id attribute; `None` is an absent value.
    pub values: Vec<Option<String>>,
}

impl Record {
    pub fn new(id: impl Into<String>, values: Vec<Option<String>>) -> Self {
        Self {
            id: id.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    schema: Schema,
    records: Vec<Record>,
    by_id: HashMap<String, usize>,
}

impl Table {
    pub fn new(schema: Schema, records: Vec<Record>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.values.len() != schema.arity() {
                return Err(Error::Integrity(format!(
                    "record {:?} has {} values, schema has {} attributes",
                    r.id,
                    r.values.len(),
                    schema.arity()
                )));
            }
            if by_id.insert(r.id.clone(), i).is_some() {
                return Err(Error::Integrity(format!("duplicate record id {:?}", r.id)));
            }
        }
        Ok(Self {
            schema,
            records,
            by_id,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let header: Vec<Option<&str>> = self.schema.columns.iter().map(|c| Some(c.as_str())).collect();
        csv::write_row(w, &header)?;
        let id_index = self.schema.id_index;
        for r in &self.records {
            let mut cells: Vec<Option<&str>> = Vec::with_capacity(self.schema.columns.len());
            let mut values = r.values.iter();
            for col in 0..self.schema.columns.len() {
                if col == id_index {
                    cells.push(Some(&r.id));
                } else {
                    cells.push(values.next().and_then(|v| v.as_deref()));
                }
            }
            csv::write_row(w, &cells)?;
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_table(path: impl AsRef<Path>, id_column: &str) -> Result<Table> {
    let path = path.as_ref();
    parse_table(&read_text(path)?, id_column)
}

pub fn parse_table(text: &str, id_column: &str) -> Result<Table> {
    let mut rows = csv::parse(text)?.into_iter();
    let header = rows
        .next()
        .ok_or_else(|| Error::format(None, "missing header row"))?;
    let columns: Vec<String> = header.fields.into_iter().map(|f| f.text).collect();
    let schema = Schema::new(columns, id_column)?;
    let width = schema.columns.len();

    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for row in rows {
        if row.fields.len() != width {
            return Err(Error::format(
                row.line,
                format!("expected {width} fields, found {}", row.fields.len()),
            ));
        }
        let mut id = None;
        let mut values = Vec::with_capacity(width - 1);
        for (col, field) in row.fields.into_iter().enumerate() {
            if col == schema.id_index {
                id = field.into_value();
            } else {
                values.push(field.into_value());
            }
        }
        let id = id.ok_or_else(|| Error::format(row.line, "missing record id"))?;
        if let Some(first) = seen.insert(id.clone(), row.line) {
            return Err(Error::Integrity(format!(
                "duplicate record id {id:?} (lines {first} and {})",
                row.line
            )));
        }
        records.push(Record { id, values });
    }
    Table::new(schema, records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Match,
    NonMatch,
}

impl Label {
    pub fn is_match(self) -> bool {
        self == Label::Match
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Match => Label::NonMatch,
            Label::NonMatch => Label::Match,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledPair {
    pub left_id: String,
    pub right_id: String,
    pub label: Label,
}

impl LabeledPair {
    pub fn new(left_id: impl Into<String>, right_id: impl Into<String>, label: Label) -> Self {
        Self {
            left_id: left_id.into(),
            right_id: right_id.into(),
            label,
        }
    }
}

/// Whether matching runs within one table (deduplication) or across two
/// (record linkage). In dedup mode pairs are unordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Linkage {
    Dedup,
    Link,
}

impl Linkage {
    /// Canonical key for a pair: sorted in dedup mode, as given otherwise.
    pub fn key(self, left: &str, right: &str) -> (String, String) {
        match self {
            Linkage::Dedup if right < left => (right.to_owned(), left.to_owned()),
            _ => (left.to_owned(), right.to_owned()),
        }
    }
}

pub fn load_matches(path: impl AsRef<Path>) -> Result<Vec<LabeledPair>> {
    let path = path.as_ref();
    parse_matches(&read_text(path)?)
}

pub fn parse_matches(text: &str) -> Result<Vec<LabeledPair>> {
    let mut rows = csv::parse(text)?.into_iter();
    let header = rows
        .next()
        .ok_or_else(|| Error::format(None, "missing header row"))?;
    if header.fields.len() != 2 {
        return Err(Error::format(
            header.line,
            format!("matches header must have 2 columns, found {}", header.fields.len()),
        ));
    }
    rows.map(|row| {
        if row.fields.len() != 2 {
            return Err(Error::format(
                row.line,
                format!("expected 2 fields, found {}", row.fields.len()),
            ));
        }
        let mut it = row.fields.into_iter().map(|f| f.text);
        let (l, r) = (it.next().unwrap(), it.next().unwrap());
        if l.is_empty() || r.is_empty() {
            return Err(Error::format(row.line, "empty id in matches file"));
        }
        Ok(LabeledPair::new(l, r, Label::Match))
    })
    .collect()
}

/// Writes a positives file; labels are not stored, every pair reads back as
/// a match.
pub fn write_matches<W: Write>(w: &mut W, pairs: &[LabeledPair]) -> io::Result<()> {
    csv::write_row(w, &[Some("left_id"), Some("right_id")])?;
    for p in pairs {
        csv::write_row(w, &[Some(p.left_id.as_str()), Some(p.right_id.as_str())])?;
    }
    Ok(())
}

/// Checks every pair against the tables. With `right == None` both ids must
/// come from `left`.
pub fn validate_pairs(pairs: &[LabeledPair], left: &Table, right: Option<&Table>) -> Result<()> {
    let right = right.unwrap_or(left);
    let bad: Vec<String> = pairs
        .iter()
        .filter(|p| left.get(&p.left_id).is_none() || right.get(&p.right_id).is_none())
        .take(10)
        .map(|p| format!("({}, {})", p.left_id, p.right_id))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Integrity(format!("pairs reference unknown ids: {}", bad.join(", "))))
    }
}

/// Positional correspondence between the non-id attributes of two tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeCorrespondence {
    pub pairs: Vec<(String, String)>,
}

pub fn align_schemas(left: &Table, right: &Table) -> Result<AttributeCorrespondence> {
    let (l, r) = (left.schema(), right.schema());
    if l.arity() != r.arity() {
        return Err(Error::Alignment(format!(
            "left has {} attributes, right has {}",
            l.arity(),
            r.arity()
        )));
    }
    Ok(AttributeCorrespondence {
        pairs: l
            .attributes()
            .zip(r.attributes())
            .map(|(a, b)| (a.to_owned(), b.to_owned()))
            .collect(),
    })
}
