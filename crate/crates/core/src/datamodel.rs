//! Schemas, examples, relation matrices and link graphs, plus the loaders for
//! Spider-style `tables.json` catalogs and JSON Lines example files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Table,
    Column,
}

/// A table or column in the flattened tables-then-columns schema sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaItem {
    kind: ItemKind,
    name_tokens: Vec<String>,
    parent_table: Option<usize>,
    seq_index: usize,
}

impl SchemaItem {
    pub fn kind(&self) -> ItemKind {
        self.kind
    }

    pub fn name_tokens(&self) -> &[String] {
        &self.name_tokens
    }

    /// Sequence index of the owning table; `None` for tables.
    pub fn parent_table(&self) -> Option<usize> {
        self.parent_table
    }

    pub fn seq_index(&self) -> usize {
        self.seq_index
    }

    pub fn name(&self) -> String {
        self.name_tokens.join(" ")
    }
}

/// Lowercases a raw schema name and splits it on whitespace and underscores.
pub fn normalize_name(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '_')
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// A database schema flattened into `tables ++ columns`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    db_id: String,
    items: Vec<SchemaItem>,
    num_tables: usize,
}

impl Schema {
    /// Builds a schema from table names and `(table_index, name)` column pairs,
    /// both given as already-split name tokens.
    pub fn new(
        db_id: impl Into<String>,
        tables: Vec<Vec<String>>,
        columns: Vec<(usize, Vec<String>)>,
    ) -> Result<Self> {
        let db_id = db_id.into();
        if db_id.trim().is_empty() {
            return Err(Error::Validation("schema db_id is empty".into()));
        }
        if tables.is_empty() {
            return Err(Error::Validation(format!("schema {db_id:?} has no tables")));
        }
        if columns.is_empty() {
            return Err(Error::Validation(format!("schema {db_id:?} has no columns")));
        }
        let num_tables = tables.len();
        let mut items = Vec::with_capacity(num_tables + columns.len());
        for name_tokens in tables {
            check_tokens(&db_id, &name_tokens)?;
            items.push(SchemaItem {
                kind: ItemKind::Table,
                name_tokens,
                parent_table: None,
                seq_index: items.len(),
            });
        }
        for (table, name_tokens) in columns {
            check_tokens(&db_id, &name_tokens)?;
            if table >= num_tables {
                return Err(Error::Validation(format!(
                    "schema {db_id:?}: column {:?} references table {table}, but only {num_tables} tables exist",
                    name_tokens.join(" ")
                )));
            }
            items.push(SchemaItem {
                kind: ItemKind::Column,
                name_tokens,
                parent_table: Some(table),
                seq_index: items.len(),
            });
        }
        Ok(Self {
            db_id,
            items,
            num_tables,
        })
    }

    pub fn db_id(&self) -> &str {
        &self.db_id
    }

    pub fn items(&self) -> &[SchemaItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn num_tables(&self) -> usize {
        self.num_tables
    }

    pub fn num_columns(&self) -> usize {
        self.items.len() - self.num_tables
    }

    /// Display label: the table name for tables, `table.column` for columns.
    pub fn item_label(&self, index: usize) -> String {
        let item = &self.items[index];
        match item.parent_table {
            Some(t) => format!("{}.{}", self.items[t].name_tokens.join("_"), item.name_tokens.join("_")),
            None => item.name_tokens.join("_"),
        }
    }

    /// Serializes back into a single Spider `tables.json` entry.
    pub fn to_spider_value(&self) -> serde_json::Value {
        let tables: Vec<String> = self.items[..self.num_tables].iter().map(SchemaItem::name).collect();
        let columns: Vec<(i64, String)> = self.items[self.num_tables..]
            .iter()
            .map(|c| (c.parent_table.expect("column has a parent") as i64, c.name()))
            .collect();
        serde_json::json!({
            "db_id": self.db_id,
            "table_names_original": tables,
            "column_names_original": columns,
        })
    }
}

fn check_tokens(db_id: &str, tokens: &[String]) -> Result<()> {
    if tokens.is_empty() || tokens.iter().any(|t| t.trim().is_empty()) {
        return Err(Error::Validation(format!(
            "schema {db_id:?} contains an item with an empty name token ({tokens:?})"
        )));
    }
    Ok(())
}

#[derive(Deserialize)]
struct SpiderEntry {
    db_id: String,
    table_names_original: Vec<String>,
    column_names_original: Vec<(i64, String)>,
}

/// Parses the contents of a Spider `tables.json` file.
pub fn parse_spider_schemas(text: &str) -> Result<Vec<Schema>> {
    let entries: Vec<SpiderEntry> =
        serde_json::from_str(text).map_err(|e| Error::json("tables.json", text, &e))?;
    entries.into_iter().map(schema_from_entry).collect()
}

fn schema_from_entry(entry: SpiderEntry) -> Result<Schema> {
    let tables = entry.table_names_original.iter().map(|n| normalize_name(n)).collect();
    let mut columns = Vec::with_capacity(entry.column_names_original.len());
    for (table, name) in &entry.column_names_original {
        if *table == -1 && name == "*" {
            continue;
        }
        let table = usize::try_from(*table).map_err(|_| {
            Error::Validation(format!(
                "schema {:?}: column {name:?} has invalid table index {table}",
                entry.db_id
            ))
        })?;
        columns.push((table, normalize_name(name)));
    }
    Schema::new(entry.db_id, tables, columns)
}

pub fn load_spider_schemas(path: impl AsRef<Path>) -> Result<Vec<Schema>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spider_schemas(&text)
}

/// Schemas keyed by `db_id`.
#[derive(Debug, Clone, Default)]
pub struct SchemaCatalog {
    schemas: BTreeMap<String, Arc<Schema>>,
}

impl SchemaCatalog {
    pub fn new(schemas: impl IntoIterator<Item = Schema>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for schema in schemas {
            let id = schema.db_id.clone();
            if map.insert(id.clone(), Arc::new(schema)).is_some() {
                return Err(Error::Validation(format!("duplicate db_id {id:?} in schema catalog")));
            }
        }
        Ok(Self { schemas: map })
    }

    pub fn get(&self, db_id: &str) -> Option<&Arc<Schema>> {
        self.schemas.get(db_id)
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }
}

/// Gold `(question index, schema index)` alignments for one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldLinks {
    n_question: usize,
    n_schema: usize,
    pairs: BTreeSet<(usize, usize)>,
}

impl GoldLinks {
    pub fn new(
        n_question: usize,
        n_schema: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let pairs: BTreeSet<_> = pairs.into_iter().collect();
        if let Some(&(q, s)) = pairs.iter().find(|&&(q, s)| q >= n_question || s >= n_schema) {
            return Err(Error::Validation(format!(
                "gold link ({q}, {s}) out of range for {n_question} question tokens and {n_schema} schema items"
            )));
        }
        Ok(Self {
            n_question,
            n_schema,
            pairs,
        })
    }

    pub fn n_question(&self) -> usize {
        self.n_question
    }

    pub fn n_schema(&self) -> usize {
        self.n_schema
    }

    pub fn pairs(&self) -> &BTreeSet<(usize, usize)> {
        &self.pairs
    }
}

/// A pre-tokenized question bound to its schema.
#[derive(Debug, Clone)]
pub struct ProbeExample {
    example_id: String,
    question_tokens: Vec<String>,
    schema: Arc<Schema>,
    gold_links: Option<GoldLinks>,
}

impl ProbeExample {
    pub fn new(
        example_id: impl Into<String>,
        question_tokens: Vec<String>,
        schema: Arc<Schema>,
        gold_links: Option<Vec<(usize, usize)>>,
    ) -> Result<Self> {
        let example_id = example_id.into();
        if question_tokens.is_empty() {
            return Err(Error::Validation(format!("example {example_id:?} has an empty question")));
        }
        if let Some(pos) = question_tokens.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::Validation(format!(
                "example {example_id:?}: question token {pos} is empty"
            )));
        }
        let gold_links = gold_links
            .map(|pairs| GoldLinks::new(question_tokens.len(), schema.len(), pairs))
            .transpose()
            .map_err(|e| Error::Validation(format!("example {example_id:?}: {e}")))?;
        Ok(Self {
            example_id,
            question_tokens,
            schema,
            gold_links,
        })
    }

    pub fn example_id(&self) -> &str {
        &self.example_id
    }

    pub fn question_tokens(&self) -> &[String] {
        &self.question_tokens
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn gold_links(&self) -> Option<&GoldLinks> {
        self.gold_links.as_ref()
    }

    pub fn n_question(&self) -> usize {
        self.question_tokens.len()
    }

    pub fn n_schema(&self) -> usize {
        self.schema.len()
    }
}

#[derive(Deserialize)]
struct ExampleLine {
    example_id: String,
    db_id: String,
    question_tokens: Vec<String>,
    #[serde(default)]
    gold_links: Option<Vec<(usize, usize)>>,
}

/// Parses a JSON Lines examples file. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_examples(text: &str, catalog: &SchemaCatalog) -> Result<Vec<ProbeExample>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: ExampleLine = serde_json::from_str(line)
            .map_err(|e| Error::json(format!("examples line {lineno}"), line, &e))?;
        let schema = catalog.get(&record.db_id).ok_or_else(|| {
            Error::Validation(format!("line {lineno}: unknown db_id {:?}", record.db_id))
        })?;
        let example = ProbeExample::new(
            record.example_id,
            record.question_tokens,
            Arc::clone(schema),
            record.gold_links,
        )
        .map_err(|e| Error::Validation(format!("line {lineno}: {e}")))?;
        out.push(example);
    }
    Ok(out)
}

pub fn load_examples(path: impl AsRef<Path>, catalog: &SchemaCatalog) -> Result<Vec<ProbeExample>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_examples(&text, catalog)
}

/// Row-major `|Q| x |S|` matrix of probe scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    normalized: bool,
}

impl RelationMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, normalized: bool) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "relation matrix values",
                expected: rows * cols,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "relation matrix entry ({}, {}) = {} is not a finite non-negative number",
                pos / cols.max(1),
                pos % cols.max(1),
                values[pos]
            )));
        }
        if normalized {
            if let Some(pos) = values.iter().position(|v| *v > 1.0) {
                return Err(Error::Validation(format!(
                    "normalized relation matrix entry ({}, {}) = {} exceeds 1",
                    pos / cols,
                    pos % cols,
                    values[pos]
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            values,
            normalized,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

/// Kind of a question-to-schema edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeTag {
    ProbeLink,
    ExactMatch,
    PartialMatch,
}

impl fmt::Display for EdgeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeTag::ProbeLink => "probe_link",
            EdgeTag::ExactMatch => "exact_match",
            EdgeTag::PartialMatch => "partial_match",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub question: usize,
    pub schema: usize,
    pub tag: EdgeTag,
}

/// Typed edges between question positions and schema positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkGraph {
    n_question: usize,
    n_schema: usize,
    edges: BTreeSet<Edge>,
}

impl LinkGraph {
    pub fn new(n_question: usize, n_schema: usize) -> Self {
        Self {
            n_question,
            n_schema,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(
        n_question: usize,
        n_schema: usize,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<Self> {
        let mut graph = Self::new(n_question, n_schema);
        for edge in edges {
            graph.insert(edge)?;
        }
        Ok(graph)
    }

    /// Adds an edge; returns whether it was new.
    pub fn insert(&mut self, edge: Edge) -> Result<bool> {
        if edge.question >= self.n_question || edge.schema >= self.n_schema {
            return Err(Error::Validation(format!(
                "edge ({}, {}) out of range for a {}x{} graph",
                edge.question, edge.schema, self.n_question, self.n_schema
            )));
        }
        Ok(self.edges.insert(edge))
    }

    pub fn n_question(&self) -> usize {
        self.n_question
    }

    pub fn n_schema(&self) -> usize {
        self.n_schema
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Untyped `(question, schema)` pairs carrying at least one edge.
    pub fn pairs(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|e| (e.question, e.schema)).collect()
    }

    pub fn tags_at(&self, question: usize, schema: usize) -> impl Iterator<Item = EdgeTag> + '_ {
        self.edges
            .iter()
            .filter(move |e| e.question == question && e.schema == schema)
            .map(|e| e.tag)
    }

    /// Binary adjacency over `ProbeLink` edges, row-major `|Q| x |S|`.
    pub fn probe_adjacency(&self) -> Vec<u8> {
        let mut adj = vec![0u8; self.n_question * self.n_schema];
        for e in self.edges.iter().filter(|e| e.tag == EdgeTag::ProbeLink) {
            adj[e.question * self.n_schema + e.schema] = 1;
        }
        adj
    }
}
