//! JSON Lines records exchanged between pipeline stages.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::datamodel::{Edge, EdgeTag, LinkGraph, RelationMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub example_id: String,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub normalized: bool,
    pub values: Vec<f64>,
}

impl MatrixRecord {
    pub fn new(example_id: impl Into<String>, matrix: &RelationMatrix) -> Self {
        Self {
            example_id: example_id.into(),
            rows: matrix.rows(),
            cols: matrix.cols(),
            normalized: matrix.is_normalized(),
            values: matrix.values().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<RelationMatrix> {
        RelationMatrix::new(self.rows, self.cols, self.values.clone(), self.normalized)
            .map_err(|e| Error::Validation(format!("matrix {:?}: {e}", self.example_id)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub example_id: String,
    pub n_question: usize,
    pub n_schema: usize,
    pub edges: Vec<(usize, usize, EdgeTag)>,
}

impl LinkRecord {
    pub fn new(example_id: impl Into<String>, graph: &LinkGraph) -> Self {
        Self {
            example_id: example_id.into(),
            n_question: graph.n_question(),
            n_schema: graph.n_schema(),
            edges: graph.edges().iter().map(|e| (e.question, e.schema, e.tag)).collect(),
        }
    }

    pub fn to_graph(&self) -> Result<LinkGraph> {
        LinkGraph::from_edges(
            self.n_question,
            self.n_schema,
            self.edges.iter().map(|&(question, schema, tag)| Edge { question, schema, tag }),
        )
        .map_err(|e| Error::Validation(format!("links {:?}: {e}", self.example_id)))
    }
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line).map_err(|e| Error::json(format!("{what} line {}", idx + 1), line, &e))
        })
        .collect()
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_jsonl(records)).map_err(|e| Error::io(path, e))
}
