use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the probing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: malformed JSON at byte offset {offset}: {message}")]
    Parse {
        context: String,
        offset: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("point outside the open unit ball (norm {norm})")]
    Domain { norm: f64 },

    #[error("non-finite value in {stage}")]
    NonFinite { stage: &'static str },

    #[error("non-finite embedding in example {example_id:?} at {}", describe_slot(*.question, *.schema))]
    NonFiniteEmbedding {
        example_id: String,
        question: Option<usize>,
        schema: usize,
    },

    #[error("bad dump format: {0}")]
    Format(String),

    #[error("truncated payload in {context}: expected {expected} bytes, found {actual}")]
    Truncated {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn describe_slot(question: Option<usize>, schema: usize) -> String {
    match question {
        Some(i) => format!("masked (i={i}, j={schema})"),
        None => format!("baseline (j={schema})"),
    }
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Input was well-formed but violated a domain invariant.
    Validation,
    /// Input could not be read or decoded.
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Validation(_)
            | Error::DimensionMismatch { .. }
            | Error::Domain { .. }
            | Error::NonFinite { .. }
            | Error::NonFiniteEmbedding { .. } => ErrorClass::Validation,
            Error::Parse { .. } | Error::Format(_) | Error::Truncated { .. } | Error::Io { .. } => {
                ErrorClass::Io
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Builds a parse error, translating serde_json's line/column into a byte offset of `text`.
    pub(crate) fn json(context: impl Into<String>, text: &str, err: &serde_json::Error) -> Self {
        Error::Parse {
            context: context.into(),
            offset: byte_offset(text, err.line(), err.column()),
            message: err.to_string(),
        }
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
