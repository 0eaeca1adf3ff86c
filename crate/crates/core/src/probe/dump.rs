//! Binary embedding dump files.
//!
//! Each record is laid out as (all integers little-endian):
//!
//! ```text
//! "PRBD" | version: u32 = 1 | header_len: u32 | header: UTF-8 JSON | payload
//! ```
//!
//! The header carries `example_id`, `dim`, `num_question_tokens`,
//! `num_schema_items`, `dtype = "f32le"` and
//! `order = "baseline_then_masked_i_major"`. The payload holds `|S| * dim`
//! baseline floats followed by `|Q| * |S| * dim` masked floats, each an IEEE-754
//! binary32. Records are concatenated back to back.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::relation::EmbeddingSet;

pub const MAGIC: &[u8; 4] = b"PRBD";
pub const VERSION: u32 = 1;
pub const DTYPE: &str = "f32le";
pub const ORDER: &str = "baseline_then_masked_i_major";

const PREAMBLE_LEN: usize = 12;

#[derive(Debug, Serialize, Deserialize)]
struct RecordHeader {
    example_id: String,
    dim: usize,
    num_question_tokens: usize,
    num_schema_items: usize,
    dtype: String,
    order: String,
}

/// Encodes one record. Values are narrowed to `f32`.
pub fn encode_record(set: &EmbeddingSet) -> Vec<u8> {
    let header = serde_json::to_vec(&RecordHeader {
        example_id: set.example_id().to_owned(),
        dim: set.dim(),
        num_question_tokens: set.n_question(),
        num_schema_items: set.n_schema(),
        dtype: DTYPE.to_owned(),
        order: ORDER.to_owned(),
    })
    .expect("header serializes");
    let floats = set.baseline_flat().len() + set.masked_flat().len();
    let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + 4 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for v in set.baseline_flat().iter().chain(set.masked_flat()) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn write_dump<W: Write>(mut writer: W, sets: &[EmbeddingSet]) -> std::io::Result<()> {
    for set in sets {
        writer.write_all(&encode_record(set))?;
    }
    writer.flush()
}

pub fn write_dump_file(path: impl AsRef<Path>, sets: &[EmbeddingSet]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dump(std::io::BufWriter::new(file), sets).map_err(|e| Error::io(path, e))
}

fn take<'a>(bytes: &'a [u8], at: usize, len: usize, context: &str) -> Result<&'a [u8]> {
    let available = bytes.len().saturating_sub(at);
    if available < len {
        return Err(Error::Truncated {
            context: context.to_owned(),
            expected: len,
            actual: available,
        });
    }
    Ok(&bytes[at..at + len])
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Decodes every record in `bytes`.
pub fn decode_dump(bytes: &[u8]) -> Result<Vec<EmbeddingSet>> {
    let mut sets = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let record = sets.len();
        let preamble = take(bytes, at, PREAMBLE_LEN, &format!("record {record} preamble"))?;
        if &preamble[..4] != MAGIC {
            return Err(Error::Format(format!(
                "record {record} at byte {at}: bad magic {:?}",
                &preamble[..4]
            )));
        }
        let version = u32_at(preamble, 4);
        if version != VERSION {
            return Err(Error::Format(format!(
                "record {record}: unsupported version {version} (expected {VERSION})"
            )));
        }
        let header_len = u32_at(preamble, 8) as usize;
        at += PREAMBLE_LEN;

        let header_bytes = take(bytes, at, header_len, &format!("record {record} header"))?;
        let header: RecordHeader = serde_json::from_slice(header_bytes)
            .map_err(|e| Error::Format(format!("record {record}: bad header: {e}")))?;
        if header.dtype != DTYPE || header.order != ORDER {
            return Err(Error::Format(format!(
                "record {record}: unsupported dtype/order {:?}/{:?}",
                header.dtype, header.order
            )));
        }
        at += header_len;

        let (d, nq, ns) = (header.dim, header.num_question_tokens, header.num_schema_items);
        let n_floats = d
            .checked_mul(ns)
            .and_then(|b| nq.checked_mul(b).and_then(|m| m.checked_add(b)))
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| Error::Format(format!("record {record}: header sizes overflow")))?;
        let payload = take(
            bytes,
            at,
            4 * n_floats,
            &format!("record {record} ({:?}) payload", header.example_id),
        )?;
        at += 4 * n_floats;

        let mut values = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
        let baseline: Vec<f64> = values.by_ref().take(ns * d).collect();
        let masked: Vec<f64> = values.collect();
        let set = EmbeddingSet::new(header.example_id, d, nq, ns, baseline, masked).map_err(
            |e| match e {
                e @ Error::NonFiniteEmbedding { .. } => e,
                other => Error::Format(format!("record {record}: {other}")),
            },
        )?;
        sets.push(set);
    }
    Ok(sets)
}

pub fn read_embedding_dump(path: impl AsRef<Path>) -> Result<Vec<EmbeddingSet>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dump(&bytes)
}
