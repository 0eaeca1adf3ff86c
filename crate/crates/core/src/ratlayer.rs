//! Forward pass of a single relation-aware self-attention layer.
//!
//! Question/schema links enter the layer as per-pair relation embeddings that
//! are added to the key and value projections before attention is taken.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};

use crate::datamodel::{EdgeTag, LinkGraph};
use crate::error::{Error, Result};
use crate::rng::{stable_hash, SplitMix64};

/// Relation between two nodes of the joint question/schema sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    NoRelation,
    /// From a question token to a schema item.
    Forward(EdgeTag),
    /// From a schema item back to a question token.
    Backward(EdgeTag),
}

const TAGS: [EdgeTag; 3] = [EdgeTag::ProbeLink, EdgeTag::ExactMatch, EdgeTag::PartialMatch];

impl Relation {
    pub const COUNT: usize = 1 + 2 * TAGS.len();

    pub fn index(self) -> usize {
        let tag_index = |t: EdgeTag| TAGS.iter().position(|&x| x == t).expect("known tag");
        match self {
            Relation::NoRelation => 0,
            Relation::Forward(t) => 1 + tag_index(t),
            Relation::Backward(t) => 1 + TAGS.len() + tag_index(t),
        }
    }

    pub fn all() -> impl Iterator<Item = Relation> {
        std::iter::once(Relation::NoRelation)
            .chain(TAGS.iter().map(|&t| Relation::Forward(t)))
            .chain(TAGS.iter().map(|&t| Relation::Backward(t)))
    }
}

fn precedence(tag: EdgeTag) -> u8 {
    match tag {
        EdgeTag::ExactMatch => 2,
        EdgeTag::PartialMatch => 1,
        EdgeTag::ProbeLink => 0,
    }
}

/// Square `n x n` matrix of relations, with question nodes first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationTags {
    n: usize,
    tags: Vec<Relation>,
}

impl RelationTags {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            tags: vec![Relation::NoRelation; n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Relation) -> Self {
        Self {
            n,
            tags: (0..n * n).map(|k| f(k / n, k % n)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Relation {
        self.tags[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, rel: Relation) {
        self.tags[i * self.n + j] = rel;
    }

    /// Reorders nodes so that new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::from_fn(self.n, |i, j| self.get(perm[i], perm[j]))
    }

    pub fn count_related(&self) -> usize {
        self.tags.iter().filter(|&&r| r != Relation::NoRelation).count()
    }
}

/// Places each question/schema edge at `(i, n_question + j)` and its mirror at
/// `(n_question + j, i)`. Pairs with several tags keep the highest-precedence
/// one: `ExactMatch`, then `PartialMatch`, then `ProbeLink`.
pub fn relations_from_graph(graph: &LinkGraph, n_question: usize, n_schema: usize) -> Result<RelationTags> {
    if graph.n_question() != n_question || graph.n_schema() != n_schema {
        return Err(Error::Validation(format!(
            "graph is {}x{} but the sequence has {n_question} question tokens and {n_schema} schema items",
            graph.n_question(),
            graph.n_schema()
        )));
    }
    let mut tags = RelationTags::empty(n_question + n_schema);
    for edge in graph.edges() {
        let (q, s) = (edge.question, n_question + edge.schema);
        let keep = match tags.get(q, s) {
            Relation::Forward(existing) => precedence(edge.tag) > precedence(existing),
            _ => true,
        };
        if keep {
            tags.set(q, s, Relation::Forward(edge.tag));
            tags.set(s, q, Relation::Backward(edge.tag));
        }
    }
    Ok(tags)
}

/// Key-side and value-side embedding per relation, shared across heads.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationVocabulary {
    key: Array2<f64>,
    value: Array2<f64>,
}

impl RelationVocabulary {
    /// `key` and `value` have one row per [`Relation::index`]; row 0
    /// (`NoRelation`) must be zero.
    pub fn new(key: Array2<f64>, value: Array2<f64>) -> Result<Self> {
        for (name, m) in [("key", &key), ("value", &value)] {
            if m.nrows() != Relation::COUNT {
                return Err(Error::DimensionMismatch {
                    context: "relation vocabulary rows",
                    expected: Relation::COUNT,
                    actual: m.nrows(),
                });
            }
            if m.row(0).iter().any(|&v| v != 0.0) {
                return Err(Error::Validation(format!(
                    "{name} embedding for NoRelation must be zero"
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { stage: "relation vocabulary" });
            }
        }
        if key.ncols() != value.ncols() {
            return Err(Error::DimensionMismatch {
                context: "relation vocabulary width",
                expected: key.ncols(),
                actual: value.ncols(),
            });
        }
        Ok(Self { key, value })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            key: Array2::zeros((Relation::COUNT, dim)),
            value: Array2::zeros((Relation::COUNT, dim)),
        }
    }

    /// Uniform entries in `[-scale, scale)`, rounded to `f32`.
    pub fn seeded(dim: usize, seed: u64, scale: f64) -> Self {
        let mut rng = SplitMix64::new(stable_hash(seed, &["relation-vocabulary"]));
        let mut draw = || {
            let mut m = Array2::from_shape_fn((Relation::COUNT, dim), |_| {
                f64::from((rng.next_signed() * scale) as f32)
            });
            m.row_mut(0).fill(0.0);
            m
        };
        let key = draw();
        let value = draw();
        Self { key, value }
    }

    pub fn dim(&self) -> usize {
        self.key.ncols()
    }

    pub fn key(&self, rel: Relation) -> ArrayView1<'_, f64> {
        self.key.row(rel.index())
    }

    pub fn value(&self, rel: Relation) -> ArrayView1<'_, f64> {
        self.value.row(rel.index())
    }
}

/// Layer sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatConfig {
    pub d_x: usize,
    pub heads: usize,
    pub d_ff: usize,
}

impl Default for RatConfig {
    fn default() -> Self {
        Self {
            d_x: 256,
            heads: 8,
            d_ff: 1024,
        }
    }
}

impl RatConfig {
    pub fn head_dim(&self) -> usize {
        self.d_x / self.heads
    }

    fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_x == 0 || self.d_ff == 0 || !self.d_x.is_multiple_of(self.heads) {
            return Err(Error::Validation(format!(
                "invalid layer sizes d_x={} heads={} d_ff={} (d_x must be a positive multiple of heads)",
                self.d_x, self.heads, self.d_ff
            )));
        }
        Ok(())
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
}

impl LayerNorm {
    pub fn identity(dim: usize) -> Self {
        Self {
            scale: Array1::ones(dim),
            shift: Array1::zeros(dim),
        }
    }

    /// Normalizes each row to zero mean and unit (biased) variance, then applies scale and shift.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * self.scale[k] + self.shift[k];
            }
        }
        out
    }
}

/// Weights of one layer. Projections are stored per head as `d_x x d_x/H`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatParams {
    config: RatConfig,
    pub w_q: Vec<Array2<f64>>,
    pub w_k: Vec<Array2<f64>>,
    pub w_v: Vec<Array2<f64>>,
    pub fc1: Array2<f64>,
    pub b1: Array1<f64>,
    pub fc2: Array2<f64>,
    pub b2: Array1<f64>,
    pub norm1: LayerNorm,
    pub norm2: LayerNorm,
}

impl RatParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        config: RatConfig,
        w_q: Vec<Array2<f64>>,
        w_k: Vec<Array2<f64>>,
        w_v: Vec<Array2<f64>>,
        fc1: Array2<f64>,
        b1: Array1<f64>,
        fc2: Array2<f64>,
        b2: Array1<f64>,
        norm1: LayerNorm,
        norm2: LayerNorm,
    ) -> Result<Self> {
        let params = Self {
            config,
            w_q,
            w_k,
            w_v,
            fc1,
            b1,
            fc2,
            b2,
            norm1,
            norm2,
        };
        params.validate()?;
        Ok(params)
    }

    /// Glorot-style uniform weights and unit layer norms, rounded to `f32`
    /// so they survive the fixture format unchanged.
    pub fn seeded(config: RatConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::new(stable_hash(seed, &["rat-params"]));
        let mut uniform = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| f64::from((rng.next_signed() * limit) as f32))
        };
        let (d_x, dk, d_ff) = (config.d_x, config.head_dim(), config.d_ff);
        let w_q = (0..config.heads).map(|_| uniform(d_x, dk)).collect();
        let w_k = (0..config.heads).map(|_| uniform(d_x, dk)).collect();
        let w_v = (0..config.heads).map(|_| uniform(d_x, dk)).collect();
        let fc1 = uniform(d_x, d_ff);
        let b1 = uniform(1, d_ff).row(0).to_owned();
        let fc2 = uniform(d_ff, d_x);
        let b2 = uniform(1, d_x).row(0).to_owned();
        Self::new(
            config,
            w_q,
            w_k,
            w_v,
            fc1,
            b1,
            fc2,
            b2,
            LayerNorm::identity(d_x),
            LayerNorm::identity(d_x),
        )
    }

    pub fn config(&self) -> RatConfig {
        self.config
    }

    fn validate(&self) -> Result<()> {
        let c = self.config;
        c.validate()?;
        let (d_x, dk, d_ff) = (c.d_x, c.head_dim(), c.d_ff);
        let shape_err = |what: &str, expected: (usize, usize), actual: (usize, usize)| {
            Error::Validation(format!("{what} has shape {actual:?}, expected {expected:?}"))
        };
        for (name, ws) in [("w_q", &self.w_q), ("w_k", &self.w_k), ("w_v", &self.w_v)] {
            if ws.len() != c.heads {
                return Err(Error::DimensionMismatch {
                    context: "projection heads",
                    expected: c.heads,
                    actual: ws.len(),
                });
            }
            for w in ws {
                if w.dim() != (d_x, dk) {
                    return Err(shape_err(name, (d_x, dk), w.dim()));
                }
            }
        }
        if self.fc1.dim() != (d_x, d_ff) {
            return Err(shape_err("fc1", (d_x, d_ff), self.fc1.dim()));
        }
        if self.fc2.dim() != (d_ff, d_x) {
            return Err(shape_err("fc2", (d_ff, d_x), self.fc2.dim()));
        }
        if self.b1.len() != d_ff || self.b2.len() != d_x {
            return Err(Error::Validation("feed-forward bias length mismatch".into()));
        }
        for ln in [&self.norm1, &self.norm2] {
            if ln.scale.len() != d_x || ln.shift.len() != d_x {
                return Err(Error::Validation("layer norm length mismatch".into()));
            }
        }
        let all_finite = self
            .w_q
            .iter()
            .chain(&self.w_k)
            .chain(&self.w_v)
            .chain([&self.fc1, &self.fc2])
            .all(|m| m.iter().all(|v| v.is_finite()))
            && [&self.b1, &self.b2, &self.norm1.scale, &self.norm1.shift, &self.norm2.scale, &self.norm2.shift]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()));
        if !all_finite {
            return Err(Error::NonFinite { stage: "layer parameters" });
        }
        Ok(())
    }
}

/// Layer output plus the per-head attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RatOutput {
    pub outputs: Array2<f64>,
    pub attention: Vec<Array2<f64>>,
}

fn ensure_finite(stage: &'static str, m: &Array2<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { stage });
    }
    Ok(())
}

/// Runs the layer over `inputs` (`n x d_x`).
pub fn rat_forward(
    inputs: &Array2<f64>,
    tags: &RelationTags,
    vocab: &RelationVocabulary,
    params: &RatParams,
) -> Result<RatOutput> {
    let config = params.config;
    let (n, d_x) = inputs.dim();
    let dk = config.head_dim();
    if n == 0 {
        return Err(Error::Validation("relation-aware layer needs at least one input".into()));
    }
    if d_x != config.d_x {
        return Err(Error::DimensionMismatch {
            context: "layer input width",
            expected: config.d_x,
            actual: d_x,
        });
    }
    if tags.len() != n {
        return Err(Error::DimensionMismatch {
            context: "relation matrix size",
            expected: n,
            actual: tags.len(),
        });
    }
    if vocab.dim() != dk {
        return Err(Error::DimensionMismatch {
            context: "relation embedding width",
            expected: dk,
            actual: vocab.dim(),
        });
    }
    ensure_finite("layer inputs", inputs)?;

    let scale = (dk as f64).sqrt();
    let mut heads = Vec::with_capacity(config.heads);
    let mut attention = Vec::with_capacity(config.heads);
    for h in 0..config.heads {
        let q = inputs.dot(&params.w_q[h]);
        let k = inputs.dot(&params.w_k[h]);
        let v = inputs.dot(&params.w_v[h]);

        let mut logits = Array2::zeros((n, n));
        for i in 0..n {
            let qi = q.row(i);
            for j in 0..n {
                let rk = vocab.key(tags.get(i, j));
                let kj = k.row(j);
                logits[[i, j]] = (0..dk).map(|c| qi[c] * (kj[c] + rk[c])).sum::<f64>() / scale;
            }
        }
        ensure_finite("attention logits", &logits)?;

        let mut alpha = logits;
        for mut row in alpha.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|e| (e - max).exp());
            let total = row.sum();
            row.mapv_inplace(|e| e / total);
        }
        ensure_finite("attention weights", &alpha)?;

        let mut z = Array2::zeros((n, dk));
        for i in 0..n {
            let mut zi = z.row_mut(i);
            for j in 0..n {
                let a = alpha[[i, j]];
                let rv = vocab.value(tags.get(i, j));
                let vj = v.row(j);
                for c in 0..dk {
                    zi[c] += a * (vj[c] + rv[c]);
                }
            }
        }
        ensure_finite("head outputs", &z)?;
        heads.push(z);
        attention.push(alpha);
    }

    let views: Vec<_> = heads.iter().map(|h| h.view()).collect();
    let z = concatenate(Axis(1), &views).expect("heads share row count");

    let y_mid = params.norm1.apply(&(inputs + &z));
    ensure_finite("attention residual norm", &y_mid)?;

    let hidden = (y_mid.dot(&params.fc1) + &params.b1).mapv(|v| v.max(0.0));
    let ff = hidden.dot(&params.fc2) + &params.b2;
    let outputs = params.norm2.apply(&(&y_mid + &ff));
    ensure_finite("feed-forward residual norm", &outputs)?;

    Ok(RatOutput { outputs, attention })
}

/// Layer parameters and relation vocabulary in one fixture file.
#[derive(Debug, Clone, PartialEq)]
pub struct RatFixture {
    pub params: RatParams,
    pub vocab: RelationVocabulary,
}

const FIXTURE_MAGIC: &[u8; 4] = b"RATP";
const FIXTURE_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_matrix(out: &mut Vec<u8>, m: &Array2<f64>) {
    put_u32(out, 2);
    put_u32(out, m.nrows());
    put_u32(out, m.ncols());
    for v in m.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

fn put_vector(out: &mut Vec<u8>, v: &Array1<f64>) {
    put_u32(out, 1);
    put_u32(out, v.len());
    for x in v.iter() {
        out.extend_from_slice(&(*x as f32).to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        let available = self.bytes.len() - self.at;
        if available < len {
            return Err(Error::Truncated {
                context: "layer fixture".into(),
                expected: len,
                actual: available,
            });
        }
        let out = &self.bytes[self.at..self.at + len];
        self.at += len;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn floats(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(count.checked_mul(4).ok_or_else(|| Error::Format("fixture size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect())
    }

    fn matrix(&mut self, expected: (usize, usize)) -> Result<Array2<f64>> {
        let (ndim, rows, cols) = (self.u32()?, self.u32()?, self.u32()?);
        if ndim != 2 || (rows, cols) != expected {
            return Err(Error::Format(format!(
                "fixture tensor has shape {rows}x{cols} (ndim {ndim}), expected {}x{}",
                expected.0, expected.1
            )));
        }
        let data = self.floats(rows * cols)?;
        Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
    }

    fn vector(&mut self, expected: usize) -> Result<Array1<f64>> {
        let (ndim, len) = (self.u32()?, self.u32()?);
        if ndim != 1 || len != expected {
            return Err(Error::Format(format!(
                "fixture vector has length {len} (ndim {ndim}), expected {expected}"
            )));
        }
        Ok(Array1::from(self.floats(len)?))
    }
}

impl RatFixture {
    /// Versioned binary: magic `RATP`, version, `d_x`, heads, `d_ff`, then each
    /// tensor as `ndim`, dims and `f32` little-endian payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let c = p.config;
        let mut out = Vec::new();
        out.extend_from_slice(FIXTURE_MAGIC);
        put_u32(&mut out, FIXTURE_VERSION as usize);
        put_u32(&mut out, c.d_x);
        put_u32(&mut out, c.heads);
        put_u32(&mut out, c.d_ff);
        for h in 0..c.heads {
            put_matrix(&mut out, &p.w_q[h]);
            put_matrix(&mut out, &p.w_k[h]);
            put_matrix(&mut out, &p.w_v[h]);
        }
        put_matrix(&mut out, &p.fc1);
        put_vector(&mut out, &p.b1);
        put_matrix(&mut out, &p.fc2);
        put_vector(&mut out, &p.b2);
        for ln in [&p.norm1, &p.norm2] {
            put_vector(&mut out, &ln.scale);
            put_vector(&mut out, &ln.shift);
        }
        put_matrix(&mut out, &self.vocab.key);
        put_matrix(&mut out, &self.vocab.value);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, at: 0 };
        if cur.take(4)? != FIXTURE_MAGIC {
            return Err(Error::Format("layer fixture has bad magic".into()));
        }
        let version = cur.u32()?;
        if version != FIXTURE_VERSION as usize {
            return Err(Error::Format(format!("unsupported layer fixture version {version}")));
        }
        let config = RatConfig {
            d_x: cur.u32()?,
            heads: cur.u32()?,
            d_ff: cur.u32()?,
        };
        config.validate()?;
        let (d_x, dk, d_ff) = (config.d_x, config.head_dim(), config.d_ff);
        let (mut w_q, mut w_k, mut w_v) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..config.heads {
            w_q.push(cur.matrix((d_x, dk))?);
            w_k.push(cur.matrix((d_x, dk))?);
            w_v.push(cur.matrix((d_x, dk))?);
        }
        let fc1 = cur.matrix((d_x, d_ff))?;
        let b1 = cur.vector(d_ff)?;
        let fc2 = cur.matrix((d_ff, d_x))?;
        let b2 = cur.vector(d_x)?;
        let norm1 = LayerNorm {
            scale: cur.vector(d_x)?,
            shift: cur.vector(d_x)?,
        };
        let norm2 = LayerNorm {
            scale: cur.vector(d_x)?,
            shift: cur.vector(d_x)?,
        };
        let key = cur.matrix((Relation::COUNT, dk))?;
        let value = cur.matrix((Relation::COUNT, dk))?;
        if cur.at != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after layer fixture",
                bytes.len() - cur.at
            )));
        }
        Ok(Self {
            params: RatParams::new(config, w_q, w_k, w_v, fc1, b1, fc2, b2, norm1, norm2)?,
            vocab: RelationVocabulary::new(key, value)?,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.to_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Row slice helper used by callers that assemble node features.
pub fn stack_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let width = rows.first().map_or(0, Vec::len);
    let mut out = Array2::zeros((rows.len(), width));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(Error::DimensionMismatch {
                context: "stacked rows",
                expected: width,
                actual: r.len(),
            });
        }
        out.slice_mut(s![i, ..]).assign(&ArrayView1::from(r.as_slice()));
    }
    Ok(out)
}
