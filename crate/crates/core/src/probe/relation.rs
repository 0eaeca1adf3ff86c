use rayon::prelude::*;

use crate::datamodel::{Edge, EdgeTag, LinkGraph, ProbeExample, RelationMatrix};
use crate::error::{Error, Result};
use crate::geometry::{euclidean_distance, exp_map_origin, poincare_distance, Metric, TangentVector};
use crate::probe::encoder::SchemaEncoder;
use crate::probe::layout::build_input_layout;

/// Baseline schema-item vectors plus the masked variant of every item for
/// every masked question word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    example_id: String,
    dim: usize,
    n_question: usize,
    n_schema: usize,
    baseline: Vec<f64>,
    masked: Vec<f64>,
}

impl EmbeddingSet {
    /// `baseline` holds `n_schema * dim` values; `masked` holds
    /// `n_question * n_schema * dim` values, question index outermost.
    pub fn new(
        example_id: impl Into<String>,
        dim: usize,
        n_question: usize,
        n_schema: usize,
        baseline: Vec<f64>,
        masked: Vec<f64>,
    ) -> Result<Self> {
        let example_id = example_id.into();
        if dim == 0 || n_question == 0 || n_schema == 0 {
            return Err(Error::Validation(format!(
                "embedding set {example_id:?} has an empty dimension (dim={dim}, |Q|={n_question}, |S|={n_schema})"
            )));
        }
        if baseline.len() != n_schema * dim {
            return Err(Error::DimensionMismatch {
                context: "baseline embeddings",
                expected: n_schema * dim,
                actual: baseline.len(),
            });
        }
        if masked.len() != n_question * n_schema * dim {
            return Err(Error::DimensionMismatch {
                context: "masked embeddings",
                expected: n_question * n_schema * dim,
                actual: masked.len(),
            });
        }
        if let Some(pos) = baseline.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEmbedding {
                example_id,
                question: None,
                schema: pos / dim,
            });
        }
        if let Some(pos) = masked.iter().position(|v| !v.is_finite()) {
            let vector = pos / dim;
            return Err(Error::NonFiniteEmbedding {
                example_id,
                question: Some(vector / n_schema),
                schema: vector % n_schema,
            });
        }
        Ok(Self {
            example_id,
            dim,
            n_question,
            n_schema,
            baseline,
            masked,
        })
    }

    pub fn example_id(&self) -> &str {
        &self.example_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_question(&self) -> usize {
        self.n_question
    }

    pub fn n_schema(&self) -> usize {
        self.n_schema
    }

    pub fn baseline(&self, j: usize) -> &[f64] {
        &self.baseline[j * self.dim..(j + 1) * self.dim]
    }

    pub fn masked(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.n_schema + j) * self.dim;
        &self.masked[start..start + self.dim]
    }

    pub fn baseline_flat(&self) -> &[f64] {
        &self.baseline
    }

    pub fn masked_flat(&self) -> &[f64] {
        &self.masked
    }

    /// Errors unless this set was produced for `example`.
    pub fn check_example(&self, example: &ProbeExample) -> Result<()> {
        if self.example_id != example.example_id() {
            return Err(Error::Validation(format!(
                "embedding set {:?} does not belong to example {:?}",
                self.example_id,
                example.example_id()
            )));
        }
        if self.n_question != example.n_question() {
            return Err(Error::DimensionMismatch {
                context: "dump question tokens",
                expected: example.n_question(),
                actual: self.n_question,
            });
        }
        if self.n_schema != example.n_schema() {
            return Err(Error::DimensionMismatch {
                context: "dump schema items",
                expected: example.n_schema(),
                actual: self.n_schema,
            });
        }
        Ok(())
    }
}

fn flatten_pass(
    vectors: Vec<Vec<f64>>,
    n_schema: usize,
    dim: Option<usize>,
) -> Result<(usize, Vec<f64>)> {
    if vectors.len() != n_schema {
        return Err(Error::DimensionMismatch {
            context: "encoder schema vectors",
            expected: n_schema,
            actual: vectors.len(),
        });
    }
    let dim = dim.unwrap_or_else(|| vectors.first().map_or(0, Vec::len));
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            context: "encoder vector dimension",
            expected: dim,
            actual: bad.len(),
        });
    }
    Ok((dim, vectors.into_iter().flatten().collect()))
}

/// Runs one unmasked pass and one pass per masked question word. The masked
/// passes run concurrently.
pub fn collect_embeddings<E>(example: &ProbeExample, encoder: &E) -> Result<EmbeddingSet>
where
    E: SchemaEncoder + Sync + ?Sized,
{
    let layout = build_input_layout(example);
    let n_schema = example.n_schema();
    let (dim, baseline) = flatten_pass(encoder.encode(&layout, None)?, n_schema, None)?;
    let masked = (0..example.n_question())
        .into_par_iter()
        .map(|i| {
            encoder
                .encode(&layout, Some(i))
                .and_then(|v| flatten_pass(v, n_schema, Some(dim)))
                .map(|(_, flat)| flat)
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    EmbeddingSet::new(
        example.example_id(),
        dim,
        example.n_question(),
        n_schema,
        baseline,
        masked,
    )
}

/// Relation matrix `x_ij = d(h_j masked by q_i, h_j)` for one example.
pub fn probe_example<E>(example: &ProbeExample, encoder: &E, metric: Metric) -> Result<RelationMatrix>
where
    E: SchemaEncoder + Sync + ?Sized,
{
    materialize_from_dump(&collect_embeddings(example, encoder)?, metric)
}

/// Same computation as [`probe_example`], over precomputed vectors.
pub fn materialize_from_dump(dump: &EmbeddingSet, metric: Metric) -> Result<RelationMatrix> {
    let (nq, ns) = (dump.n_question, dump.n_schema);
    let values = match metric {
        Metric::Euclidean => (0..nq)
            .into_par_iter()
            .map(|i| {
                (0..ns)
                    .map(|j| euclidean_distance(dump.masked(i, j), dump.baseline(j)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?,
        Metric::Poincare => {
            let project = |v: &[f64]| TangentVector::new(v.to_vec()).map(|t| exp_map_origin(&t));
            let baseline = (0..ns)
                .map(|j| project(dump.baseline(j)))
                .collect::<Result<Vec<_>>>()?;
            (0..nq)
                .into_par_iter()
                .map(|i| {
                    (0..ns)
                        .map(|j| poincare_distance(&project(dump.masked(i, j))?, &baseline[j]))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    RelationMatrix::new(nq, ns, values.concat(), false)
}

/// Min-max normalization over the whole matrix. A constant matrix maps to zeros.
pub fn normalize_minmax(x: &RelationMatrix) -> RelationMatrix {
    let values = x.values();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let normalized = if range > 0.0 {
        values.iter().map(|v| ((v - min) / range).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; values.len()]
    };
    RelationMatrix::new(x.rows(), x.cols(), normalized, true)
        .expect("min-max output is finite and within [0, 1]")
}

/// `ProbeLink` edge for every entry with `x >= tau`.
pub fn threshold_adjacency(xn: &RelationMatrix, tau: f64) -> Result<LinkGraph> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Validation(format!("threshold tau = {tau} is outside [0, 1]")));
    }
    if !xn.is_normalized() {
        return Err(Error::Validation(
            "threshold_adjacency expects a normalized relation matrix".into(),
        ));
    }
    let mut graph = LinkGraph::new(xn.rows(), xn.cols());
    for i in 0..xn.rows() {
        for (j, &v) in xn.row(i).iter().enumerate() {
            if v >= tau {
                graph.insert(Edge {
                    question: i,
                    schema: j,
                    tag: EdgeTag::ProbeLink,
                })?;
            }
        }
    }
    Ok(graph)
}
