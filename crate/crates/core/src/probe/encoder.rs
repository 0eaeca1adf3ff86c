use std::collections::BTreeMap;

use crate::datamodel::ProbeExample;
use crate::error::{Error, Result};
use crate::probe::layout::InputLayout;
use crate::rng::{stable_hash, SplitMix64};

/// Produces one contextual vector per schema item for an input layout,
/// optionally with one question word masked.
///
/// Implementations must be deterministic: the same layout and mask must
/// always yield the same vectors.
pub trait SchemaEncoder {
    fn encode(&self, layout: &InputLayout, masked: Option<usize>) -> Result<Vec<Vec<f64>>>;
}

impl<E: SchemaEncoder + ?Sized> SchemaEncoder for &E {
    fn encode(&self, layout: &InputLayout, masked: Option<usize>) -> Result<Vec<Vec<f64>>> {
        (**self).encode(layout, masked)
    }
}

/// Wraps an encoder and rounds its outputs to `f32`, the precision stored in
/// embedding dumps.
#[derive(Debug, Clone)]
pub struct F32Rounded<E>(pub E);

impl<E: SchemaEncoder> SchemaEncoder for F32Rounded<E> {
    fn encode(&self, layout: &InputLayout, masked: Option<usize>) -> Result<Vec<Vec<f64>>> {
        let mut out = self.0.encode(layout, masked)?;
        out.iter_mut()
            .flatten()
            .for_each(|v| *v = f64::from(*v as f32));
        Ok(out)
    }
}

/// Fixture for the synthetic encoder with known ground truth.
///
/// Schema item `j` encodes to `base_j + sum_i sim(i, j) * ctx_i` where each
/// `ctx_i` has unit norm, so masking question word `i` moves item `j` by
/// exactly `sim(i, j)` in Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEncoderSpec {
    example_id: String,
    dim: usize,
    base: Vec<Vec<f64>>,
    context: Vec<Vec<f64>>,
    planted: BTreeMap<(usize, usize), f64>,
}

impl ReferenceEncoderSpec {
    pub fn new(
        example: &ProbeExample,
        dim: usize,
        seed: u64,
        planted: impl IntoIterator<Item = ((usize, usize), f64)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("reference encoder dimension must be positive".into()));
        }
        let (nq, ns) = (example.n_question(), example.n_schema());
        let mut map = BTreeMap::new();
        for ((i, j), sim) in planted {
            if i >= nq || j >= ns {
                return Err(Error::Validation(format!(
                    "planted pair ({i}, {j}) out of range for {nq}x{ns}"
                )));
            }
            if !(0.0..=1.0).contains(&sim) {
                return Err(Error::Validation(format!(
                    "planted similarity {sim} for ({i}, {j}) outside [0, 1]"
                )));
            }
            if sim > 0.0 {
                map.insert((i, j), sim);
            }
        }
        let schema = example.schema();
        // base vectors land inside the unit ball so the hyperbolic projection stays well conditioned
        let base_scale = 1.0 / (dim as f64).sqrt();
        let base = (0..ns)
            .map(|j| {
                let mut rng = SplitMix64::new(stable_hash(seed, &["item", &schema.item_label(j)]));
                (0..dim).map(|_| rng.next_signed() * base_scale).collect()
            })
            .collect();
        let context = example
            .question_tokens()
            .iter()
            .enumerate()
            .map(|(i, tok)| {
                let mut rng = SplitMix64::new(stable_hash(seed, &["ctx", &i.to_string(), tok]));
                unit_vector(&mut rng, dim)
            })
            .collect();
        Ok(Self {
            example_id: example.example_id().to_owned(),
            dim,
            base,
            context,
            planted: map,
        })
    }

    /// Plants pseudo-random similarities in `[0.25, 1]` on the example's gold links.
    pub fn from_gold(example: &ProbeExample, dim: usize, seed: u64) -> Result<Self> {
        let planted: Vec<_> = example
            .gold_links()
            .map(|g| {
                g.pairs()
                    .iter()
                    .map(|&(i, j)| {
                        let key = format!("{}:{i}:{j}", example.example_id());
                        let mut rng = SplitMix64::new(stable_hash(seed, &["sim", &key]));
                        ((i, j), 0.25 + 0.75 * rng.next_unit())
                    })
                    .collect()
            })
            .unwrap_or_default();
        Self::new(example, dim, seed, planted)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn planted(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.planted
    }

    pub fn context(&self, i: usize) -> &[f64] {
        &self.context[i]
    }

    pub fn base(&self, j: usize) -> &[f64] {
        &self.base[j]
    }
}

fn unit_vector(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.next_signed()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// The synthetic encoder described by a [`ReferenceEncoderSpec`].
#[derive(Debug, Clone)]
pub struct ReferenceEncoder {
    spec: ReferenceEncoderSpec,
}

impl ReferenceEncoder {
    pub fn new(spec: ReferenceEncoderSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &ReferenceEncoderSpec {
        &self.spec
    }
}

impl SchemaEncoder for ReferenceEncoder {
    fn encode(&self, layout: &InputLayout, masked: Option<usize>) -> Result<Vec<Vec<f64>>> {
        let spec = &self.spec;
        if layout.example_id() != spec.example_id {
            return Err(Error::Validation(format!(
                "reference encoder built for example {:?} was given layout for {:?}",
                spec.example_id,
                layout.example_id()
            )));
        }
        if layout.n_question() != spec.context.len() {
            return Err(Error::DimensionMismatch {
                context: "reference encoder question tokens",
                expected: spec.context.len(),
                actual: layout.n_question(),
            });
        }
        if layout.n_schema() != spec.base.len() {
            return Err(Error::DimensionMismatch {
                context: "reference encoder schema items",
                expected: spec.base.len(),
                actual: layout.n_schema(),
            });
        }
        if let Some(m) = masked {
            if m >= layout.n_question() {
                return Err(Error::Validation(format!(
                    "masked question index {m} out of range for {} tokens",
                    layout.n_question()
                )));
            }
        }
        let mut out = spec.base.clone();
        for (&(i, j), &sim) in &spec.planted {
            if Some(i) == masked {
                continue;
            }
            for (h, c) in out[j].iter_mut().zip(&spec.context[i]) {
                *h += sim * c;
            }
        }
        Ok(out)
    }
}
