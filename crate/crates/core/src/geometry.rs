//! Euclidean and unit Poincaré-ball operations.
//!
//! The ball has curvature fixed at -1 (the open unit ball). Points are
//! validated on construction and kept strictly inside the ball; values that
//! drift onto the boundary through rounding are pulled back to
//! [`MAX_BALL_NORM`].

use crate::error::{Error, Result};

/// Largest norm a [`BallPoint`] may carry.
pub const MAX_BALL_NORM: f64 = 1.0 - 1e-9;

/// Largest Möbius-difference norm fed to `artanh` in [`poincare_distance`].
pub const MAX_ARTANH_ARG: f64 = 1.0 - 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dims(context: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context,
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// `||u - v||_2`.
pub fn euclidean_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims("euclidean distance", u, v)?;
    Ok(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// A vector in the tangent space at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(Vec<f64>);

impl TangentVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { stage: "tangent vector" });
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

/// A point in the open unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct BallPoint(Vec<f64>);

impl BallPoint {
    /// Rejects points with norm >= 1; points in `(MAX_BALL_NORM, 1)` are scaled
    /// back to `MAX_BALL_NORM`.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { stage: "ball point" });
        }
        let n = norm(&coords);
        if n >= 1.0 {
            return Err(Error::Domain { norm: n });
        }
        Ok(Self::clamped(coords, n))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    fn clamped(mut coords: Vec<f64>, n: f64) -> Self {
        if n > MAX_BALL_NORM {
            let scale = MAX_BALL_NORM / n;
            coords.iter_mut().for_each(|c| *c *= scale);
        }
        Self(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Möbius negation, `-a`.
    pub fn negate(&self) -> Self {
        Self(self.0.iter().map(|c| -c).collect())
    }
}

/// Exponential map at the origin: `tanh(||h||) h / ||h||`, with `0 -> 0`.
pub fn exp_map_origin(h: &TangentVector) -> BallPoint {
    let n = h.norm();
    if n == 0.0 {
        return BallPoint::origin(h.0.len());
    }
    let scale = n.tanh() / n;
    let coords: Vec<f64> = h.0.iter().map(|c| c * scale).collect();
    let out_norm = n.tanh();
    BallPoint::clamped(coords, out_norm)
}

/// Möbius addition `a ⊕ b` on the unit ball.
pub fn mobius_add(a: &BallPoint, b: &BallPoint) -> Result<BallPoint> {
    check_dims("mobius addition", &a.0, &b.0)?;
    let ab = dot(&a.0, &b.0);
    let aa = dot(&a.0, &a.0);
    let bb = dot(&b.0, &b.0);
    let coef_a = 1.0 + 2.0 * ab + bb;
    let coef_b = 1.0 - aa;
    let denom = 1.0 + 2.0 * ab + aa * bb;
    let coords: Vec<f64> = a
        .0
        .iter()
        .zip(&b.0)
        .map(|(x, y)| (coef_a * x + coef_b * y) / denom)
        .collect();
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite { stage: "mobius addition" });
    }
    let n = norm(&coords);
    Ok(BallPoint::clamped(coords, n))
}

/// `2 artanh(||(-a) ⊕ b||)`. Identical points are at distance exactly zero.
///
/// The Möbius-difference norm is taken from
/// `||(-a) ⊕ b||^2 = ||a - b||^2 / (||a - b||^2 + (1 - ||a||^2)(1 - ||b||^2))`
/// rather than by forming `(-a) ⊕ b`: the result is exactly symmetric and
/// keeps its accuracy near the boundary, where `1 - x` would cancel.
pub fn poincare_distance(a: &BallPoint, b: &BallPoint) -> Result<f64> {
    check_dims("poincare distance", &a.0, &b.0)?;
    if a.0 == b.0 {
        return Ok(0.0);
    }
    let gap: f64 = a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum();
    let slack = (1.0 - dot(&a.0, &a.0)) * (1.0 - dot(&b.0, &b.0));
    let total = gap + slack;
    let x = (gap / total).sqrt();
    if x >= MAX_ARTANH_ARG {
        return Ok(2.0 * MAX_ARTANH_ARG.atanh());
    }
    // 2 artanh(x) = ln((1 + x)^2 / (1 - x^2)) with 1 - x^2 = slack / total
    Ok(2.0 * x.ln_1p() + total.ln() - slack.ln())
}

/// Distance used to compare a schema item's baseline and masked embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Euclidean,
    Poincare,
}

impl Metric {
    /// Distance between two raw embeddings. Under [`Metric::Poincare`] both
    /// vectors are first projected with [`exp_map_origin`].
    pub fn distance(self, u: &[f64], v: &[f64]) -> Result<f64> {
        match self {
            Metric::Euclidean => euclidean_distance(u, v),
            Metric::Poincare => {
                check_dims("poincare distance", u, v)?;
                let a = exp_map_origin(&TangentVector::new(u.to_vec())?);
                let b = exp_map_origin(&TangentVector::new(v.to_vec())?);
                poincare_distance(&a, &b)
            }
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "poincare" => Ok(Metric::Poincare),
            other => Err(Error::Validation(format!("unknown metric {other:?}"))),
        }
    }
}
