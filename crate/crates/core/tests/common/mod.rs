//! Independent reference implementations and generators shared by the
//! integration tests. Nothing here calls the code under test for the value
//! being checked.
#![allow(dead_code)]

use ndarray::Array2;
use schemaprobe::datamodel::EdgeTag;
use schemaprobe::ratlayer::{RatParams, Relation, RelationTags};
use schemaprobe::rng::SplitMix64;

const EPS: f64 = 1e-5;

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Closed form `arcosh(1 + 2|u-v|^2 / ((1-|u|^2)(1-|v|^2)))`.
pub fn poincare_distance_closed_form(u: &[f64], v: &[f64]) -> f64 {
    let sq = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>();
    let diff: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    let arg = 1.0 + 2.0 * diff / ((1.0 - sq(u)) * (1.0 - sq(v)));
    arg.acosh()
}

pub fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.next_signed() * scale)
}

pub fn random_tags(rng: &mut SplitMix64, n: usize) -> RelationTags {
    let all: Vec<Relation> = Relation::all().collect();
    let picks: Vec<Relation> = (0..n * n).map(|_| all[rng.next_range(0, all.len() - 1)]).collect();
    RelationTags::from_fn(n, |i, j| picks[i * n + j])
}

pub fn forward(tag: EdgeTag) -> Relation {
    Relation::Forward(tag)
}

fn layer_norm_row(row: &[f64], scale: &[f64], shift: &[f64]) -> Vec<f64> {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    row.iter()
        .enumerate()
        .map(|(k, v)| (v - mean) / (var + EPS).sqrt() * scale[k] + shift[k])
        .collect()
}

fn vec_mat(x: &[f64], m: &Array2<f64>) -> Vec<f64> {
    (0..m.ncols())
        .map(|c| (0..m.nrows()).map(|r| x[r] * m[[r, c]]).sum())
        .collect()
}

fn feed_forward_block(y: &[f64], p: &RatParams) -> Vec<f64> {
    let hidden: Vec<f64> = vec_mat(y, &p.fc1)
        .iter()
        .zip(p.b1.iter())
        .map(|(a, b)| (a + b).max(0.0))
        .collect();
    let ff: Vec<f64> = vec_mat(&hidden, &p.fc2).iter().zip(p.b2.iter()).map(|(a, b)| a + b).collect();
    let res: Vec<f64> = y.iter().zip(&ff).map(|(a, b)| a + b).collect();
    layer_norm_row(&res, p.norm2.scale.as_slice().unwrap(), p.norm2.shift.as_slice().unwrap())
}

/// Standard transformer encoder layer (scaled dot-product attention, post-norm),
/// written with plain loops.
pub fn vanilla_encoder_layer(x: &Array2<f64>, p: &RatParams) -> Array2<f64> {
    let n = x.nrows();
    let heads = p.w_q.len();
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut concat = vec![Vec::new(); n];
    for h in 0..heads {
        let q: Vec<Vec<f64>> = rows.iter().map(|r| vec_mat(r, &p.w_q[h])).collect();
        let k: Vec<Vec<f64>> = rows.iter().map(|r| vec_mat(r, &p.w_k[h])).collect();
        let v: Vec<Vec<f64>> = rows.iter().map(|r| vec_mat(r, &p.w_v[h])).collect();
        let dk = q[0].len() as f64;
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>() / dk.sqrt())
                .collect();
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let total: f64 = e.iter().sum();
            let mut z = vec![0.0; v[0].len()];
            for j in 0..n {
                for (c, zc) in z.iter_mut().enumerate() {
                    *zc += e[j] / total * v[j][c];
                }
            }
            concat[i].extend(z);
        }
    }
    let mut out = Array2::zeros(x.dim());
    for i in 0..n {
        let res: Vec<f64> = rows[i].iter().zip(&concat[i]).map(|(a, b)| a + b).collect();
        let y = layer_norm_row(&res, p.norm1.scale.as_slice().unwrap(), p.norm1.shift.as_slice().unwrap());
        for (c, v) in feed_forward_block(&y, p).into_iter().enumerate() {
            out[[i, c]] = v;
        }
    }
    out
}

/// Output for a single token whose self-relation has value embedding
/// `rel_value`: attention weight is 1, so each head yields `x W_V + r^V`.
pub fn single_token_layer(x: &[f64], rel_value: &[f64], p: &RatParams) -> Vec<f64> {
    let mut z = Vec::with_capacity(x.len());
    for w_v in &p.w_v {
        let head: Vec<f64> = vec_mat(x, w_v).iter().zip(rel_value).map(|(a, b)| a + b).collect();
        z.extend(head);
    }
    let res: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
    let y = layer_norm_row(&res, p.norm1.scale.as_slice().unwrap(), p.norm1.shift.as_slice().unwrap());
    feed_forward_block(&y, p)
}
