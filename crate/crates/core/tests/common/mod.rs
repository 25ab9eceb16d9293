//! Straight-line reference implementations used as test oracles. Nothing here
//! calls into the crate's math; they only read network parameters and data.

#![allow(dead_code)]

use protonet::data::{LabeledDataset, LabeledExample};
use protonet::embed::EmbeddingNetwork;
use rand::Rng;

pub fn oracle_mean(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points[0].len();
    let mut acc = vec![0.0; dim];
    for p in points {
        for j in 0..dim {
            acc[j] += p[j];
        }
    }
    acc.iter().map(|s| s / points.len() as f64).collect()
}

pub fn oracle_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..a.len() {
        s += (a[j] - b[j]) * (a[j] - b[j]);
    }
    s
}

/// `p_k = 1 / sum_j exp(d_k - d_j)`, a different algebraic route from a
/// max-shifted softmax.
pub fn oracle_posterior(d: &[f64]) -> Vec<f64> {
    d.iter()
        .map(|&dk| 1.0 / d.iter().map(|&dj| (dk - dj).exp()).sum::<f64>())
        .collect()
}

pub fn oracle_argmin(d: &[f64]) -> usize {
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    d.iter().position(|&x| x == min).unwrap()
}

/// `-log p_y = log sum_j exp(d_y - d_j)`, averaged over queries.
pub fn oracle_loss(dists: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (d, &y) in dists.iter().zip(labels) {
        total += d.iter().map(|&dj| (d[y] - dj).exp()).sum::<f64>().ln();
    }
    total / dists.len() as f64
}

/// Explicit loops over the stored weight matrices.
pub fn oracle_forward(net: &EmbeddingNetwork, x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    let n = net.layers().len();
    for (i, layer) in net.layers().iter().enumerate() {
        let mut next = vec![0.0; layer.out_dim];
        for o in 0..layer.out_dim {
            let mut s = layer.bias[o];
            for k in 0..layer.in_dim {
                s += layer.weights[o * layer.in_dim + k] * cur[k];
            }
            next[o] = if i + 1 < n && s < 0.0 { 0.0 } else { s };
        }
        cur = next;
    }
    cur
}

/// Full episodic loss through the oracle path.
pub fn oracle_episode_loss(
    net: &EmbeddingNetwork,
    n_way: usize,
    support: &[Vec<f64>],
    support_labels: &[usize],
    query: &[Vec<f64>],
    query_labels: &[usize],
) -> f64 {
    let protos = oracle_prototypes(net, n_way, support, support_labels);
    let dists: Vec<Vec<f64>> = query
        .iter()
        .map(|q| {
            let z = oracle_forward(net, q);
            protos.iter().map(|c| oracle_sq_dist(&z, c)).collect()
        })
        .collect();
    oracle_loss(&dists, query_labels)
}

pub fn oracle_prototypes(
    net: &EmbeddingNetwork,
    n_way: usize,
    support: &[Vec<f64>],
    support_labels: &[usize],
) -> Vec<Vec<f64>> {
    (0..n_way)
        .map(|k| {
            let pts: Vec<Vec<f64>> = support
                .iter()
                .zip(support_labels)
                .filter(|(_, &l)| l == k)
                .map(|(x, _)| oracle_forward(net, x))
                .collect();
            oracle_mean(&pts)
        })
        .collect()
}

/// Central differences of the oracle loss with respect to every parameter.
pub fn finite_difference_gradient(
    net: &EmbeddingNetwork,
    h: f64,
    n_way: usize,
    support: &[Vec<f64>],
    support_labels: &[usize],
    query: &[Vec<f64>],
    query_labels: &[usize],
) -> Vec<f64> {
    let base = net.params();
    let mut probe = net.clone();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + h;
            probe.set_params(&p).unwrap();
            let up = oracle_episode_loss(&probe, n_way, support, support_labels, query, query_labels);
            p[i] = base[i] - h;
            probe.set_params(&p).unwrap();
            let down = oracle_episode_loss(&probe, n_way, support, support_labels, query, query_labels);
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn close(analytic: f64, numeric: f64, rel: f64, abs_floor: f64) -> bool {
    (analytic - numeric).abs() <= (rel * analytic.abs().max(numeric.abs())).max(abs_floor)
}

pub fn random_vec(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Uniform random features, `sizes[c]` examples of class `c`.
pub fn random_dataset(rng: &mut impl Rng, sizes: &[usize], dim: usize) -> LabeledDataset {
    let mut examples = Vec::new();
    for (label, &n) in sizes.iter().enumerate() {
        for _ in 0..n {
            let source_id = examples.len();
            examples.push(LabeledExample {
                features: random_vec(rng, dim, 1.0),
                label,
                source_id,
            });
        }
    }
    LabeledDataset::with_dim(
        (0..sizes.len()).map(|c| format!("class{c}")).collect(),
        examples,
        dim,
    )
    .unwrap()
}
