//! Graph construction from node coordinates (rows of an `N × d` matrix).

use alloc::vec::Vec;

use super::Topology;
use crate::math;
use crate::matrix::Matrix;
use crate::{Error, Result};

fn distance(coords: &Matrix, a: usize, b: usize) -> f64 {
    let d2: f64 = coords
        .row(a)
        .iter()
        .zip(coords.row(b))
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    math::sqrt(d2)
}

/// Symmetrized k-nearest-neighbour graph with unit weights: `{l, m}` is an
/// edge iff `m` is among the `k` nearest of `l` or vice versa. Equal
/// distances prefer the lower node index.
pub fn build_knn_graph(coords: &Matrix, k: usize) -> Result<Topology> {
    let n = coords.rows();
    if k == 0 || k >= n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut adj = Matrix::zeros(n, n);
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for l in 0..n {
        candidates.clear();
        candidates.extend((0..n).filter(|&m| m != l).map(|m| (distance(coords, l, m), m)));
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, m) in &candidates[..k] {
            adj[(l, m)] = 1.0;
            adj[(m, l)] = 1.0;
        }
    }
    Topology::from_weights(adj)
}

/// Unit-weight graph joining every pair at Euclidean distance `≤ r`.
pub fn build_radius_graph(coords: &Matrix, r: f64) -> Result<Topology> {
    if !(r > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!("radius must be positive, got {r}")));
    }
    let n = coords.rows();
    let mut adj = Matrix::zeros(n, n);
    for l in 0..n {
        for m in (l + 1)..n {
            if distance(coords, l, m) <= r {
                adj[(l, m)] = 1.0;
                adj[(m, l)] = 1.0;
            }
        }
    }
    Topology::from_weights(adj)
}
