//! Nearest-neighbour interpolation.
//!
//! A hidden entry `(n, t)` copies the value of the closest observed node at
//! the same step: fewest hops on the graph at `t`, then smallest Euclidean
//! distance (when coordinates are known), then lowest index. If no observed
//! node is reachable it copies node `n` at the nearest observed step, the
//! earlier one on ties.

use alloc::vec::Vec;

use crate::graph::{hop_distances, GraphSequence};
use crate::lcrecon::SamplingMask;
use crate::matrix::Matrix;
use crate::{math, Error, Result};

fn euclidean(coords: Option<&Matrix>, a: usize, b: usize) -> f64 {
    match coords {
        Some(c) => {
            let s: f64 = c.row(a).iter().zip(c.row(b)).map(|(x, y)| (x - y) * (x - y)).sum();
            math::sqrt(s)
        }
        None => 0.0,
    }
}

/// `coords` holds either one static `N × d` layout or one per step.
pub fn nni_reconstruct(
    seq: &GraphSequence,
    data: &Matrix,
    mask: &SamplingMask,
    coords: Option<&[Matrix]>,
) -> Result<Matrix> {
    let (n, steps) = (seq.node_count(), seq.len());
    if data.shape() != (n, steps) || (mask.nodes(), mask.steps()) != (n, steps) {
        return Err(Error::ShapeMismatch {
            op: "nni_reconstruct",
            lhs: (n, steps),
            rhs: if data.shape() != (n, steps) { data.shape() } else { (mask.nodes(), mask.steps()) },
        });
    }
    if let Some(c) = coords {
        if c.len() != 1 && c.len() != steps {
            return Err(Error::DimensionMismatch {
                context: "nni coordinate frames",
                expected: steps,
                actual: c.len(),
            });
        }
    }
    let frame = |t: usize| coords.map(|c| if c.len() == 1 { &c[0] } else { &c[t] });

    let mut out = data.clone();
    let mut pending: Vec<(usize, usize)> = Vec::new();
    for t in 0..steps {
        if mask.column_is_full(t) {
            continue;
        }
        let topo = seq.snapshot(t).topology();
        for target in 0..n {
            if mask.is_observed(target, t) {
                continue;
            }
            let hops = hop_distances(topo, target);
            let best = (0..n)
                .filter(|&m| mask.is_observed(m, t) && hops[m] != usize::MAX)
                .map(|m| (hops[m], euclidean(frame(t), target, m), m))
                .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
            match best {
                Some((_, _, m)) => out[(target, t)] = data[(m, t)],
                None => pending.push((target, t)),
            }
        }
    }
    for (node, t) in pending {
        let nearest = (0..steps)
            .filter(|&s| mask.is_observed(node, s))
            .min_by_key(|&s| (s.abs_diff(t), s));
        match nearest {
            Some(s) => out[(node, t)] = data[(node, s)],
            None => return Err(Error::Unfillable { node, t }),
        }
    }
    Ok(out)
}

/// Holds the last observed column for every future step, which is what
/// [`nni_reconstruct`] yields when the whole future is hidden.
pub fn persistence_forecast(last: &[f64], horizon: usize) -> Matrix {
    Matrix::from_fn(last.len(), horizon, |i, _| last[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphKind, GraphSnapshot, Topology};
    use crate::lcrecon::{make_mask, SamplingMask};
    use alloc::sync::Arc;
    use alloc::vec;

    fn mask_from(pattern: &[&[u8]], tau: usize) -> SamplingMask {
        let observed = pattern.iter().flat_map(|row| row.iter().map(|v| *v == 1)).collect();
        SamplingMask::from_observed(pattern.len(), pattern[0].len(), tau, observed).unwrap()
    }

    fn static_seq(topo: Topology, x: &Matrix) -> GraphSequence {
        GraphSequence::static_graph(topo, x, 1.0).unwrap()
    }

    #[test]
    fn no_masking_is_identity() {
        let x = Matrix::from_fn(3, 4, |i, t| (i * 10 + t) as f64);
        let seq = static_seq(Topology::from_edges(3, &[(0, 1), (1, 2)], 1.0).unwrap(), &x);
        let mask = make_mask(3, 4, 1, 0.0, 0).unwrap();
        assert_eq!(nni_reconstruct(&seq, &x, &mask, None).unwrap(), x);
    }

    #[test]
    fn single_masked_node_takes_its_neighbour() {
        let x = Matrix::from_rows(&[[1.0, 1.5], [2.0, 2.5]]);
        let seq = static_seq(Topology::from_edges(2, &[(0, 1)], 1.0).unwrap(), &x);
        let mask = mask_from(&[&[1, 0], &[1, 1]], 1);
        let y = Matrix::from_rows(&[[1.0, 0.0], [2.0, 2.5]]);
        let out = nni_reconstruct(&seq, &y, &mask, None).unwrap();
        assert_eq!(out[(0, 1)], 2.5);
    }

    #[test]
    fn hand_traced_four_node_case() {
        // star 0–{1,2,3} plus edge 2–3; node 0 hidden at t = 1, so nodes 1, 2
        // and 3 are all one hop away
        let topo = Topology::from_edges(4, &[(0, 1), (0, 2), (0, 3), (2, 3)], 1.0).unwrap();
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 10.0], [2.0, 20.0], [3.0, 30.0]]);
        let seq = static_seq(topo, &x);
        let mask = mask_from(&[&[1, 0], &[1, 1], &[1, 1], &[1, 1]], 1);
        let coords = Matrix::from_rows(&[[0.0, 0.0], [2.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        let frames = [coords];
        let out = nni_reconstruct(&seq, &x, &mask, Some(&frames)).unwrap();
        // distances from node 0: node1 2.0, node2 1.0, node3 1.0 → tie → index 2
        assert_eq!(out[(0, 1)], 20.0);
        // without coordinates the lowest index among one-hop nodes wins
        assert_eq!(nni_reconstruct(&seq, &x, &mask, None).unwrap()[(0, 1)], 10.0);
        // node 1 hidden too: its only neighbour 0 is hidden, nodes 2 and 3 are
        // two hops away through it
        let mask = mask_from(&[&[1, 0], &[1, 0], &[1, 1], &[1, 1]], 1);
        let out = nni_reconstruct(&seq, &x, &mask, None).unwrap();
        assert_eq!(out[(1, 1)], 20.0);
    }

    #[test]
    fn unreachable_node_falls_back_in_time() {
        let topo = Arc::new(Topology::empty(2));
        let snaps = (0..4)
            .map(|t| GraphSnapshot::new(vec![t as f64, 10.0 + t as f64], topo.clone()).unwrap())
            .collect();
        let seq = GraphSequence::new(snaps, GraphKind::Type1, 1.0).unwrap();
        let x = seq.signal_matrix();
        let mask = mask_from(&[&[1, 1, 0, 0], &[1, 1, 1, 1]], 2);
        let out = nni_reconstruct(&seq, &x, &mask, None).unwrap();
        assert_eq!(out[(0, 2)], 1.0);
        assert_eq!(out[(0, 3)], 1.0);
    }

    #[test]
    fn fully_hidden_isolated_node_is_unfillable() {
        let topo = Topology::empty(2);
        let x = Matrix::zeros(2, 2);
        let seq = static_seq(topo, &x);
        let mask = mask_from(&[&[0, 0], &[1, 1]], 0);
        assert_eq!(
            nni_reconstruct(&seq, &x, &mask, None),
            Err(Error::Unfillable { node: 0, t: 0 })
        );
    }

    #[test]
    fn hidden_future_reduces_to_persistence() {
        let topo = Topology::from_edges(3, &[(0, 1), (1, 2)], 1.0).unwrap();
        let x = Matrix::from_fn(3, 6, |i, t| (i * 7 + t * t) as f64);
        let seq = static_seq(topo, &x);
        let mut observed = vec![true; 18];
        for i in 0..3 {
            for t in 3..6 {
                observed[i * 6 + t] = false;
            }
        }
        let mask = SamplingMask::from_observed(3, 6, 3, observed).unwrap();
        let out = nni_reconstruct(&seq, &x, &mask, None).unwrap();
        let p = persistence_forecast(&x.column_values(2), 3);
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(out[(i, 3 + k)], p[(i, k)]);
            }
        }
    }
}
