//! Undirected weighted graphs carrying one scalar signal per node, and
//! sequences of them.

mod build;
mod spectral;

pub use build::{build_knn_graph, build_radius_graph};
pub use spectral::{eigendecompose, gft, igft, Spectrum};

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::matrix::{dot, Matrix};
use crate::{Error, Result};

/// Edge structure of one snapshot: symmetric nonnegative weights with zero
/// diagonal, and the matching sorted edge list (`l < m`).
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    weights: Matrix,
    edges: Vec<(usize, usize)>,
}

impl Topology {
    /// Validates `weights` and derives the edge list from its positive entries.
    pub fn from_weights(weights: Matrix) -> Result<Self> {
        let n = weights.rows();
        if weights.cols() != n {
            return Err(Error::ShapeMismatch {
                op: "Topology::from_weights",
                lhs: weights.shape(),
                rhs: (n, n),
            });
        }
        let mut edges = Vec::new();
        for l in 0..n {
            if weights[(l, l)] != 0.0 {
                return Err(Error::InvalidConfig(alloc::format!("nonzero self-loop weight at node {l}")));
            }
            for m in (l + 1)..n {
                let w = weights[(l, m)];
                if w != weights[(m, l)] {
                    return Err(Error::NotSymmetric {
                        asymmetry: math::abs(w - weights[(m, l)]),
                    });
                }
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::InvalidConfig(alloc::format!("invalid weight {w} on edge ({l}, {m})")));
                }
                if w > 0.0 {
                    edges.push((l, m));
                }
            }
        }
        Ok(Self { weights, edges })
    }

    /// Graph with the given undirected edges, each of weight `weight`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], weight: f64) -> Result<Self> {
        let mut w = Matrix::zeros(n, n);
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::DimensionMismatch {
                    context: "Topology::from_edges",
                    expected: n,
                    actual: a.max(b) + 1,
                });
            }
            if a != b {
                w[(a, b)] = weight;
                w[(b, a)] = weight;
            }
        }
        Self::from_weights(w)
    }

    pub fn empty(n: usize) -> Self {
        Self {
            weights: Matrix::zeros(n, n),
            edges: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weight(&self, l: usize, m: usize) -> f64 {
        self.weights[(l, m)]
    }

    /// Neighbours of `i` with their edge weights, ascending by index.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(j, w)| (j, *w))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.node_count();
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                w[(perm[i], perm[j])] = self.weights[(i, j)];
            }
        }
        Self::from_weights(w).expect("permutation preserves validity")
    }
}

/// One time step: a signal on every node plus the (possibly shared) edge
/// structure.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSnapshot {
    pub signals: Vec<f64>,
    topology: Arc<Topology>,
}

impl GraphSnapshot {
    pub fn new(signals: Vec<f64>, topology: Arc<Topology>) -> Result<Self> {
        if signals.len() != topology.node_count() {
            return Err(Error::DimensionMismatch {
                context: "GraphSnapshot::new",
                expected: topology.node_count(),
                actual: signals.len(),
            });
        }
        Ok(Self { signals, topology })
    }

    pub fn from_weights(signals: Vec<f64>, weights: Matrix) -> Result<Self> {
        Self::new(signals, Arc::new(Topology::from_weights(weights)?))
    }

    pub fn node_count(&self) -> usize {
        self.signals.len()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn shared_topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn weights(&self) -> &Matrix {
        self.topology.weights()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        self.topology.edges()
    }

    pub fn with_signals(&self, signals: Vec<f64>) -> Result<Self> {
        Self::new(signals, self.topology.clone())
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut signals = vec![0.0; self.node_count()];
        for (i, v) in self.signals.iter().enumerate() {
            signals[perm[i]] = *v;
        }
        Self {
            signals,
            topology: Arc::new(self.topology.permuted(perm)),
        }
    }
}

/// Type-1: only signals vary. Type-2: weights vary too. Type-3: the edge set
/// varies as well.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphKind {
    Type1,
    Type2,
    Type3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphSequence {
    snapshots: Vec<GraphSnapshot>,
    kind: GraphKind,
    /// Seconds per step.
    pub dt: f64,
}

impl GraphSequence {
    pub fn new(snapshots: Vec<GraphSnapshot>, kind: GraphKind, dt: f64) -> Result<Self> {
        if let Some(first) = snapshots.first() {
            let n = first.node_count();
            for s in &snapshots[1..] {
                if s.node_count() != n {
                    return Err(Error::DimensionMismatch {
                        context: "GraphSequence::new",
                        expected: n,
                        actual: s.node_count(),
                    });
                }
                match kind {
                    GraphKind::Type1 if s.weights() != first.weights() => {
                        return Err(Error::InvalidConfig("Type-1 sequence with varying weights".into()));
                    }
                    GraphKind::Type2 if s.edges() != first.edges() => {
                        return Err(Error::InvalidConfig("Type-2 sequence with varying edge set".into()));
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { snapshots, kind, dt })
    }

    /// Type-1 sequence on a single shared topology; `signals` is `N × T`.
    pub fn static_graph(topology: Topology, signals: &Matrix, dt: f64) -> Result<Self> {
        if signals.rows() != topology.node_count() {
            return Err(Error::DimensionMismatch {
                context: "GraphSequence::static_graph",
                expected: topology.node_count(),
                actual: signals.rows(),
            });
        }
        let topology = Arc::new(topology);
        let snapshots = (0..signals.cols())
            .map(|t| GraphSnapshot::new(signals.column_values(t), topology.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            snapshots,
            kind: GraphKind::Type1,
            dt,
        })
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.snapshots.first().map_or(0, |s| s.node_count())
    }

    pub fn snapshots(&self) -> &[GraphSnapshot] {
        &self.snapshots
    }

    pub fn snapshot(&self, t: usize) -> &GraphSnapshot {
        &self.snapshots[t]
    }

    /// Signals as an `N × T` matrix.
    pub fn signal_matrix(&self) -> Matrix {
        let n = self.node_count();
        Matrix::from_fn(n, self.len(), |i, t| self.snapshots[t].signals[i])
    }

    /// Same topologies, signals replaced column-wise from an `N × T` matrix.
    pub fn with_signal_matrix(&self, signals: &Matrix) -> Result<Self> {
        if signals.shape() != (self.node_count(), self.len()) {
            return Err(Error::ShapeMismatch {
                op: "GraphSequence::with_signal_matrix",
                lhs: (self.node_count(), self.len()),
                rhs: signals.shape(),
            });
        }
        let snapshots = self
            .snapshots
            .iter()
            .enumerate()
            .map(|(t, s)| s.with_signals(signals.column_values(t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            snapshots,
            kind: self.kind,
            dt: self.dt,
        })
    }

    /// Steps `start..end` as a new sequence.
    pub fn window(&self, start: usize, end: usize) -> Self {
        Self {
            snapshots: self.snapshots[start..end].to_vec(),
            kind: self.kind,
            dt: self.dt,
        }
    }
}

/// `L = D − W`.
pub fn laplacian(g: &GraphSnapshot) -> Matrix {
    laplacian_of(g.topology())
}

pub fn laplacian_of(topology: &Topology) -> Matrix {
    let w = topology.weights();
    let n = w.rows();
    let mut l = w.scale(-1.0);
    for i in 0..n {
        l[(i, i)] = w.row(i).iter().sum();
    }
    l
}

/// Laplacian quadratic form `xᵀ L x`.
pub fn smoothness_s2(g: &GraphSnapshot, x: &[f64]) -> Result<f64> {
    quadratic_form(&laplacian(g), x)
}

pub(crate) fn quadratic_form(l: &Matrix, x: &[f64]) -> Result<f64> {
    let lx = l.matvec(x)?;
    Ok(dot(x, &lx))
}

/// Sum over `t ≥ 1` of `S₂(x(t) − x(t−1))` on the Laplacian of snapshot `t`.
/// `x` is `N × T`.
pub fn temporal_smoothness(seq: &GraphSequence, x: &Matrix) -> Result<f64> {
    if x.shape() != (seq.node_count(), seq.len()) {
        return Err(Error::ShapeMismatch {
            op: "temporal_smoothness",
            lhs: (seq.node_count(), seq.len()),
            rhs: x.shape(),
        });
    }
    if seq.len() < 2 {
        return Err(Error::DimensionMismatch {
            context: "temporal_smoothness needs T >= 2",
            expected: 2,
            actual: seq.len(),
        });
    }
    let mut total = 0.0;
    let mut cached: Option<(*const Topology, Matrix)> = None;
    for t in 1..seq.len() {
        let topo = seq.snapshot(t).shared_topology();
        let lap = match &cached {
            Some((ptr, l)) if *ptr == Arc::as_ptr(topo) => l,
            _ => {
                cached = Some((Arc::as_ptr(topo), laplacian_of(topo)));
                &cached.as_ref().unwrap().1
            }
        };
        let diff: Vec<f64> = (0..x.rows()).map(|i| x[(i, t)] - x[(i, t - 1)]).collect();
        total += quadratic_form(lap, &diff)?;
    }
    Ok(total)
}

/// True iff every node is reachable from node 0 along edges.
pub fn is_connected(g: &GraphSnapshot) -> bool {
    component_count(g.topology()) <= 1
}

pub fn component_count(topology: &Topology) -> usize {
    let n = topology.node_count();
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    let mut components = 0;
    for root in 0..n {
        if seen[root] {
            continue;
        }
        components += 1;
        seen[root] = true;
        stack.push(root);
        while let Some(i) = stack.pop() {
            for (j, _) in topology.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    components
}

/// Hop distances from `source` (`usize::MAX` when unreachable).
pub fn hop_distances(topology: &Topology, source: usize) -> Vec<usize> {
    let n = topology.node_count();
    let mut dist = vec![usize::MAX; n];
    let mut queue = alloc::collections::VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(i) = queue.pop_front() {
        for (j, _) in topology.neighbors(i) {
            if dist[j] == usize::MAX {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        }
    }
    dist
}
