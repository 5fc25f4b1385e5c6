//! Trainable building blocks: dense layers, weighted-sum graph convolution
//! and mean-aggregation (SAGE-style) graph layers.
//!
//! Parameters live in plain [`Matrix`] fields. To run a layer on a [`Tape`]
//! its parameters are first pushed with [`bind`] (differentiable) or
//! [`bind_frozen`] (constants); the returned handles are consumed in the
//! order given by [`Parameters::parameters`].
//!
//! Graph layers work on a [`GraphBatch`]: the node features of several
//! snapshots stacked row-wise, with a block-diagonal aggregation operator.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Csr, Tape, Var, DEFAULT_LEAKY_SLOPE};
use crate::graph::{GraphSnapshot, Topology};
use crate::math;
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::{Error, Result};

pub trait Parameters {
    fn parameters(&self) -> Vec<&Matrix>;
    fn parameters_mut(&mut self) -> Vec<&mut Matrix>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    fn parameter_shapes(&self) -> Vec<(usize, usize)> {
        self.parameters().iter().map(|p| p.shape()).collect()
    }
}

/// Pushes every parameter of `module` as a differentiable leaf.
pub fn bind<P: Parameters + ?Sized>(tape: &mut Tape, module: &P) -> Result<Vec<Var>> {
    module
        .parameters()
        .into_iter()
        .map(|p| tape.param(p.clone()))
        .collect()
}

/// Pushes every parameter of `module` as a constant.
pub fn bind_frozen<P: Parameters + ?Sized>(tape: &mut Tape, module: &P) -> Result<Vec<Var>> {
    module
        .parameters()
        .into_iter()
        .map(|p| tape.constant(p.clone()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    LeakyRelu,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::LeakyRelu => tape.leaky_relu(x, DEFAULT_LEAKY_SLOPE),
            Activation::Identity => Ok(x),
        }
    }
}

/// Uniform in `±√(6 / (fan_in + fan_out))`.
pub fn glorot(rng: &mut Rng, fan_out: usize, fan_in: usize) -> Matrix {
    let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    Matrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-bound..bound))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out × in`.
    pub weight: Matrix,
    /// `1 × out`.
    pub bias: Matrix,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(rng: &mut Rng, input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: glorot(rng, output, input),
            bias: Matrix::zeros(1, output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    /// `vars = [weight, bias]`; `x` is `batch × in`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let y = tape.linear(x, vars[0], Some(vars[1]))?;
        self.activation.apply(tape, y)
    }

    /// `activation(x Wᵀ + b)` for a `batch × in` matrix.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = bind_frozen(&mut tape, self)?;
        let xv = tape.constant(x.clone())?;
        let y = self.forward(&mut tape, &vars, xv)?;
        Ok(tape.value(y).clone())
    }
}

impl Parameters for DenseLayer {
    fn parameters(&self) -> Vec<&Matrix> {
        vec![&self.weight, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// A stack of dense layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    /// `widths = [in, h1, …, out]`; `hidden` activation on every layer but
    /// the last, which uses `output`.
    pub fn new(rng: &mut Rng, widths: &[usize], hidden: Activation, output: Activation) -> Self {
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                DenseLayer::new(rng, widths[i], widths[i + 1], act)
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_dim())
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], mut x: Var) -> Result<Var> {
        for (layer, v) in self.layers.iter().zip(vars.chunks(2)) {
            x = layer.forward(tape, v, x)?;
        }
        Ok(x)
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = bind_frozen(&mut tape, self)?;
        let xv = tape.constant(x.clone())?;
        let y = self.forward(&mut tape, &vars, xv)?;
        Ok(tape.value(y).clone())
    }
}

impl Parameters for Mlp {
    fn parameters(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| l.parameters_mut()).collect()
    }
}

/// Several snapshots with a common node count, stacked for one batched
/// forward pass. Row `t·N + i` of the node-feature matrix is node `i` of
/// snapshot `t`.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    nodes: usize,
    graphs: usize,
    /// `A[i, j] = w_ij` (block diagonal).
    weighted: Arc<Csr>,
    /// `A[i, j] = 1 / deg(i)` for neighbours `j` (block diagonal).
    mean: Arc<Csr>,
    /// `graphs × (graphs · nodes)` averaging operator.
    pool: Arc<Csr>,
}

impl GraphBatch {
    pub fn from_topologies<'a>(topologies: impl IntoIterator<Item = &'a Topology>) -> Result<Self> {
        let mut weighted = Vec::new();
        let mut mean = Vec::new();
        let mut pool = Vec::new();
        let mut nodes: Option<usize> = None;
        let mut graphs = 0;
        for topo in topologies {
            let n = topo.node_count();
            match nodes {
                None => nodes = Some(n),
                Some(expected) if expected != n => {
                    return Err(Error::DimensionMismatch {
                        context: "GraphBatch node count",
                        expected,
                        actual: n,
                    })
                }
                _ => {}
            }
            let offset = graphs * n;
            for i in 0..n {
                let deg = topo.degree(i);
                for (j, w) in topo.neighbors(i) {
                    weighted.push((offset + i, offset + j, w));
                    mean.push((offset + i, offset + j, 1.0 / deg as f64));
                }
                pool.push((graphs, offset + i, 1.0 / n as f64));
            }
            graphs += 1;
        }
        let nodes = nodes.unwrap_or(0);
        let total = graphs * nodes;
        Ok(Self {
            nodes,
            graphs,
            weighted: Arc::new(Csr::from_triplets(total, total, weighted)),
            mean: Arc::new(Csr::from_triplets(total, total, mean)),
            pool: Arc::new(Csr::from_triplets(graphs, total, pool)),
        })
    }

    pub fn from_snapshots(snapshots: &[GraphSnapshot]) -> Result<Self> {
        Self::from_topologies(snapshots.iter().map(|s| s.topology()))
    }

    pub fn single(snapshot: &GraphSnapshot) -> Result<Self> {
        Self::from_topologies([snapshot.topology()])
    }

    pub fn nodes_per_graph(&self) -> usize {
        self.nodes
    }

    pub fn graph_count(&self) -> usize {
        self.graphs
    }

    pub fn total_nodes(&self) -> usize {
        self.nodes * self.graphs
    }

    /// Stacked scalar signals as a `(graphs · N) × 1` column.
    pub fn stack_signals(snapshots: &[GraphSnapshot]) -> Matrix {
        Matrix::column(snapshots.iter().flat_map(|s| s.signals.iter().copied()).collect())
    }

    /// Per-snapshot mean of node rows: `(graphs · N) × d → graphs × d`.
    pub fn pool(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        tape.spmm(&self.pool, h)
    }

    fn check_rows(&self, tape: &Tape, h: Var) -> Result<()> {
        let rows = tape.value(h).rows();
        if rows != self.total_nodes() {
            return Err(Error::DimensionMismatch {
                context: "graph layer node count",
                expected: self.total_nodes(),
                actual: rows,
            });
        }
        Ok(())
    }
}

/// `h_i' = W_self h_i + W_neigh Σ_{j∈N(i)} w_ij h_j + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphConvLayer {
    pub w_self: Matrix,
    pub w_neigh: Matrix,
    pub bias: Matrix,
}

/// `h_i' = W_self h_i + W_neigh mean_{j∈N(i)} h_j + b`; isolated nodes get no
/// neighbour term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SageLayer {
    pub w_self: Matrix,
    pub w_neigh: Matrix,
    pub bias: Matrix,
}

macro_rules! graph_layer {
    ($ty:ident, $agg:ident) => {
        impl $ty {
            pub fn new(rng: &mut Rng, input: usize, output: usize) -> Self {
                Self {
                    w_self: glorot(rng, output, input),
                    w_neigh: glorot(rng, output, input),
                    bias: Matrix::zeros(1, output),
                }
            }

            pub fn input_dim(&self) -> usize {
                self.w_self.cols()
            }

            pub fn output_dim(&self) -> usize {
                self.w_self.rows()
            }

            /// `vars = [w_self, w_neigh, bias]`; `h` is `(graphs · N) × in`.
            pub fn forward(&self, tape: &mut Tape, vars: &[Var], batch: &GraphBatch, h: Var) -> Result<Var> {
                batch.check_rows(tape, h)?;
                let own = tape.linear(h, vars[0], Some(vars[2]))?;
                let agg = tape.spmm(&batch.$agg, h)?;
                let neigh = tape.linear(agg, vars[1], None)?;
                tape.add(own, neigh)
            }

            /// Single-snapshot evaluation; `h` is `N × in`.
            pub fn apply(&self, h: &Matrix, g: &GraphSnapshot) -> Result<Matrix> {
                let batch = GraphBatch::single(g)?;
                let mut tape = Tape::new();
                let vars = bind_frozen(&mut tape, self)?;
                let hv = tape.constant(h.clone())?;
                let y = self.forward(&mut tape, &vars, &batch, hv)?;
                Ok(tape.value(y).clone())
            }
        }

        impl Parameters for $ty {
            fn parameters(&self) -> Vec<&Matrix> {
                vec![&self.w_self, &self.w_neigh, &self.bias]
            }

            fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
                vec![&mut self.w_self, &mut self.w_neigh, &mut self.bias]
            }
        }
    };
}

graph_layer!(GraphConvLayer, weighted);
graph_layer!(SageLayer, mean);
