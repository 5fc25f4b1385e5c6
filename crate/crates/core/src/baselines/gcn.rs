//! Four-layer graph-convolution baselines: a masked autoencoder for
//! reconstruction and a one-step predictor rolled out for forecasting.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Tape, Var};
use crate::graph::{GraphSequence, GraphSnapshot};
use crate::layers::{bind, bind_frozen, Activation, GraphBatch, GraphConvLayer, Parameters};
use crate::lcrecon::SamplingMask;
use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GcnConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 1e-2,
            hidden: 8,
            seed: 0,
        }
    }
}

/// `1 → h → h → h → 1`, LeakyReLU between layers, linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnStack {
    pub layers: Vec<GraphConvLayer>,
}

impl GcnStack {
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut rng = seeded(derive_seed(seed, 0x67636e));
        let widths = [1, hidden, hidden, hidden, 1];
        Self {
            layers: widths.windows(2).map(|w| GraphConvLayer::new(&mut rng, w[0], w[1])).collect(),
        }
    }

    fn forward(&self, tape: &mut Tape, vars: &[Var], batch: &GraphBatch, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, &vars[3 * k..3 * k + 3], batch, h)?;
            if k < last {
                h = Activation::LeakyRelu.apply(tape, h)?;
            }
        }
        Ok(h)
    }

    /// Output signal for every snapshot, stacked as a `(T · N) × 1` column.
    pub fn apply(&self, snapshots: &[GraphSnapshot]) -> Result<Matrix> {
        let batch = GraphBatch::from_snapshots(snapshots)?;
        let mut tape = Tape::new();
        let vars = bind_frozen(&mut tape, self)?;
        let x = tape.constant(GraphBatch::stack_signals(snapshots))?;
        let y = self.forward(&mut tape, &vars, &batch, x)?;
        Ok(tape.value(y).clone())
    }
}

impl Parameters for GcnStack {
    fn parameters(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| l.parameters_mut()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnResult {
    pub estimate: Matrix,
    pub model: GcnStack,
    pub loss_history: Vec<f64>,
}

/// Precomputed inputs for the weighted squared-error objective
/// `(1 / Σw) Σ_rows w · (f(input) − target)²`.
pub struct GcnObjective {
    batch: GraphBatch,
    stacked: Matrix,
    target: Matrix,
    weight: Matrix,
    scale: f64,
}

impl GcnObjective {
    /// `target` and `weight` are `(T · N) × 1` columns stacked like the inputs.
    pub fn new(inputs: &[GraphSnapshot], target: Matrix, weight: Matrix) -> Result<Self> {
        let active: f64 = weight.as_slice().iter().sum();
        if active == 0.0 {
            return Err(Error::EmptyScope);
        }
        let stacked = GraphBatch::stack_signals(inputs);
        for m in [&target, &weight] {
            if m.shape() != stacked.shape() {
                return Err(Error::ShapeMismatch {
                    op: "gcn objective",
                    lhs: stacked.shape(),
                    rhs: m.shape(),
                });
            }
        }
        Ok(Self {
            batch: GraphBatch::from_snapshots(inputs)?,
            scale: weight.len() as f64 / active,
            stacked,
            target,
            weight,
        })
    }

    /// Loss and gradients in [`Parameters`] order.
    pub fn loss_and_gradients(&self, model: &GcnStack) -> Result<(f64, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let vars = bind(&mut tape, model)?;
        let x = tape.constant(self.stacked.clone())?;
        let y = model.forward(&mut tape, &vars, &self.batch, x)?;
        let w = tape.constant(self.weight.clone())?;
        let y = tape.hadamard(y, w)?;
        let wt = self.target.zip_map(&self.weight, "gcn target", |t, w| t * w)?;
        let t = tape.constant(wt)?;
        let loss = tape.mse(y, t)?;
        let loss = tape.scale(loss, self.scale)?;
        let mut grads = tape.backward(loss)?;
        let g = vars
            .iter()
            .zip(model.parameter_shapes())
            .map(|(v, s)| grads.take_or_zeros(*v, s))
            .collect();
        Ok((tape.scalar(loss), g))
    }
}

fn fit(model: &mut GcnStack, objective: &GcnObjective, cfg: &GcnConfig) -> Result<Vec<f64>> {
    if cfg.epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be positive".into()));
    }
    let mut adam = Adam::new(cfg.learning_rate, model.parameter_shapes());
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (loss, grads) = objective.loss_and_gradients(model)?;
        history.push(loss);
        adam.step(&mut model.parameters_mut(), &grads)?;
    }
    Ok(history)
}

fn unstack(column: &Matrix, nodes: usize, steps: usize) -> Matrix {
    Matrix::from_fn(nodes, steps, |i, t| column[(t * nodes + i, 0)])
}

/// Graph autoencoder fitted to the observed entries of `data` (`N × T`,
/// hidden entries zero) on the topologies of `seq`.
pub fn gcnae_reconstruct(seq: &GraphSequence, data: &Matrix, mask: &SamplingMask, cfg: &GcnConfig) -> Result<GcnResult> {
    let (n, steps) = (seq.node_count(), seq.len());
    if data.shape() != (n, steps) || (mask.nodes(), mask.steps()) != (n, steps) {
        return Err(Error::ShapeMismatch {
            op: "gcnae_reconstruct",
            lhs: (n, steps),
            rhs: data.shape(),
        });
    }
    let inputs = seq.with_signal_matrix(data)?;
    let j = &mask.to_matrix();
    let observed = Matrix::column((0..steps).flat_map(|t| (0..n).map(move |i| j[(i, t)])).collect());
    let target = Matrix::column((0..steps).flat_map(|t| (0..n).map(move |i| data[(i, t)])).collect());
    let objective = GcnObjective::new(inputs.snapshots(), target, observed)?;
    let mut model = GcnStack::new(cfg.hidden, cfg.seed);
    let history = fit(&mut model, &objective, cfg)?;
    let estimate = unstack(&model.apply(inputs.snapshots())?, n, steps);
    if !estimate.is_finite() {
        return Err(Error::NonFinite { op: "gcnae_reconstruct" });
    }
    Ok(GcnResult {
        estimate,
        model,
        loss_history: history,
    })
}

/// One-step predictor `x(t) ↦ x(t+1)` trained on `train`, then rolled out
/// for `horizon` steps from its last snapshot (whose topology is reused).
/// Returns the trained model and the `N × horizon` forecast.
pub fn gcn_forecast(train: &GraphSequence, horizon: usize, cfg: &GcnConfig) -> Result<GcnResult> {
    let steps = train.len();
    if steps < 2 {
        return Err(Error::InvalidConfig("GCN forecast needs at least two training steps".into()));
    }
    let n = train.node_count();
    let inputs = &train.snapshots()[..steps - 1];
    let target = Matrix::column(train.snapshots()[1..].iter().flat_map(|s| s.signals.iter().copied()).collect());
    let weight = Matrix::filled(target.rows(), 1, 1.0);
    let objective = GcnObjective::new(inputs, target, weight)?;
    let mut model = GcnStack::new(cfg.hidden, cfg.seed);
    let history = fit(&mut model, &objective, cfg)?;

    let mut current = train.snapshot(steps - 1).clone();
    let mut forecast = Matrix::zeros(n, horizon);
    for p in 0..horizon {
        let next = model.apply(core::slice::from_ref(&current))?.into_vec();
        forecast.set_column(p, &next);
        current = current.with_signals(next)?;
    }
    if !forecast.is_finite() {
        return Err(Error::NonFinite { op: "gcn_forecast" });
    }
    Ok(GcnResult {
        estimate: forecast,
        model,
        loss_history: history,
    })
}
