//! Sampling masks and the latent-consistency (LC) autoencoder.
//!
//! The LC encoder sees only the masked snapshots `(y'(t), W'(t))` and is
//! trained so that its pooled embedding `ḡ(t)` matches the GKAE embedding:
//! the encoded `g(t)` on the observed prefix `t < τ`, and the Koopman
//! forecast `ĝ(t)` rolled out from `g(τ − 1)` afterwards. Its decoder is
//! additionally pulled toward the (frozen) GKAE graph decoder on `t ≥ τ`.
//! Missing entries are read off the LC decoder output.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Tape, Var};
use crate::gkae::GkaeModel;
use crate::graph::{GraphKind, GraphSequence, GraphSnapshot, Topology};
use crate::layers::{bind, bind_frozen, Activation, GraphBatch, Mlp, Parameters, SageLayer};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

/// Binary observation pattern `J` (`N × T`). Columns `t < τ` are all ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingMask {
    nodes: usize,
    steps: usize,
    pub tau: usize,
    pub rate: f64,
    /// Row-major `observed[n · T + t]`.
    observed: Vec<bool>,
}

impl SamplingMask {
    pub fn full(nodes: usize, steps: usize, tau: usize) -> Self {
        Self {
            nodes,
            steps,
            tau,
            rate: 0.0,
            observed: vec![true; nodes * steps],
        }
    }

    /// From a row-major `observed[n · T + t]` pattern.
    pub fn from_observed(nodes: usize, steps: usize, tau: usize, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != nodes * steps {
            return Err(Error::DimensionMismatch {
                context: "SamplingMask pattern length",
                expected: nodes * steps,
                actual: observed.len(),
            });
        }
        check_tau(tau, steps)?;
        let mask = Self {
            nodes,
            steps,
            tau,
            rate: 0.0,
            observed,
        };
        if (0..tau).any(|t| !mask.column_is_full(t)) {
            return Err(Error::InvalidConfig("mask hides entries before tau".into()));
        }
        let hidden = mask.hidden_count() as f64;
        let test_entries = (nodes * (steps - tau)) as f64;
        Ok(Self {
            rate: if test_entries > 0.0 { hidden / test_entries } else { 0.0 },
            ..mask
        })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_observed(&self, node: usize, t: usize) -> bool {
        self.observed[node * self.steps + t]
    }

    fn set(&mut self, node: usize, t: usize, observed: bool) {
        self.observed[node * self.steps + t] = observed;
    }

    /// `J[:, t]` as 0/1 values.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.nodes).map(|n| if self.is_observed(n, t) { 1.0 } else { 0.0 }).collect()
    }

    pub fn column_is_full(&self, t: usize) -> bool {
        (0..self.nodes).all(|n| self.is_observed(n, t))
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.nodes, self.steps, |n, t| if self.is_observed(n, t) { 1.0 } else { 0.0 })
    }

    pub fn hidden_count(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::RateOutOfRange(rate));
    }
    Ok(())
}

fn check_tau(tau: usize, steps: usize) -> Result<()> {
    if tau >= steps {
        return Err(Error::InvalidConfig(alloc::format!("tau {tau} must be below T = {steps}")));
    }
    Ok(())
}

/// For every `t ≥ τ`, `⌊rate · N⌋` distinct nodes drawn uniformly are hidden.
pub fn make_mask(nodes: usize, steps: usize, tau: usize, rate: f64, seed: u64) -> Result<SamplingMask> {
    make_mask_with_blackout(nodes, steps, tau, rate, seed, &[])
}

/// As [`make_mask`], but `blackout` nodes are hidden at every `t ≥ τ`. The
/// remaining hidden slots of each column, if any, are drawn from the other
/// nodes.
pub fn make_mask_with_blackout(
    nodes: usize,
    steps: usize,
    tau: usize,
    rate: f64,
    seed: u64,
    blackout: &[usize],
) -> Result<SamplingMask> {
    check_rate(rate)?;
    check_tau(tau, steps)?;
    if let Some(&bad) = blackout.iter().find(|&&b| b >= nodes) {
        return Err(Error::DimensionMismatch {
            context: "blackout node index",
            expected: nodes,
            actual: bad,
        });
    }
    let hidden = libm::floor(rate * nodes as f64) as usize;
    let others: Vec<usize> = (0..nodes).filter(|n| !blackout.contains(n)).collect();
    let extra = hidden.saturating_sub(blackout.len()).min(others.len());
    if blackout.len() >= nodes {
        return Err(Error::InvalidConfig("blackout covers every node".into()));
    }
    let mut rng = seeded(derive_seed(seed, 0x6d61_736b));
    let mut mask = SamplingMask::full(nodes, steps, tau);
    mask.rate = rate;
    for t in tau..steps {
        for &b in blackout {
            mask.set(b, t, false);
        }
        for k in index::sample(&mut rng, others.len(), extra).into_iter() {
            mask.set(others[k], t, false);
        }
    }
    Ok(mask)
}

/// `y'(t) = J(:,t) ⊙ x(t)` and `W'(t) = W(t) ⊙ J(:,t)J(:,t)ᵀ`.
pub fn apply_mask(seq: &GraphSequence, mask: &SamplingMask) -> Result<GraphSequence> {
    if (mask.nodes, mask.steps) != (seq.node_count(), seq.len()) {
        return Err(Error::DimensionMismatch {
            context: "apply_mask sequence shape",
            expected: mask.nodes * mask.steps,
            actual: seq.node_count() * seq.len(),
        });
    }
    let mut any_masked = false;
    let snapshots = seq
        .snapshots()
        .iter()
        .enumerate()
        .map(|(t, snap)| {
            if mask.column_is_full(t) {
                return Ok(snap.clone());
            }
            any_masked = true;
            let j = mask.column(t);
            let signals = snap.signals.iter().zip(&j).map(|(x, m)| x * m).collect();
            let weights = Matrix::from_fn(snap.node_count(), snap.node_count(), |l, m| {
                snap.weights()[(l, m)] * j[l] * j[m]
            });
            GraphSnapshot::new(signals, Arc::new(Topology::from_weights(weights)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let kind = if any_masked { GraphKind::Type3 } else { seq.kind() };
    GraphSequence::new(snapshots, kind, seq.dt)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LcConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub decoder_hidden: usize,
    pub seed: u64,
}

impl Default for LcConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-2,
            beta1: 1.0,
            beta2: 1e-2,
            decoder_hidden: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcModel {
    pub sage1: SageLayer,
    pub sage2: SageLayer,
    pub decoder: Mlp,
    pub beta1: f64,
    pub beta2: f64,
}

impl LcModel {
    pub fn new(nodes: usize, embed_dim: usize, config: &LcConfig) -> Self {
        let mut rng = seeded(derive_seed(config.seed, 0x6c63));
        Self {
            sage1: SageLayer::new(&mut rng, 1, embed_dim),
            sage2: SageLayer::new(&mut rng, embed_dim, embed_dim),
            decoder: Mlp::new(
                &mut rng,
                &[embed_dim, config.decoder_hidden, nodes],
                Activation::LeakyRelu,
                Activation::Identity,
            ),
            beta1: config.beta1,
            beta2: config.beta2,
        }
    }

    pub fn nodes(&self) -> usize {
        self.decoder.output_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.sage2.output_dim()
    }

    fn embed(&self, tape: &mut Tape, vars: &[Var], batch: &GraphBatch, x: Var) -> Result<Var> {
        let h = self.sage1.forward(tape, &vars[0..3], batch, x)?;
        let h = Activation::LeakyRelu.apply(tape, h)?;
        let h = self.sage2.forward(tape, &vars[3..6], batch, h)?;
        batch.pool(tape, h)
    }

    fn check_nodes(&self, n: usize) -> Result<()> {
        if n != self.nodes() {
            return Err(Error::DimensionMismatch {
                context: "LC node count",
                expected: self.nodes(),
                actual: n,
            });
        }
        Ok(())
    }

    /// `ḡ(t)` for every snapshot, `T × b`.
    pub fn embeddings(&self, snapshots: &[GraphSnapshot]) -> Result<Matrix> {
        if let Some(s) = snapshots.first() {
            self.check_nodes(s.node_count())?;
        }
        let batch = GraphBatch::from_snapshots(snapshots)?;
        let mut tape = Tape::new();
        let vars = bind_frozen(&mut tape, self)?;
        let x = tape.constant(GraphBatch::stack_signals(snapshots))?;
        let g = self.embed(&mut tape, &vars, &batch, x)?;
        Ok(tape.value(g).clone())
    }

    pub fn lc_encode(&self, masked: &GraphSnapshot) -> Result<Vec<f64>> {
        Ok(self.embeddings(core::slice::from_ref(masked))?.into_vec())
    }

    pub fn lc_decode(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.embed_dim() {
            return Err(Error::DimensionMismatch {
                context: "lc_decode",
                expected: self.embed_dim(),
                actual: g.len(),
            });
        }
        Ok(self.decoder.apply(&Matrix::row_vector(g.to_vec()))?.into_vec())
    }

    /// `x̄(t) = D_LC(E_LC(y'(t), W'(t)))` as an `N × T` matrix.
    pub fn reconstruct(&self, masked: &GraphSequence) -> Result<Matrix> {
        let g = self.embeddings(masked.snapshots())?;
        Ok(self.decoder.apply(&g)?.transpose())
    }

    fn record_loss(&self, tape: &mut Tape, vars: &[Var], data: &LcBatch, targets: &LcTargets) -> Result<Var> {
        let t_len = data.batch.graph_count();
        let x = tape.constant(data.stacked.clone())?;
        let g = self.embed(tape, vars, &data.batch, x)?;
        let target = tape.constant(targets.embeddings.clone())?;

        let latent = tape.mse(g, target)?;
        let latent = tape.scale(latent, t_len as f64)?;
        let cos = tape.cosine_similarity(g, target)?;
        let cos = tape.sum(cos)?;
        let cosine = tape.scale(cos, -1.0)?;
        let cosine = tape.add_scalar(cosine, t_len as f64)?;
        let consistency = tape.add(latent, cosine)?;
        let mut total = tape.scale(consistency, self.beta1)?;

        let future = t_len - targets.tau;
        if future > 0 {
            let g_future = tape.slice_rows(g, targets.tau, t_len)?;
            let decoded = self.decoder.forward(tape, &vars[6..], g_future)?;
            let reference = tape.constant(targets.decoded.clone())?;
            let par = tape.mse(decoded, reference)?;
            let par = tape.scale(par, (future as f64) * self.beta2)?;
            total = tape.add(total, par)?;
        }
        Ok(total)
    }
}

impl Parameters for LcModel {
    fn parameters(&self) -> Vec<&Matrix> {
        let mut p = self.sage1.parameters();
        p.extend(self.sage2.parameters());
        p.extend(self.decoder.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = self.sage1.parameters_mut();
        p.extend(self.sage2.parameters_mut());
        p.extend(self.decoder.parameters_mut());
        p
    }
}

/// Embedding targets for LC training: GKAE encodings for `t < τ`, Koopman
/// forecasts afterwards, and the GKAE graph decoding of the forecasts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcTargets {
    pub tau: usize,
    /// `T × b`.
    pub embeddings: Matrix,
    /// `(T − τ) × N`: `D_GNN(ĝ(t))` for `t ≥ τ`.
    pub decoded: Matrix,
}

/// Builds targets for a sequence of length `steps` whose first `tau`
/// snapshots (`prefix`) are fully observed.
pub fn lc_targets(gkae: &GkaeModel, prefix: &[GraphSnapshot], steps: usize) -> Result<LcTargets> {
    let tau = prefix.len();
    if tau == 0 {
        return Err(Error::InvalidConfig("LC targets need a non-empty observed prefix".into()));
    }
    check_tau(tau, steps + 1)?;
    let observed = gkae.embeddings(prefix)?;
    let forecast = gkae.predict_embeddings(observed.row(tau - 1), steps - tau)?;
    let b = observed.cols();
    let mut embeddings = Matrix::zeros(steps, b);
    for t in 0..steps {
        let row = if t < tau { observed.row(t) } else { forecast.row(t - tau) };
        embeddings.row_mut(t).copy_from_slice(row);
    }
    let decoded = if steps > tau {
        gkae.graph_decode_rows(&forecast)?
    } else {
        Matrix::zeros(0, gkae.nodes())
    };
    Ok(LcTargets {
        tau,
        embeddings,
        decoded,
    })
}

struct LcBatch {
    batch: GraphBatch,
    stacked: Matrix,
}

impl LcBatch {
    fn new(masked: &GraphSequence) -> Result<Self> {
        Ok(Self {
            batch: GraphBatch::from_snapshots(masked.snapshots())?,
            stacked: GraphBatch::stack_signals(masked.snapshots()),
        })
    }
}

fn check_targets(model: &LcModel, masked: &GraphSequence, targets: &LcTargets) -> Result<()> {
    model.check_nodes(masked.node_count())?;
    if targets.embeddings.rows() != masked.len() {
        return Err(Error::MissingTargets {
            expected: masked.len(),
            actual: targets.embeddings.rows(),
        });
    }
    if targets.decoded.rows() != masked.len() - targets.tau {
        return Err(Error::MissingTargets {
            expected: masked.len() - targets.tau,
            actual: targets.decoded.rows(),
        });
    }
    Ok(())
}

/// `β₁(L_latent + L_cosine) + β₂ L_par`, squared norms as per-step element
/// means and `L_cosine = Σ_t (1 − cos(ḡ(t), g(t)))`.
pub fn loss_lc(model: &LcModel, masked: &GraphSequence, targets: &LcTargets) -> Result<f64> {
    check_targets(model, masked, targets)?;
    let data = LcBatch::new(masked)?;
    let mut tape = Tape::new();
    let vars = bind_frozen(&mut tape, model)?;
    let loss = model.record_loss(&mut tape, &vars, &data, targets)?;
    Ok(tape.scalar(loss))
}

fn gradients(model: &LcModel, data: &LcBatch, targets: &LcTargets) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let vars = bind(&mut tape, model)?;
    let loss = model.record_loss(&mut tape, &vars, data, targets)?;
    let mut grads = tape.backward(loss)?;
    let g = vars
        .iter()
        .zip(model.parameter_shapes())
        .map(|(v, s)| grads.take_or_zeros(*v, s))
        .collect();
    Ok((tape.scalar(loss), g))
}

/// [`loss_lc`] and its gradient for every parameter, in [`Parameters`] order.
pub fn loss_lc_and_gradients(model: &LcModel, masked: &GraphSequence, targets: &LcTargets) -> Result<(f64, Vec<Matrix>)> {
    check_targets(model, masked, targets)?;
    gradients(model, &LcBatch::new(masked)?, targets)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedLc {
    pub model: LcModel,
    pub targets: LcTargets,
    pub loss_history: Vec<f64>,
}

/// Trains a fresh LC model on `masked` against targets from the (frozen)
/// GKAE. The first `tau` snapshots of `masked` must be fully observed.
pub fn train_lc(gkae: &GkaeModel, masked: &GraphSequence, tau: usize, config: &LcConfig) -> Result<TrainedLc> {
    if config.epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be positive".into()));
    }
    check_tau(tau, masked.len())?;
    let targets = lc_targets(gkae, &masked.snapshots()[..tau], masked.len())?;
    let mut model = LcModel::new(masked.node_count(), gkae.config.embed_dim, config);
    check_targets(&model, masked, &targets)?;
    let data = LcBatch::new(masked)?;
    let mut adam = Adam::new(config.learning_rate, model.parameter_shapes());
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let (loss, grads) = gradients(&model, &data, &targets)?;
        history.push(loss);
        adam.step(&mut model.parameters_mut(), &grads)?;
    }
    Ok(TrainedLc {
        model,
        targets,
        loss_history: history,
    })
}
