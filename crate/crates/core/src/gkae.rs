//! Graph Koopman autoencoder.
//!
//! ```text
//! G(t) ─graph encoder + mean pool─▶ g(t) ─Koopman encoder─▶ h(t)
//!      ─K^p─▶ h(t+p) ─Koopman decoder─▶ g(t+p) ─graph decoder─▶ x(t+p)
//! ```
//!
//! Training minimizes the graph reconstruction error of `x(t)` from `g(t)`
//! plus the multi-step linearity error of embeddings,
//! `Σ_{l<L} Σ_t ‖g(t+l) − D(Kˡ E(g(t)))‖²`, with the targets `g(t+l)`
//! detached. Squared norms are taken as per-step element means.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Tape, Var};
use crate::graph::{GraphSequence, GraphSnapshot};
use crate::layers::{bind, bind_frozen, Activation, GraphBatch, GraphConvLayer, Mlp, Parameters, SageLayer};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GkaeConfig {
    /// Node count `N` the graph decoder emits.
    pub nodes: usize,
    /// Graph-embedding width `b`.
    pub embed_dim: usize,
    /// Koopman latent dimension `M`.
    pub koopman_dim: usize,
    pub kae_hidden: usize,
    /// Dense layers in each of the Koopman encoder and decoder.
    pub kae_layers: usize,
    pub decoder_hidden: usize,
}

impl GkaeConfig {
    pub fn new(nodes: usize) -> Self {
        Self {
            nodes,
            embed_dim: 8,
            koopman_dim: 8,
            kae_hidden: 16,
            kae_layers: 6,
            decoder_hidden: 32,
        }
    }

    pub fn with_koopman_dim(mut self, m: usize) -> Self {
        self.koopman_dim = m;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Linearity length `L`: number of Koopman powers in the loss.
    pub linearity_length: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            linearity_length: 50,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GkaeModel {
    pub config: GkaeConfig,
    /// Scalar signal → `b`, LeakyReLU.
    pub graph_conv: GraphConvLayer,
    /// `b → b`, linear; its pooled output is the embedding.
    pub graph_sage: SageLayer,
    pub koopman_encoder: Mlp,
    /// `M × M`, no bias; starts at the identity.
    pub koopman: Matrix,
    pub koopman_decoder: Mlp,
    pub graph_decoder: Mlp,
}

/// Offsets of each sub-module inside the flat parameter list.
struct Layout {
    conv: usize,
    sage: usize,
    kenc: usize,
    k: usize,
    kdec: usize,
    gdec: usize,
}

impl GkaeModel {
    pub fn new(config: GkaeConfig, seed: u64) -> Self {
        let mut rng = seeded(derive_seed(seed, 0x6b_61_65));
        let b = config.embed_dim;
        let graph_conv = GraphConvLayer::new(&mut rng, 1, b);
        let graph_sage = SageLayer::new(&mut rng, b, b);
        let mut enc_widths = Vec::with_capacity(config.kae_layers + 1);
        enc_widths.push(b);
        enc_widths.extend(core::iter::repeat(config.kae_hidden).take(config.kae_layers - 1));
        enc_widths.push(config.koopman_dim);
        let koopman_encoder = Mlp::new(&mut rng, &enc_widths, Activation::Tanh, Activation::Identity);
        let koopman = Matrix::identity(config.koopman_dim);
        let dec_widths: Vec<usize> = enc_widths.iter().rev().copied().collect();
        let koopman_decoder = Mlp::new(&mut rng, &dec_widths, Activation::Tanh, Activation::Identity);
        let graph_decoder = Mlp::new(
            &mut rng,
            &[b, config.decoder_hidden, config.nodes],
            Activation::LeakyRelu,
            Activation::Identity,
        );
        Self {
            config,
            graph_conv,
            graph_sage,
            koopman_encoder,
            koopman,
            koopman_decoder,
            graph_decoder,
        }
    }

    fn layout(&self) -> Layout {
        let kenc = 6;
        let k = kenc + 2 * self.koopman_encoder.layers.len();
        let kdec = k + 1;
        let gdec = kdec + 2 * self.koopman_decoder.layers.len();
        Layout {
            conv: 0,
            sage: 3,
            kenc,
            k,
            kdec,
            gdec,
        }
    }

    pub fn nodes(&self) -> usize {
        self.config.nodes
    }

    /// Node features → pooled embeddings, one row per graph in `batch`.
    pub(crate) fn embed(&self, tape: &mut Tape, vars: &[Var], batch: &GraphBatch, x: Var) -> Result<Var> {
        let lay = self.layout();
        let h = self.graph_conv.forward(tape, &vars[lay.conv..lay.sage], batch, x)?;
        let h = Activation::LeakyRelu.apply(tape, h)?;
        let h = self.graph_sage.forward(tape, &vars[lay.sage..lay.kenc], batch, h)?;
        batch.pool(tape, h)
    }

    pub(crate) fn koopman_encode_var(&self, tape: &mut Tape, vars: &[Var], g: Var) -> Result<Var> {
        let lay = self.layout();
        self.koopman_encoder.forward(tape, &vars[lay.kenc..lay.k], g)
    }

    /// One Koopman step on row-stacked latents: `H Kᵀ`.
    pub(crate) fn advance_var(&self, tape: &mut Tape, vars: &[Var], h: Var) -> Result<Var> {
        tape.linear(h, vars[self.layout().k], None)
    }

    pub(crate) fn koopman_decode_var(&self, tape: &mut Tape, vars: &[Var], h: Var) -> Result<Var> {
        let lay = self.layout();
        self.koopman_decoder.forward(tape, &vars[lay.kdec..lay.gdec], h)
    }

    pub(crate) fn graph_decode_var(&self, tape: &mut Tape, vars: &[Var], g: Var) -> Result<Var> {
        let lay = self.layout();
        self.graph_decoder.forward(tape, &vars[lay.gdec..], g)
    }

    fn check_nodes(&self, n: usize) -> Result<()> {
        if n != self.config.nodes {
            return Err(Error::DimensionMismatch {
                context: "GKAE node count",
                expected: self.config.nodes,
                actual: n,
            });
        }
        Ok(())
    }

    fn check_len(&self, v: &[f64], expected: usize, context: &'static str) -> Result<()> {
        if v.len() != expected {
            return Err(Error::DimensionMismatch {
                context,
                expected,
                actual: v.len(),
            });
        }
        Ok(())
    }

    /// Embeddings of every snapshot, `T × b`.
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

    /// `g = mean_i(Sage(LeakyReLU(GraphConv(x, W))))_i`.
    pub fn encode_graph(&self, snapshot: &GraphSnapshot) -> Result<Vec<f64>> {
        Ok(self.embeddings(core::slice::from_ref(snapshot))?.into_vec())
    }

    /// Row-stacked Koopman encoder.
    pub fn koopman_encode_rows(&self, g: &Matrix) -> Result<Matrix> {
        self.koopman_encoder.apply(g)
    }

    pub fn koopman_decode_rows(&self, h: &Matrix) -> Result<Matrix> {
        self.koopman_decoder.apply(h)
    }

    pub fn graph_decode_rows(&self, g: &Matrix) -> Result<Matrix> {
        self.graph_decoder.apply(g)
    }

    pub fn koopman_encode(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_len(g, self.config.embed_dim, "koopman_encode")?;
        Ok(self.koopman_encode_rows(&Matrix::row_vector(g.to_vec()))?.into_vec())
    }

    pub fn koopman_decode(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_len(h, self.config.koopman_dim, "koopman_decode")?;
        Ok(self.koopman_decode_rows(&Matrix::row_vector(h.to_vec()))?.into_vec())
    }

    pub fn graph_decode(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_len(g, self.config.embed_dim, "graph_decode")?;
        Ok(self.graph_decode_rows(&Matrix::row_vector(g.to_vec()))?.into_vec())
    }

    /// `Kᵖ h` by `p` successive multiplications.
    pub fn koopman_advance(&self, h: &[f64], steps: usize) -> Result<Vec<f64>> {
        self.check_len(h, self.config.koopman_dim, "koopman_advance")?;
        let mut h = h.to_vec();
        for _ in 0..steps {
            h = self.koopman.matvec(&h)?;
        }
        Ok(h)
    }

    /// Latents `Kᵖ h` for `p = 1..=horizon`, one row each.
    fn latent_rollout(&self, h0: &[f64], horizon: usize) -> Result<Matrix> {
        let m = self.config.koopman_dim;
        let mut rows = Matrix::zeros(horizon, m);
        let mut h = h0.to_vec();
        for p in 0..horizon {
            h = self.koopman.matvec(&h)?;
            rows.row_mut(p).copy_from_slice(&h);
        }
        Ok(rows)
    }

    /// `x̂(t+p) = D_GNN(D_KAE(Kᵖ E_KAE(g(t))))` for one snapshot.
    pub fn forward_chain(&self, snapshot: &GraphSnapshot, steps: usize) -> Result<Vec<f64>> {
        let g = self.encode_graph(snapshot)?;
        let h = self.koopman_encode(&g)?;
        let h = self.koopman_advance(&h, steps)?;
        let g = self.koopman_decode(&h)?;
        self.graph_decode(&g)
    }

    /// Embedding forecasts `ĝ(τ+p) = D_KAE(Kᵖ E_KAE(g_τ))`, `p = 1..=horizon`,
    /// as rows of a `horizon × b` matrix.
    pub fn predict_embeddings(&self, g: &[f64], horizon: usize) -> Result<Matrix> {
        let h0 = self.koopman_encode(g)?;
        let latents = self.latent_rollout(&h0, horizon)?;
        if horizon == 0 {
            return Ok(Matrix::zeros(0, self.config.embed_dim));
        }
        self.koopman_decode_rows(&latents)
    }

    /// Signal forecasts for `p = 1..=horizon` from the embedding of `origin`;
    /// column `p − 1` of the returned `N × horizon` matrix is `x̂(p)`.
    pub fn predict_sequence(&self, origin: &GraphSnapshot, horizon: usize) -> Result<Matrix> {
        if horizon == 0 {
            return Ok(Matrix::zeros(self.config.nodes, 0));
        }
        let g = self.encode_graph(origin)?;
        let embeddings = self.predict_embeddings(&g, horizon)?;
        Ok(self.graph_decode_rows(&embeddings)?.transpose())
    }

    /// Records the full training objective on `tape`.
    pub(crate) fn record_loss(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &GraphBatch,
        stacked: &Matrix,
        targets: &Matrix,
        linearity: usize,
    ) -> Result<Var> {
        let t_len = batch.graph_count();
        let x = tape.constant(stacked.clone())?;
        let g = self.embed(tape, vars, batch, x)?;

        let x_hat = self.graph_decode_var(tape, vars, g)?;
        let x_true = tape.constant(targets.clone())?;
        let recon = tape.mse(x_hat, x_true)?;
        let mut total = tape.scale(recon, t_len as f64)?;

        let g_target = tape.constant(tape.value(g).clone())?;
        let mut h = self.koopman_encode_var(tape, vars, g)?;
        for l in 0..linearity {
            let rows = t_len - l;
            if l > 0 {
                h = tape.slice_rows(h, 0, rows)?;
                h = self.advance_var(tape, vars, h)?;
            }
            let decoded = self.koopman_decode_var(tape, vars, h)?;
            let target = tape.slice_rows(g_target, l, t_len)?;
            let err = tape.mse(decoded, target)?;
            let err = tape.scale(err, rows as f64)?;
            total = tape.add(total, err)?;
        }
        Ok(total)
    }

}

impl Parameters for GkaeModel {
    fn parameters(&self) -> Vec<&Matrix> {
        let mut p = Vec::new();
        p.extend(self.graph_conv.parameters());
        p.extend(self.graph_sage.parameters());
        p.extend(self.koopman_encoder.parameters());
        p.push(&self.koopman);
        p.extend(self.koopman_decoder.parameters());
        p.extend(self.graph_decoder.parameters());
        p
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = Vec::new();
        p.extend(self.graph_conv.parameters_mut());
        p.extend(self.graph_sage.parameters_mut());
        p.extend(self.koopman_encoder.parameters_mut());
        p.push(&mut self.koopman);
        p.extend(self.koopman_decoder.parameters_mut());
        p.extend(self.graph_decoder.parameters_mut());
        p
    }
}

/// Precomputed batch inputs for repeated loss evaluation over a sequence.
pub struct GkaeBatch {
    batch: GraphBatch,
    stacked: Matrix,
    targets: Matrix,
}

impl GkaeBatch {
    pub fn new(seq: &GraphSequence) -> Result<Self> {
        let snaps = seq.snapshots();
        Ok(Self {
            batch: GraphBatch::from_snapshots(snaps)?,
            stacked: GraphBatch::stack_signals(snaps),
            targets: seq.signal_matrix().transpose(),
        })
    }

    pub fn len(&self) -> usize {
        self.batch.graph_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_linearity(linearity: usize, t_len: usize) -> Result<()> {
    if linearity == 0 || linearity >= t_len {
        return Err(Error::LTooLarge { l: linearity, t: t_len });
    }
    Ok(())
}

/// Value of the training objective on `seq` with linearity length `linearity`.
pub fn loss_gkae(model: &GkaeModel, seq: &GraphSequence, linearity: usize) -> Result<f64> {
    check_linearity(linearity, seq.len())?;
    model.check_nodes(seq.node_count())?;
    let data = GkaeBatch::new(seq)?;
    let mut tape = Tape::new();
    let vars = bind_frozen(&mut tape, model)?;
    let loss = model.record_loss(&mut tape, &vars, &data.batch, &data.stacked, &data.targets, linearity)?;
    Ok(tape.scalar(loss))
}

/// Loss and parameter gradients (in [`Parameters`] order).
pub fn loss_and_gradients(model: &GkaeModel, data: &GkaeBatch, linearity: usize) -> Result<(f64, Vec<Matrix>)> {
    check_linearity(linearity, data.len())?;
    let mut tape = Tape::new();
    let vars = bind(&mut tape, model)?;
    let loss = model.record_loss(&mut tape, &vars, &data.batch, &data.stacked, &data.targets, linearity)?;
    let mut grads = tape.backward(loss)?;
    let shapes = model.parameter_shapes();
    let g = vars
        .iter()
        .zip(shapes)
        .map(|(v, s)| grads.take_or_zeros(*v, s))
        .collect();
    Ok((tape.scalar(loss), g))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedGkae {
    pub model: GkaeModel,
    /// Objective value at the start of each epoch.
    pub loss_history: Vec<f64>,
}

/// Full-sequence Adam training; one gradient step per epoch.
pub fn train_gkae(seq: &GraphSequence, model_config: GkaeConfig, config: &TrainConfig) -> Result<TrainedGkae> {
    let model = GkaeModel::new(model_config, config.seed);
    train_gkae_from(model, seq, config)
}

/// As [`train_gkae`] but starting from an existing model.
pub fn train_gkae_from(mut model: GkaeModel, seq: &GraphSequence, config: &TrainConfig) -> Result<TrainedGkae> {
    if config.epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be positive".into()));
    }
    if seq.len() < config.linearity_length + 1 {
        return Err(Error::LTooLarge {
            l: config.linearity_length,
            t: seq.len(),
        });
    }
    model.check_nodes(seq.node_count())?;
    let data = GkaeBatch::new(seq)?;
    let mut adam = Adam::new(config.learning_rate, model.parameter_shapes());
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let (loss, grads) = loss_and_gradients(&model, &data, config.linearity_length)?;
        history.push(loss);
        adam.step(&mut model.parameters_mut(), &grads)?;
    }
    Ok(TrainedGkae {
        model,
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;
    use alloc::sync::Arc;
    use alloc::vec;

    fn small_config() -> GkaeConfig {
        GkaeConfig {
            nodes: 4,
            embed_dim: 3,
            koopman_dim: 2,
            kae_hidden: 5,
            kae_layers: 2,
            decoder_hidden: 6,
        }
    }

    fn ring_sequence(t_len: usize) -> GraphSequence {
        let topo = Topology::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], 1.0).unwrap();
        let x = Matrix::from_fn(4, t_len, |i, t| (0.3 * t as f64 + i as f64).sin());
        GraphSequence::static_graph(topo, &x, 0.1).unwrap()
    }

    #[test]
    fn default_parameter_count_is_about_four_thousand() {
        let model = GkaeModel::new(GkaeConfig::new(20), 1);
        let count = model.parameter_count();
        assert!((3_000..6_000).contains(&count), "{count}");
        assert_eq!(model.koopman.shape(), (8, 8));
        assert_eq!(model.koopman_encoder.layers.len(), 6);
        assert_eq!(model.koopman_decoder.layers.len(), 6);
        assert_eq!(model.graph_decoder.layers.len(), 2);
    }

    #[test]
    fn zero_encoder_weights_give_bias_embedding() {
        let mut model = GkaeModel::new(small_config(), 2);
        for p in model.graph_conv.parameters_mut() {
            *p = Matrix::zeros(p.rows(), p.cols());
        }
        model.graph_sage.w_self = Matrix::zeros(3, 3);
        model.graph_sage.w_neigh = Matrix::zeros(3, 3);
        model.graph_sage.bias = Matrix::from_rows(&[[0.5, -1.25, 2.0]]);
        let seq = ring_sequence(3);
        assert_eq!(model.encode_graph(seq.snapshot(1)).unwrap(), vec![0.5, -1.25, 2.0]);
    }

    #[test]
    fn koopman_advance_examples() {
        let mut model = GkaeModel::new(small_config(), 3);
        model.koopman = Matrix::identity(2);
        let h = [0.3, -0.4];
        assert_eq!(model.koopman_advance(&h, 7).unwrap(), h.to_vec());
        model.koopman = Matrix::from_rows(&[[0.9, 0.2], [-0.1, 1.1]]);
        assert_eq!(model.koopman_advance(&h, 0).unwrap(), h.to_vec());
        model.koopman = Matrix::diagonal(&[0.5, 0.5]);
        assert_eq!(model.koopman_advance(&[1.0, 1.0], 3).unwrap(), vec![0.125, 0.125]);
    }

    #[test]
    fn zero_input_through_zero_biases_is_zero() {
        let model = GkaeModel::new(small_config(), 4);
        assert_eq!(model.koopman_encode(&[0.0; 3]).unwrap(), vec![0.0; 2]);
        assert_eq!(model.koopman_decode(&[0.0; 2]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn dimension_errors() {
        let model = GkaeModel::new(small_config(), 5);
        assert!(model.koopman_encode(&[0.0; 4]).is_err());
        assert!(model.koopman_advance(&[0.0; 3], 1).is_err());
        let topo = Topology::empty(5);
        let g = GraphSnapshot::new(vec![0.0; 5], Arc::new(topo)).unwrap();
        assert!(matches!(model.encode_graph(&g), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn prediction_zero_horizon_is_empty() {
        let model = GkaeModel::new(small_config(), 6);
        let seq = ring_sequence(3);
        let p = model.predict_sequence(seq.snapshot(0), 0).unwrap();
        assert_eq!(p.shape(), (4, 0));
    }

    #[test]
    fn predict_sequence_columns_equal_forward_chain() {
        let model = GkaeModel::new(small_config(), 7);
        let seq = ring_sequence(3);
        let origin = seq.snapshot(2);
        let preds = model.predict_sequence(origin, 5).unwrap();
        for p in 1..=5 {
            assert_eq!(preds.column_values(p - 1), model.forward_chain(origin, p).unwrap());
        }
    }

    #[test]
    fn linearity_length_checked() {
        let model = GkaeModel::new(small_config(), 8);
        let seq = ring_sequence(4);
        assert_eq!(loss_gkae(&model, &seq, 4), Err(Error::LTooLarge { l: 4, t: 4 }));
        assert!(loss_gkae(&model, &seq, 3).is_ok());
        let cfg = TrainConfig {
            epochs: 1,
            linearity_length: 4,
            ..TrainConfig::default()
        };
        assert!(train_gkae(&seq, small_config(), &cfg).is_err());
    }

    #[test]
    fn training_is_deterministic_and_decreases_loss() {
        let seq = ring_sequence(30);
        let cfg = TrainConfig {
            epochs: 40,
            linearity_length: 5,
            learning_rate: 1e-2,
            seed: 11,
        };
        let a = train_gkae(&seq, small_config(), &cfg).unwrap();
        let b = train_gkae(&seq, small_config(), &cfg).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert!(a.loss_history.last().unwrap() < &a.loss_history[0]);
    }
}
