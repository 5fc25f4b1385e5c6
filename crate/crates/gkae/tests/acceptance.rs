//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! (written straight to stderr so it shows even when output is captured)
//! and then asserts. The tests share one lock so that their runtimes are
//! measured without competing for the CPU.

use std::io::Write as _;
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use gkae::config::{ExperimentConfig, ModelSpec, Task};
use gkae::experiment::{
    embedding_variance, forecast, forecast_truth, mask_for, prepare, reconstruct, run_experiment, score_forecast,
    score_reconstruction, train_on_prefix, ForecastMethod, ReconMethod,
};
use gkae_core::autodiff::{Csr, Tape, Var};
use gkae_core::baselines::{tgs_reconstruct, GcnObjective, GcnStack, SmoothnessObjective, TgsConfig};
use gkae_core::datasets::DatasetBundle;
use gkae_core::gkae::{loss_and_gradients, GkaeBatch, GkaeConfig, GkaeModel};
use gkae_core::graph::{
    component_count, eigendecompose, gft, igft, laplacian_of, smoothness_s2, GraphKind, GraphSequence, GraphSnapshot,
    Topology,
};
use gkae_core::layers::{bind, Activation, DenseLayer, GraphBatch, GraphConvLayer, Mlp, Parameters, SageLayer};
use gkae_core::lcrecon::{apply_mask, lc_targets, loss_lc, loss_lc_and_gradients, make_mask, train_lc, LcConfig, LcModel};
use gkae_core::rng::seeded;
use gkae_core::Matrix;
use rand::Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(criterion: u32, pass: bool, detail: String) {
    let line = format!("criterion {criterion}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn random_topology(rng: &mut impl Rng, n: usize, p: f64) -> Topology {
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(p) {
                let v = rng.gen_range(0.1..3.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    Topology::from_weights(w).unwrap()
}

fn connected_topology(rng: &mut impl Rng, n: usize) -> Topology {
    let mut w = random_topology(rng, n, 0.3).weights().clone();
    for i in 1..n {
        if w[(i - 1, i)] == 0.0 {
            w[(i - 1, i)] = 1.0;
            w[(i, i - 1)] = 1.0;
        }
    }
    Topology::from_weights(w).unwrap()
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

// ---------------------------------------------------------------------------
// 1. Spectral oracle suite

#[test]
fn criterion_1_spectral_oracles() {
    let _lock = serial();
    let start = Instant::now();
    let mut worst_s2 = 0.0f64;
    let mut worst_gft = 0.0f64;
    let mut worst_l1 = 0.0f64;
    let mut bound_violations = 0usize;
    let mut sandwich_violations = 0usize;
    let mut connected = 0usize;
    for seed in 0..200u64 {
        let mut rng = seeded(seed);
        let n = rng.gen_range(2..=12);
        let p = rng.gen_range(0.15..0.9);
        let topo = Arc::new(random_topology(&mut rng, n, p));
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let snap = GraphSnapshot::new(x.clone(), topo.clone()).unwrap();

        let edge_sum: f64 = (0..n)
            .flat_map(|l| ((l + 1)..n).map(move |m| (l, m)))
            .map(|(l, m)| topo.weight(l, m) * (x[l] - x[m]).powi(2))
            .sum();
        let s2 = smoothness_s2(&snap, &x).unwrap();
        worst_s2 = worst_s2.max((s2 - edge_sum).abs() / edge_sum.abs().max(1e-300));

        let lap = laplacian_of(&topo);
        let spec = eigendecompose(&lap).unwrap();
        let back = igft(&spec, &gft(&spec, &x).unwrap()).unwrap();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst_gft = worst_gft.max(diff / norm.max(1e-300));

        let lam = &spec.eigenvalues;
        let scale = lam[n - 1].abs().max(1.0);
        if component_count(&topo) == 1 {
            connected += 1;
            worst_l1 = worst_l1.max(lam[0].abs() / scale);
        }
        let vol: f64 = (0..n).map(|i| (0..n).map(|j| topo.weight(i, j)).sum::<f64>()).sum();
        if lam[1] > vol / (n as f64 - 1.0) + 1e-9 {
            bound_violations += 1;
        }

        let mean_x = x.iter().sum::<f64>() / n as f64;
        let z: Vec<f64> = x.iter().map(|v| v - mean_x).collect();
        let zz: f64 = z.iter().map(|v| v * v).sum();
        let lz = lap.matvec(&z).unwrap();
        let q: f64 = z.iter().zip(&lz).map(|(a, b)| a * b).sum();
        let tol = 1e-9 * (lam[n - 1] * zz).max(1.0);
        if q < lam[1] * zz - tol || q > lam[n - 1] * zz + tol {
            sandwich_violations += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_s2 <= 1e-9
        && worst_gft <= 1e-9
        && worst_l1 <= 1e-9
        && bound_violations == 0
        && sandwich_violations == 0
        && secs < 10.0;
    verdict(
        1,
        pass,
        format!(
            "200 graphs ({connected} connected): S2 rel err {worst_s2:.1e}, GFT round trip {worst_gft:.1e}, \
             |lambda_1| {worst_l1:.1e}, lambda_2 bound violations {bound_violations}, \
             sandwich violations {sandwich_violations}, {secs:.2} s"
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Gradients against central differences

const FD_STEP: f64 = 1e-6;

/// Worst relative error (Frobenius, per parameter) between `analytic` and
/// central differences of `f` around `params`.
fn fd_error(params: &[Matrix], analytic: &[Matrix], f: &dyn Fn(&[Matrix]) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for (p, grad) in analytic.iter().enumerate() {
        let mut numeric = Matrix::zeros(grad.rows(), grad.cols());
        for k in 0..grad.len() {
            let mut plus = params.to_vec();
            plus[p].as_mut_slice()[k] += FD_STEP;
            let mut minus = params.to_vec();
            minus[p].as_mut_slice()[k] -= FD_STEP;
            numeric.as_mut_slice()[k] = (f(&plus) - f(&minus)) / (2.0 * FD_STEP);
        }
        let err = grad.sub(&numeric).unwrap().frobenius_norm();
        let scale = grad.frobenius_norm().max(numeric.frobenius_norm()).max(1e-8);
        worst = worst.max(err / scale);
    }
    worst
}

fn with_params<M: Parameters + Clone>(model: &M, params: &[Matrix]) -> M {
    let mut m = model.clone();
    for (slot, v) in m.parameters_mut().into_iter().zip(params) {
        *slot = v.clone();
    }
    m
}

fn model_fd_error<M: Parameters + Clone>(
    model: &M,
    analytic: &[Matrix],
    loss: impl Fn(&M) -> f64,
) -> f64 {
    let params: Vec<Matrix> = model.parameters().into_iter().cloned().collect();
    fd_error(&params, analytic, &|ps| loss(&with_params(model, ps)))
}

/// `Σ R ⊙ out` with a fixed, shape-derived `R`.
fn weighted_sum(tape: &mut Tape, out: Var) -> Var {
    let (r, c) = tape.value(out).shape();
    let w = Matrix::from_fn(r, c, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin() + 0.5);
    let w = tape.constant(w).unwrap();
    let h = tape.hadamard(out, w).unwrap();
    tape.sum(h).unwrap()
}

type Build<'a> = &'a dyn Fn(&mut Tape, &[Var]) -> Var;

fn tape_eval(inputs: &[Matrix], build: Build<'_>) -> (f64, Vec<Matrix>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone()).unwrap()).collect();
    let out = build(&mut tape, &vars);
    let loss = weighted_sum(&mut tape, out);
    let mut grads = tape.backward(loss).unwrap();
    let g = vars.iter().zip(inputs).map(|(v, m)| grads.take_or_zeros(*v, m.shape())).collect();
    (tape.scalar(loss), g)
}

fn tape_fd_error(inputs: &[Matrix], build: Build<'_>) -> f64 {
    let (_, analytic) = tape_eval(inputs, build);
    fd_error(inputs, &analytic, &|ps| tape_eval(ps, build).0)
}

/// Parameter gradients of `Σ R ⊙ forward(params)`.
fn module_eval<M: Parameters>(module: &M, forward: &dyn Fn(&M, &mut Tape, &[Var]) -> Var) -> (f64, Vec<Matrix>) {
    let mut tape = Tape::new();
    let vars = bind(&mut tape, module).unwrap();
    let out = forward(module, &mut tape, &vars);
    let loss = weighted_sum(&mut tape, out);
    let mut grads = tape.backward(loss).unwrap();
    let g = vars.iter().zip(module.parameter_shapes()).map(|(v, s)| grads.take_or_zeros(*v, s)).collect();
    (tape.scalar(loss), g)
}

fn module_fd_error<M: Parameters + Clone>(module: &M, forward: &dyn Fn(&M, &mut Tape, &[Var]) -> Var) -> f64 {
    let (_, analytic) = module_eval(module, forward);
    model_fd_error(module, &analytic, |m| module_eval(m, forward).0)
}

fn plain_mse(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// GKAE objective with the Koopman targets pinned to `g_target`, assembled
/// from the model's public stage maps.
fn gkae_frozen_loss(model: &GkaeModel, seq: &GraphSequence, linearity: usize, g_target: &Matrix) -> f64 {
    let t_len = seq.len();
    let g = model.embeddings(seq.snapshots()).unwrap();
    let x = seq.signal_matrix().transpose();
    let mut total = t_len as f64 * plain_mse(&model.graph_decode_rows(&g).unwrap(), &x);
    let h = model.koopman_encode_rows(&g).unwrap();
    for l in 0..linearity {
        let rows = t_len - l;
        let advanced = Matrix::from_fn(rows, h.cols(), |t, m| model.koopman_advance(h.row(t), l).unwrap()[m]);
        let decoded = model.koopman_decode_rows(&advanced).unwrap();
        total += rows as f64 * plain_mse(&decoded, &g_target.slice_rows(l, t_len));
    }
    total
}

fn type3_sequence(rng: &mut impl Rng, n: usize, steps: usize) -> GraphSequence {
    let snaps = (0..steps)
        .map(|_| {
            let x = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            GraphSnapshot::new(x, Arc::new(random_topology(rng, n, 0.5))).unwrap()
        })
        .collect();
    GraphSequence::new(snaps, GraphKind::Type3, 1.0).unwrap()
}

fn randomize_biases<M: Parameters>(rng: &mut impl Rng, m: &mut M) {
    for p in m.parameters_mut() {
        if p.rows() == 1 {
            *p = Matrix::from_fn(1, p.cols(), |_, _| rng.gen_range(-0.3..0.3));
        }
    }
}

#[test]
fn criterion_2_gradients_match_finite_differences() {
    let _lock = serial();
    let start = Instant::now();
    let mut results: Vec<(&'static str, usize, f64)> = Vec::new();
    let mut record = |name: &'static str, err: f64| match results.iter_mut().find(|r| r.0 == name) {
        Some(r) => {
            r.1 += 1;
            r.2 = r.2.max(err);
        }
        None => results.push((name, 1, err)),
    };

    for seed in 0..20u64 {
        let mut rng = seeded(1000 + seed);
        let (r, k, c) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5));
        let a = random_matrix(&mut rng, r, c);
        let b = random_matrix(&mut rng, r, c);
        let bk = random_matrix(&mut rng, c, k);
        let row = random_matrix(&mut rng, 1, c);
        let w = random_matrix(&mut rng, k, c);
        let bias = random_matrix(&mut rng, 1, k);
        let s = rng.gen_range(-2.0..2.0);

        record("matmul", tape_fd_error(&[a.clone(), bk.clone()], &|t, v| t.matmul(v[0], v[1]).unwrap()));
        record("linear", tape_fd_error(&[a.clone(), w.clone(), bias.clone()], &|t, v| t.linear(v[0], v[1], Some(v[2])).unwrap()));
        record("linear (no bias)", tape_fd_error(&[a.clone(), w.clone()], &|t, v| t.linear(v[0], v[1], None).unwrap()));
        record("add", tape_fd_error(&[a.clone(), b.clone()], &|t, v| t.add(v[0], v[1]).unwrap()));
        record("sub", tape_fd_error(&[a.clone(), b.clone()], &|t, v| t.sub(v[0], v[1]).unwrap()));
        record("hadamard", tape_fd_error(&[a.clone(), b.clone()], &|t, v| t.hadamard(v[0], v[1]).unwrap()));
        record("scale", tape_fd_error(&[a.clone()], &|t, v| t.scale(v[0], s).unwrap()));
        record("add_scalar", tape_fd_error(&[a.clone()], &|t, v| t.add_scalar(v[0], s).unwrap()));
        record("add_row", tape_fd_error(&[a.clone(), row.clone()], &|t, v| t.add_row(v[0], v[1]).unwrap()));
        record("transpose", tape_fd_error(&[a.clone()], &|t, v| t.transpose(v[0]).unwrap()));
        record("tanh", tape_fd_error(&[a.clone()], &|t, v| t.tanh(v[0]).unwrap()));
        record("leaky_relu", tape_fd_error(&[a.clone()], &|t, v| t.leaky_relu(v[0], 0.01).unwrap()));
        record("mean_rows", tape_fd_error(&[a.clone()], &|t, v| t.mean_rows(v[0]).unwrap()));
        record("sum", tape_fd_error(&[a.clone()], &|t, v| t.sum(v[0]).unwrap()));
        record("mse", tape_fd_error(&[a.clone(), b.clone()], &|t, v| t.mse(v[0], v[1]).unwrap()));
        record("cosine_similarity", tape_fd_error(&[a.clone(), b.clone()], &|t, v| t.cosine_similarity(v[0], v[1]).unwrap()));
        let (s0, s1) = (rng.gen_range(0..r), r);
        record("slice_rows", tape_fd_error(&[a.clone()], &|t, v| t.slice_rows(v[0], s0, s1).unwrap()));
        let n = rng.gen_range(2..7);
        let topo = random_topology(&mut rng, n, 0.5);
        let mut trip = Vec::new();
        for i in 0..n {
            for (j, wij) in topo.neighbors(i) {
                trip.push((i, j, wij));
            }
        }
        let csr = Arc::new(Csr::from_triplets(n, n, trip));
        let h = random_matrix(&mut rng, n, c);
        record("spmm", tape_fd_error(&[h], &|t, v| t.spmm(&csr, v[0]).unwrap()));

        for (name, act) in [
            ("dense tanh", Activation::Tanh),
            ("dense leaky_relu", Activation::LeakyRelu),
            ("dense identity", Activation::Identity),
        ] {
            let mut layer = DenseLayer::new(&mut rng, c, k, act);
            randomize_biases(&mut rng, &mut layer);
            let x = a.clone();
            record(name, module_fd_error(&layer, &|l, t, v| {
                let xv = t.constant(x.clone()).unwrap();
                l.forward(t, v, xv).unwrap()
            }));
        }
        let mut mlp = Mlp::new(&mut rng, &[c, 4, 3, k], Activation::Tanh, Activation::Identity);
        randomize_biases(&mut rng, &mut mlp);
        let x = a.clone();
        record("mlp", module_fd_error(&mlp, &|l, t, v| {
            let xv = t.constant(x.clone()).unwrap();
            l.forward(t, v, xv).unwrap()
        }));

        let topos: Vec<Topology> = (0..2).map(|_| random_topology(&mut rng, n, 0.5)).collect();
        let batch = GraphBatch::from_topologies(topos.iter()).unwrap();
        let hx = random_matrix(&mut rng, 2 * n, 3);
        let mut conv = GraphConvLayer::new(&mut rng, 3, 2);
        randomize_biases(&mut rng, &mut conv);
        record("graph_conv", module_fd_error(&conv, &|l, t, v| {
            let xv = t.constant(hx.clone()).unwrap();
            l.forward(t, v, &batch, xv).unwrap()
        }));
        let mut sage = SageLayer::new(&mut rng, 3, 2);
        randomize_biases(&mut rng, &mut sage);
        record("sage", module_fd_error(&sage, &|l, t, v| {
            let xv = t.constant(hx.clone()).unwrap();
            l.forward(t, v, &batch, xv).unwrap()
        }));
        record("sage + mean pooling", module_fd_error(&sage, &|l, t, v| {
            let xv = t.constant(hx.clone()).unwrap();
            let y = l.forward(t, v, &batch, xv).unwrap();
            batch.pool(t, y).unwrap()
        }));

        // GKAE objective; Koopman targets are constants.
        let seq = type3_sequence(&mut rng, 4, 5);
        let cfg = GkaeConfig {
            nodes: 4,
            embed_dim: 3,
            koopman_dim: 3,
            kae_hidden: 4,
            kae_layers: 2,
            decoder_hidden: 5,
        };
        let mut model = GkaeModel::new(cfg, seed);
        model.koopman = Matrix::from_fn(3, 3, |_, _| rng.gen_range(-0.8..0.8));
        randomize_biases(&mut rng, &mut model);
        let linearity = rng.gen_range(1..5);
        let (_, grads) = loss_and_gradients(&model, &GkaeBatch::new(&seq).unwrap(), linearity).unwrap();
        let g0 = model.embeddings(seq.snapshots()).unwrap();
        record("gkae loss", model_fd_error(&model, &grads, |m| gkae_frozen_loss(m, &seq, linearity, &g0)));

        // LC objective against targets from a random teacher.
        let tau = 3;
        let teacher = GkaeModel::new(
            GkaeConfig {
                nodes: 4,
                embed_dim: 3,
                koopman_dim: 3,
                kae_hidden: 4,
                kae_layers: 2,
                decoder_hidden: 5,
            },
            seed + 1,
        );
        let mask = make_mask(4, 5, tau, 0.5, seed).unwrap();
        let masked = apply_mask(&seq, &mask).unwrap();
        let targets = lc_targets(&teacher, &masked.snapshots()[..tau], 5).unwrap();
        let lc_cfg = LcConfig {
            decoder_hidden: 5,
            beta1: rng.gen_range(0.2..2.0),
            beta2: rng.gen_range(0.2..2.0),
            seed,
            ..LcConfig::default()
        };
        let mut lc = LcModel::new(4, 3, &lc_cfg);
        randomize_biases(&mut rng, &mut lc);
        let (_, grads) = loss_lc_and_gradients(&lc, &masked, &targets).unwrap();
        record("lc loss", model_fd_error(&lc, &grads, |m| loss_lc(m, &masked, &targets).unwrap()));

        // GCN baseline objective (observed-entry weighted MSE).
        let snaps: Vec<GraphSnapshot> = seq.snapshots()[..3].to_vec();
        let target = random_matrix(&mut rng, 12, 1);
        let weight = Matrix::from_fn(12, 1, |i, _| if i % 3 == 0 { 0.0 } else { 1.0 });
        let objective = GcnObjective::new(&snaps, target, weight).unwrap();
        let mut gcn = GcnStack::new(3, seed);
        randomize_biases(&mut rng, &mut gcn);
        let (_, grads) = objective.loss_and_gradients(&gcn).unwrap();
        record("gcn objective", model_fd_error(&gcn, &grads, |m| objective.loss_and_gradients(m).unwrap().0));

        // Smoothness objective of TGS/TGSS.
        let x = random_matrix(&mut rng, 4, 5);
        let fixed = GraphSequence::static_graph(connected_topology(&mut rng, 4), &x, 1.0).unwrap();
        let y = x.zip_map(&mask.to_matrix(), "mask", |a, j| a * j).unwrap();
        for (name, eps, beta) in [("tgs objective", 0.0, 1), ("tgss objective", 0.3, 2)] {
            let obj = SmoothnessObjective::new(&fixed, &y, &mask, 3.0, eps, beta).unwrap();
            let at = random_matrix(&mut rng, 4, 5);
            let err = fd_error(std::slice::from_ref(&at), &[obj.gradient(&at)], &|ps| obj.value(&ps[0]));
            record(name, err);
        }
    }

    let secs = start.elapsed().as_secs_f64();
    let worst = results.iter().map(|r| r.2).fold(0.0, f64::max);
    let min_instances = results.iter().map(|r| r.1).min().unwrap();
    for (name, count, err) in &results {
        let _ = writeln!(std::io::stderr(), "  {name:<22} {count} instances, worst relative error {err:.2e}");
    }
    verdict(
        2,
        worst < 1e-4 && min_instances >= 20 && secs < 30.0,
        format!(
            "{} operations/layers/losses, >= {min_instances} instances each, worst relative error {worst:.2e}, {secs:.2} s",
            results.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. TGS against the dense normal-equation minimizer

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in (c + 1)..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut z = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|k| a[r][k] * z[k]).sum();
        z[r] = (b[r] - s) / a[r][r];
    }
    z
}

/// `Σ_{t≥1} dₜᵀ L dₜ + γ ‖J ⊙ X − Y‖²` with `dₜ = x(t) − x(t−1)`.
fn tgs_objective(lap: &Matrix, x: &Matrix, y: &Matrix, j: &Matrix, gamma: f64) -> f64 {
    let (n, steps) = x.shape();
    let mut f = 0.0;
    for t in 1..steps {
        let d: Vec<f64> = (0..n).map(|i| x[(i, t)] - x[(i, t - 1)]).collect();
        let ld = lap.matvec(&d).unwrap();
        f += d.iter().zip(&ld).map(|(a, b)| a * b).sum::<f64>();
    }
    for t in 0..steps {
        for i in 0..n {
            f += gamma * (j[(i, t)] * x[(i, t)] - y[(i, t)]).powi(2);
        }
    }
    f
}

/// Stationary point over the columns `t ≥ τ` from the normal equations.
fn dense_minimizer(lap: &Matrix, y: &Matrix, j: &Matrix, gamma: f64, tau: usize) -> Matrix {
    let (n, steps) = y.shape();
    let idx = |i: usize, t: usize| t * n + i;
    let total = n * steps;
    let mut h = vec![vec![0.0; total]; total];
    let mut rhs = vec![0.0; total];
    for t in 1..steps {
        for a in 0..n {
            for b in 0..n {
                let v = 2.0 * lap[(a, b)];
                h[idx(a, t)][idx(b, t)] += v;
                h[idx(a, t - 1)][idx(b, t - 1)] += v;
                h[idx(a, t)][idx(b, t - 1)] -= v;
                h[idx(a, t - 1)][idx(b, t)] -= v;
            }
        }
    }
    for t in 0..steps {
        for i in 0..n {
            h[idx(i, t)][idx(i, t)] += 2.0 * gamma * j[(i, t)];
            rhs[idx(i, t)] = 2.0 * gamma * j[(i, t)] * y[(i, t)];
        }
    }
    let free: Vec<usize> = (tau..steps).flat_map(|t| (0..n).map(move |i| idx(i, t))).collect();
    let fixed: Vec<usize> = (0..tau).flat_map(|t| (0..n).map(move |i| idx(i, t))).collect();
    let a: Vec<Vec<f64>> = free.iter().map(|&r| free.iter().map(|&c| h[r][c]).collect()).collect();
    let b: Vec<f64> = free
        .iter()
        .map(|&r| rhs[r] - fixed.iter().map(|&c| h[r][c] * y[(c % n, c / n)]).sum::<f64>())
        .collect();
    let z = solve(a, b);
    let mut out = y.clone();
    for (&k, &v) in free.iter().zip(&z) {
        out[(k % n, k / n)] = v;
    }
    out
}

#[test]
fn criterion_3_tgs_reaches_the_normal_equation_minimizer() {
    let _lock = serial();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_x = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = seeded(500 + seed);
        let n = rng.gen_range(2..=6);
        let steps = rng.gen_range(3..=8);
        let tau = rng.gen_range(1..steps - 1);
        let topo = connected_topology(&mut rng, n);
        let x = Matrix::from_fn(n, steps, |_, _| rng.gen_range(-2.0..2.0));
        let seq = GraphSequence::static_graph(topo.clone(), &x, 1.0).unwrap();
        let mask = make_mask(n, steps, tau, rng.gen_range(0.2..0.8), seed).unwrap();
        let j = mask.to_matrix();
        let y = x.zip_map(&j, "mask", |a, b| a * b).unwrap();
        let cfg = TgsConfig::default();
        let got = tgs_reconstruct(&seq, &y, &mask, &cfg).unwrap();
        let lap = laplacian_of(&topo);
        let oracle = dense_minimizer(&lap, &y, &j, cfg.gamma, tau);
        let (fa, fb) = (
            tgs_objective(&lap, &got.estimate, &y, &j, cfg.gamma),
            tgs_objective(&lap, &oracle, &y, &j, cfg.gamma),
        );
        // some instances can be fitted exactly, so the gap needs a floor
        worst = worst.max((fa - fb).abs() / fb.abs().max(1.0));
        let dist = got.estimate.sub(&oracle).unwrap().frobenius_norm() / oracle.frobenius_norm().max(1.0);
        worst_x = worst_x.max(dist);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        worst <= 1e-6 && secs < 30.0,
        format!("20 instances, worst relative objective gap {worst:.2e}, worst relative estimate distance {worst_x:.2e}, {secs:.2} s"),
    );
}

// ---------------------------------------------------------------------------
// Shared default-configuration runs for criteria 4 to 9

struct SeedRun {
    seed: u64,
    data: DatasetBundle,
    model: GkaeModel,
    history: Vec<f64>,
}

struct Shared {
    cfg: ExperimentConfig,
    runs: Vec<SeedRun>,
    train_secs: f64,
}

static SHARED: OnceLock<Shared> = OnceLock::new();

fn shared() -> &'static Shared {
    SHARED.get_or_init(|| {
        let cfg = ExperimentConfig::default();
        let start = Instant::now();
        let runs = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let data = prepare(&cfg, seed, None).unwrap();
                let trained = train_on_prefix(&cfg, &cfg.model, &data, seed).unwrap();
                SeedRun {
                    seed,
                    data,
                    model: trained.model,
                    history: trained.loss_history,
                }
            })
            .collect();
        Shared {
            cfg,
            runs,
            train_secs: start.elapsed().as_secs_f64(),
        }
    })
}

fn check_defaults(s: &Shared) {
    let d = &s.runs[0].data;
    assert_eq!((d.nodes(), d.steps(), d.tau), (20, 500, 300));
    assert_eq!(s.cfg.model.koopman_dim, 8);
    assert_eq!(s.cfg.train.linearity_length, 50);
    assert_eq!(s.cfg.train.epochs, 200);
    assert_eq!(s.runs.len(), 5);
    assert_eq!(s.cfg.horizon, 20);
}

#[test]
fn criterion_4_uav_forecast() {
    let _lock = serial();
    let s = shared();
    check_defaults(s);
    let start = Instant::now();
    let mut rows: Vec<(ForecastMethod, f64, f64)> = Vec::new();
    for run in &s.runs {
        let truth = forecast_truth(&run.data, s.cfg.horizon).unwrap();
        assert_eq!(truth.cols(), 20);
        for method in [ForecastMethod::Gkae, ForecastMethod::Persistence, ForecastMethod::Gcn] {
            let pred = forecast(&s.cfg, method, &run.data, Some(&run.model), run.seed).unwrap();
            let score = score_forecast(&run.data, &truth, &pred, run.seed, method).unwrap();
            rows.push((method, score.rmse_normalized, score.mae_normalized));
        }
    }
    let secs = start.elapsed().as_secs_f64() + s.train_secs;
    let rmse = |m| mean(rows.iter().filter(|r| r.0 == m).map(|r| r.1));
    let mae = |m| mean(rows.iter().filter(|r| r.0 == m).map(|r| r.2));
    let (g, p, c) = (rmse(ForecastMethod::Gkae), rmse(ForecastMethod::Persistence), rmse(ForecastMethod::Gcn));
    let pass = g <= 0.35 && mae(ForecastMethod::Gkae) <= 0.20 && g < p && g < c && secs < 600.0;
    verdict(
        4,
        pass,
        format!(
            "GKAE RMSE {g:.4} MAE {:.4} (limits 0.35 / 0.20); persistence RMSE {p:.4}; GCN rollout RMSE {c:.3e}; \
             {secs:.1} s including {:.1} s training",
            mae(ForecastMethod::Gkae),
            s.train_secs
        ),
    );
}

#[test]
fn criterion_5_koopman_dimension() {
    let _lock = serial();
    let s = shared();
    let start = Instant::now();
    let m32 = ModelSpec {
        koopman_dim: 32,
        ..s.cfg.model.clone()
    };
    let mut final8 = Vec::new();
    let mut final32 = Vec::new();
    for run in &s.runs[..3] {
        final8.push(*run.history.last().unwrap());
        let trained = train_on_prefix(&s.cfg, &m32, &run.data, run.seed).unwrap();
        final32.push(*trained.loss_history.last().unwrap());
    }
    let secs = start.elapsed().as_secs_f64() + s.train_secs * 3.0 / 5.0;
    let (a, b) = (mean(final8.iter().copied()), mean(final32.iter().copied()));
    verdict(
        5,
        a <= b && secs < 900.0,
        format!("mean final loss M=8 {a:.2} vs M=32 {b:.2} (3 seeds), {secs:.1} s"),
    );
}

#[test]
fn criterion_6_reconstruction_sweep() {
    let _lock = serial();
    let s = shared();
    let start = Instant::now();
    let rates = [0.1, 0.2, 0.3, 0.4, 0.5];
    assert_eq!(s.cfg.masking.rates, rates);
    let methods = [ReconMethod::Lc, ReconMethod::Nni, ReconMethod::GcnAe];
    let mut eps: Vec<(f64, ReconMethod, f64)> = Vec::new();
    for run in &s.runs {
        for &rate in &rates {
            let mask = mask_for(&s.cfg, &run.data, rate, run.seed).unwrap();
            for method in methods {
                let est = reconstruct(&s.cfg, method, &run.data, &mask, Some(&run.model), run.seed).unwrap();
                let score = score_reconstruction(&s.cfg, &run.data, &est, &mask, run.seed, method).unwrap();
                eps.push((rate, method, score.epsilon_normalized));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64() + s.train_secs;
    let at = |rate: f64, m: ReconMethod| mean(eps.iter().filter(|e| e.0 == rate && e.1 == m).map(|e| e.2));
    let trend = at(0.1, ReconMethod::Lc) <= at(0.5, ReconMethod::Lc);
    let beats = rates
        .iter()
        .all(|&r| at(r, ReconMethod::Lc) <= at(r, ReconMethod::Nni) && at(r, ReconMethod::Lc) <= at(r, ReconMethod::GcnAe));
    let absolute = at(0.5, ReconMethod::Lc) <= 0.2;
    for &r in &rates {
        let _ = writeln!(
            std::io::stderr(),
            "  rate {r}: GKAE+LC {:.4}  NNI {:.4}  GCN-AE {:.4}",
            at(r, ReconMethod::Lc),
            at(r, ReconMethod::Nni),
            at(r, ReconMethod::GcnAe)
        );
    }
    verdict(
        6,
        trend && beats && absolute && secs < 1200.0,
        format!(
            "(a) eps 10% {:.4} <= eps 50% {:.4}: {trend}; (b) GKAE+LC <= NNI and GCN-AE at every rate: {beats}; \
             eps 50% <= 0.2: {absolute}; {secs:.1} s including training",
            at(0.1, ReconMethod::Lc),
            at(0.5, ReconMethod::Lc)
        ),
    );
}

#[test]
fn criterion_7_completely_masked_nodes() {
    let _lock = serial();
    let s = shared();
    let start = Instant::now();
    let mut cfg = s.cfg.clone();
    cfg.masking.blackout = vec![4, 13];
    let rate = 0.3;
    let mut blackout = Vec::new();
    let mut partial = Vec::new();
    for run in &s.runs {
        let mask = mask_for(&cfg, &run.data, rate, run.seed).unwrap();
        for t in run.data.tau..run.data.steps() {
            assert!(!mask.is_observed(4, t) && !mask.is_observed(13, t));
        }
        let est = reconstruct(&cfg, ReconMethod::Lc, &run.data, &mask, Some(&run.model), run.seed).unwrap();
        let score = score_reconstruction(&cfg, &run.data, &est, &mask, run.seed, ReconMethod::Lc).unwrap();
        blackout.push(score.blackout_mse.unwrap());
        partial.push(score.partial_mse.unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    let (b, p) = (mean(blackout.iter().copied()), mean(partial.iter().copied()));
    verdict(
        7,
        b.is_finite() && b <= 3.0 * p,
        format!("blacked-out nodes MSE {b:.4} vs partially masked nodes MSE {p:.4} (ratio {:.2}, limit 3), {secs:.1} s", b / p),
    );
}

#[test]
fn criterion_8_frozen_teacher_and_determinism() {
    let _lock = serial();
    let s = shared();
    let start = Instant::now();

    let mut untouched = true;
    for run in &s.runs[..2] {
        let before: Vec<Vec<u64>> = run.model.parameters().iter().map(|p| p.as_slice().iter().map(|v| v.to_bits()).collect()).collect();
        let mask = mask_for(&s.cfg, &run.data, 0.5, run.seed).unwrap();
        let masked = apply_mask(&run.data.sequence, &mask).unwrap();
        train_lc(&run.model, &masked, run.data.tau, &s.cfg.lc).unwrap();
        let after: Vec<Vec<u64>> = run.model.parameters().iter().map(|p| p.as_slice().iter().map(|v| v.to_bits()).collect()).collect();
        untouched &= before == after;
    }

    let mut cfg = s.cfg.clone();
    cfg.task = Task::Eval;
    cfg.seeds = vec![s.runs[0].seed];
    cfg.masking.rates = vec![0.3];
    let dir = tempfile::TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = run_experiment(&cfg, &a).unwrap();
    run_experiment(&cfg, &b).unwrap();
    let mut identical = true;
    for f in ["report.json", "sweep.csv", "loss.csv", "mse_time.csv", "trajectory_node0.csv", "checkpoint.json", "reconstruction_rate30.csv"] {
        identical &= std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
    }
    let same_history = first.training[0].final_loss.to_bits() == s.runs[0].history.last().unwrap().to_bits();

    let secs = start.elapsed().as_secs_f64();
    verdict(
        8,
        untouched && identical && same_history && secs < 300.0,
        format!(
            "GKAE parameters bit-identical after LC training: {untouched}; repeated eval run byte-identical: {identical}; \
             harness training matches direct training: {same_history}; {secs:.1} s"
        ),
    );
}

#[test]
fn criterion_9_embeddings_do_not_collapse() {
    let _lock = serial();
    let s = shared();
    let variances: Vec<f64> = s.runs.iter().map(|r| embedding_variance(&r.model, &r.data).unwrap()).collect();
    let min = variances.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(9, min > 1e-6, format!("smallest training-window embedding variance over 5 seeds {min:.4e}"));
}
