//! Task pipelines: dataset preparation, GKAE training, forecasting and
//! reconstruction trials, and artifact emission.

use std::path::Path;
use std::time::Instant;

use gkae_core::baselines::{gcn_forecast, gcnae_reconstruct, nni_reconstruct, persistence_forecast, tgs_reconstruct, tgss_reconstruct};
use gkae_core::datasets::{simulate_uav, split_and_normalize, DatasetBundle};
use gkae_core::gkae::{train_gkae, GkaeModel, TrainedGkae};
use gkae_core::lcrecon::{apply_mask, make_mask_with_blackout, train_lc, SamplingMask};
use gkae_core::metrics::{epsilon_recon, mae_pred, mse_per_step, rmse_pred, Scope};
use gkae_core::Matrix;
use serde::Serialize;

use crate::bundle::{load_bundle, save_bundle};
use crate::checkpoint::Checkpoint;
use crate::config::{DatasetSpec, ExperimentConfig, ModelSpec, Task};
use crate::csv_io::{load_csv, write_reconstruction};
use crate::error::{Error, Result, StageContext};
use crate::plots::{write_loss, write_mse_time, write_sweep, write_trajectory, LossSeries};
use crate::report::{DatasetSummary, ForecastRun, MetricsReport, ReconstructionRun, TrainingRun};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForecastMethod {
    Gkae,
    Persistence,
    Gcn,
}

impl ForecastMethod {
    pub fn name(self) -> &'static str {
        match self {
            ForecastMethod::Gkae => "gkae",
            ForecastMethod::Persistence => "persistence",
            ForecastMethod::Gcn => "gcn",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReconMethod {
    Lc,
    Nni,
    GcnAe,
    Tgs,
    Tgss,
}

impl ReconMethod {
    pub fn name(self) -> &'static str {
        match self {
            ReconMethod::Lc => "gkae_lc",
            ReconMethod::Nni => "nni",
            ReconMethod::GcnAe => "gcn_ae",
            ReconMethod::Tgs => "tgs",
            ReconMethod::Tgss => "tgss",
        }
    }
}

/// Loads the raw dataset for one seed. For the UAV source the run seed
/// replaces the configured one, and `nodes` overrides the swarm size.
pub fn load_dataset(spec: &DatasetSpec, seed: u64, nodes: Option<usize>) -> Result<DatasetBundle> {
    match spec {
        DatasetSpec::Uav(u) => {
            let mut u = u.clone();
            u.seed = seed;
            if let Some(n) = nodes {
                u.nodes = n;
            }
            simulate_uav(&u).stage("simulate")
        }
        DatasetSpec::Csv {
            signals,
            coords,
            graph,
            tau,
            unit,
        } => {
            let mut b = load_csv(signals, coords.as_deref(), graph)?;
            if let Some(t) = tau {
                b.tau = *t;
            }
            b.unit.clone_from(unit);
            Ok(b)
        }
        DatasetSpec::Bundle { path, tau } => {
            let mut b = load_bundle(path)?;
            if let Some(t) = tau {
                b.tau = *t;
            }
            Ok(b)
        }
    }
}

/// Raw dataset, z-scored with training-window statistics when the config
/// asks for it.
pub fn prepare(cfg: &ExperimentConfig, seed: u64, nodes: Option<usize>) -> Result<DatasetBundle> {
    let raw = load_dataset(&cfg.dataset, seed, nodes)?;
    if raw.tau == 0 || raw.tau + 1 >= raw.steps() {
        return Err(Error::Config(format!(
            "tau {} leaves no test window in {} steps",
            raw.tau,
            raw.steps()
        )));
    }
    if cfg.normalize && raw.normalization.is_none() {
        split_and_normalize(&raw, raw.tau).stage("normalize")
    } else {
        Ok(raw)
    }
}

pub fn summarize(data: &DatasetBundle, seed: u64) -> DatasetSummary {
    DatasetSummary {
        seed,
        nodes: data.nodes(),
        steps: data.steps(),
        tau: data.tau,
        kind: format!("{:?}", data.sequence.kind()).to_lowercase(),
        mean: data.normalization.map(|n| n.mean),
        std: data.normalization.map(|n| n.std),
        std_clamped: data.normalization.is_some_and(|n| n.clamped),
    }
}

/// Maps a model-space matrix back to signal units.
pub fn to_signal_units(data: &DatasetBundle, m: &Matrix) -> Matrix {
    match &data.normalization {
        Some(n) => n.inverse_matrix(m),
        None => m.clone(),
    }
}

/// Trains GKAE on the observed prefix `t < τ`, clipping `L` to `τ − 1`.
pub fn train_on_prefix(cfg: &ExperimentConfig, model: &ModelSpec, data: &DatasetBundle, seed: u64) -> Result<TrainedGkae> {
    let window = data.sequence.window(0, data.tau);
    let mut train = cfg.train.clone();
    train.seed = seed;
    train.linearity_length = train.linearity_length.min(data.tau - 1);
    train_gkae(&window, model.for_nodes(data.nodes()), &train).stage("train gkae")
}

/// Total variance of the graph embeddings over the training window:
/// `(1/τ) Σ_t ‖g(t) − ḡ‖²`.
pub fn embedding_variance(model: &GkaeModel, data: &DatasetBundle) -> Result<f64> {
    let g = model.embeddings(&data.sequence.snapshots()[..data.tau]).stage("embeddings")?;
    let rows = g.rows() as f64;
    let mut total = 0.0;
    for j in 0..g.cols() {
        let col = g.column_values(j);
        let mean = col.iter().sum::<f64>() / rows;
        total += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / rows;
    }
    Ok(total)
}

fn forecast_steps(data: &DatasetBundle, horizon: usize) -> usize {
    horizon.min(data.steps() - data.tau)
}

/// Model-space truth for the forecast window `τ .. τ + P`.
pub fn forecast_truth(data: &DatasetBundle, horizon: usize) -> Result<Matrix> {
    let p = forecast_steps(data, horizon);
    Ok(data.sequence.window(data.tau, data.tau + p).signal_matrix())
}

/// `N × P` forecast in model space, rolled out from snapshot `τ − 1`.
pub fn forecast(
    cfg: &ExperimentConfig,
    method: ForecastMethod,
    data: &DatasetBundle,
    gkae: Option<&GkaeModel>,
    seed: u64,
) -> Result<Matrix> {
    let p = forecast_steps(data, cfg.horizon);
    let origin = data.sequence.snapshot(data.tau - 1);
    match method {
        ForecastMethod::Gkae => {
            let model = gkae.ok_or_else(|| Error::Config("GKAE forecast without a model".into()))?;
            model.predict_sequence(origin, p).stage("gkae forecast")
        }
        ForecastMethod::Persistence => Ok(persistence_forecast(&origin.signals, p)),
        ForecastMethod::Gcn => {
            let window = data.sequence.window(0, data.tau);
            let mut gcn = cfg.gcn.clone();
            gcn.seed = seed;
            Ok(gcn_forecast(&window, p, &gcn).stage("gcn forecast")?.estimate)
        }
    }
}

pub fn score_forecast(data: &DatasetBundle, truth: &Matrix, pred: &Matrix, seed: u64, method: ForecastMethod) -> Result<ForecastRun> {
    let (truth_u, pred_u) = (to_signal_units(data, truth), to_signal_units(data, pred));
    Ok(ForecastRun {
        seed,
        nodes: data.nodes(),
        method: method.name().into(),
        horizon: truth.cols(),
        rmse: rmse_pred(&truth_u, &pred_u).stage("rmse")?,
        mae: mae_pred(&truth_u, &pred_u).stage("mae")?,
        rmse_normalized: rmse_pred(truth, pred).stage("rmse")?,
        mae_normalized: mae_pred(truth, pred).stage("mae")?,
    })
}

pub fn mask_for(cfg: &ExperimentConfig, data: &DatasetBundle, rate: f64, seed: u64) -> Result<SamplingMask> {
    let mask = make_mask_with_blackout(data.nodes(), data.steps(), data.tau, rate, seed, &cfg.masking.blackout).stage("mask")?;
    if mask.hidden_count() == 0 {
        return Err(Error::Config(format!("masking rate {rate} hides no entries of a {}-node graph", data.nodes())));
    }
    Ok(mask)
}

/// `N × T` model-space estimate from the masked data.
pub fn reconstruct(
    cfg: &ExperimentConfig,
    method: ReconMethod,
    data: &DatasetBundle,
    mask: &SamplingMask,
    gkae: Option<&GkaeModel>,
    seed: u64,
) -> Result<Matrix> {
    let seq = &data.sequence;
    let observed = seq.signal_matrix().zip_map(&mask.to_matrix(), "mask", |x, j| x * j).stage("mask")?;
    match method {
        ReconMethod::Lc => {
            let model = gkae.ok_or_else(|| Error::Config("LC reconstruction without a GKAE model".into()))?;
            let masked = apply_mask(seq, mask).stage("apply mask")?;
            let mut lc = cfg.lc.clone();
            lc.seed = seed;
            let trained = train_lc(model, &masked, data.tau, &lc).stage("train lc")?;
            trained.model.reconstruct(&masked).stage("lc reconstruct")
        }
        ReconMethod::Nni => {
            let coords = (!data.coords.is_empty()).then_some(data.coords.as_slice());
            nni_reconstruct(seq, &observed, mask, coords).stage("nni")
        }
        ReconMethod::GcnAe => {
            let mut gcn = cfg.gcn.clone();
            gcn.seed = seed;
            Ok(gcnae_reconstruct(seq, &observed, mask, &gcn).stage("gcn-ae")?.estimate)
        }
        ReconMethod::Tgs => Ok(tgs_reconstruct(seq, &observed, mask, &cfg.tgss.base).stage("tgs")?.estimate),
        ReconMethod::Tgss => Ok(tgss_reconstruct(seq, &observed, mask, &cfg.tgss).stage("tgss")?.estimate),
    }
}

/// Pooled squared error over the hidden test-window entries of the nodes
/// selected by `pick`.
fn pooled_hidden_mse(truth: &Matrix, est: &Matrix, mask: &SamplingMask, pick: impl Fn(usize) -> bool) -> Option<f64> {
    let (mut total, mut count) = (0.0, 0usize);
    for t in mask.tau..mask.steps() {
        for n in (0..mask.nodes()).filter(|&n| pick(n)) {
            if !mask.is_observed(n, t) {
                let d = truth[(n, t)] - est[(n, t)];
                total += d * d;
                count += 1;
            }
        }
    }
    (count > 0).then(|| total / count as f64)
}

pub fn score_reconstruction(
    cfg: &ExperimentConfig,
    data: &DatasetBundle,
    est: &Matrix,
    mask: &SamplingMask,
    seed: u64,
    method: ReconMethod,
) -> Result<ReconstructionRun> {
    let truth = data.sequence.signal_matrix();
    let blackout = &cfg.masking.blackout;
    let (blackout_mse, partial_mse) = if blackout.is_empty() {
        (None, None)
    } else {
        (
            pooled_hidden_mse(&truth, est, mask, |n| blackout.contains(&n)),
            pooled_hidden_mse(&truth, est, mask, |n| !blackout.contains(&n)),
        )
    };
    Ok(ReconstructionRun {
        seed,
        rate: mask.rate,
        method: method.name().into(),
        epsilon: epsilon_recon(&to_signal_units(data, &truth), &to_signal_units(data, est), mask, Scope::Masked)
            .stage("epsilon")?,
        epsilon_normalized: epsilon_recon(&truth, est, mask, Scope::Masked).stage("epsilon")?,
        epsilon_observed_normalized: epsilon_recon(&truth, est, mask, Scope::Observed).unwrap_or(0.0),
        blackout_mse,
        partial_mse,
    })
}

#[derive(Serialize)]
struct Timing {
    total_seconds: f64,
    stages: Vec<StageTime>,
}

#[derive(Serialize)]
struct StageTime {
    stage: String,
    seconds: f64,
}

struct Clock {
    start: Instant,
    stages: Vec<StageTime>,
}

impl Clock {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            stages: Vec::new(),
        }
    }

    fn time<T>(&mut self, stage: impl Into<String>, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f()?;
        self.stages.push(StageTime {
            stage: stage.into(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

fn forecast_methods(task: Task) -> &'static [ForecastMethod] {
    match task {
        Task::Predict => &[ForecastMethod::Gkae],
        Task::Baseline => &[ForecastMethod::Persistence, ForecastMethod::Gcn],
        Task::Eval => &[ForecastMethod::Gkae, ForecastMethod::Persistence, ForecastMethod::Gcn],
        _ => &[],
    }
}

fn recon_methods(task: Task) -> &'static [ReconMethod] {
    match task {
        Task::Reconstruct => &[ReconMethod::Lc],
        Task::Baseline => &[ReconMethod::Nni, ReconMethod::GcnAe, ReconMethod::Tgs, ReconMethod::Tgss],
        Task::Eval => &[ReconMethod::Lc, ReconMethod::Nni, ReconMethod::GcnAe, ReconMethod::Tgs, ReconMethod::Tgss],
        _ => &[],
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

struct Trained {
    model: GkaeModel,
    history: Vec<f64>,
    koopman_dim: usize,
}

/// Runs `cfg.task`, writing every artifact into `out`, and returns the
/// report that was written to `out/report.json`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<MetricsReport> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut clock = Clock::new();
    let mut report = MetricsReport::new(cfg.task, cfg.echo());
    let mut losses: Vec<(u64, Trained)> = Vec::new();
    let mut mse_sum: Vec<f64> = Vec::new();
    let mut mse_runs = 0usize;

    let checkpoint = match &cfg.checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            Some(ck.model().map_err(|message| Error::Format {
                path: path.clone(),
                message,
            })?)
        }
        None => None,
    };

    let node_counts: Vec<Option<usize>> = match cfg.task {
        Task::Predict | Task::Eval if !cfg.sweep.node_counts.is_empty() => {
            if !matches!(cfg.dataset, DatasetSpec::Uav(_)) {
                return Err(Error::Config("a node-count sweep needs the UAV dataset".into()));
            }
            cfg.sweep.node_counts.iter().map(|&n| Some(n)).collect()
        }
        _ => vec![None],
    };

    for (si, &seed) in cfg.seeds.iter().enumerate() {
        if cfg.task == Task::Simulate {
            let raw = clock.time(format!("seed {seed} simulate"), || load_dataset(&cfg.dataset, seed, None))?;
            let name = if cfg.seeds.len() == 1 { "bundle.json".to_string() } else { format!("bundle_seed{seed}.json") };
            save_bundle(&raw, &out.join(name))?;
            report.unit.clone_from(&raw.unit);
            report.datasets.push(summarize(&raw, seed));
            continue;
        }

        for (ni, &nodes) in node_counts.iter().enumerate() {
            let data = prepare(cfg, seed, nodes)?;
            report.unit.clone_from(&data.unit);
            report.datasets.push(summarize(&data, seed));

            if cfg.task == Task::Train {
                let dims = if cfg.sweep.koopman_dims.is_empty() {
                    vec![cfg.model.koopman_dim]
                } else {
                    cfg.sweep.koopman_dims.clone()
                };
                for m in dims {
                    let spec = ModelSpec {
                        koopman_dim: m,
                        ..cfg.model.clone()
                    };
                    let trained = clock.time(format!("seed {seed} train M={m}"), || train_on_prefix(cfg, &spec, &data, seed))?;
                    let ck = Checkpoint::new(&trained.model, Some(cfg.train.clone()), data.normalization, &data.unit);
                    ck.save(&out.join(format!("checkpoint_seed{seed}_m{m}.json")))?;
                    report.training.push(training_run(&trained.model, &trained.loss_history, &data, seed, cfg)?);
                    losses.push((
                        seed,
                        Trained {
                            model: trained.model,
                            history: trained.loss_history,
                            koopman_dim: m,
                        },
                    ));
                }
                continue;
            }

            let needs_gkae = matches!(cfg.task, Task::Predict | Task::Reconstruct | Task::Eval);
            let model = if !needs_gkae {
                None
            } else if let Some(m) = &checkpoint {
                if m.nodes() != data.nodes() {
                    return Err(Error::Config(format!(
                        "checkpoint expects {} nodes, dataset has {}",
                        m.nodes(),
                        data.nodes()
                    )));
                }
                Some(m.clone())
            } else {
                let trained = clock.time(format!("seed {seed} N={} train", data.nodes()), || {
                    train_on_prefix(cfg, &cfg.model, &data, seed)
                })?;
                report.training.push(training_run(&trained.model, &trained.loss_history, &data, seed, cfg)?);
                let model = trained.model.clone();
                losses.push((
                    seed,
                    Trained {
                        model: trained.model,
                        history: trained.loss_history,
                        koopman_dim: cfg.model.koopman_dim,
                    },
                ));
                Some(model)
            };

            let truth = forecast_truth(&data, cfg.horizon)?;
            for &method in forecast_methods(cfg.task) {
                let pred = clock.time(format!("seed {seed} N={} forecast {}", data.nodes(), method.name()), || {
                    forecast(cfg, method, &data, model.as_ref(), seed)
                })?;
                report.forecasts.push(score_forecast(&data, &truth, &pred, seed, method)?);
                if method == ForecastMethod::Gkae && ni == 0 {
                    let (truth_u, pred_u) = (to_signal_units(&data, &truth), to_signal_units(&data, &pred));
                    let mse = mse_per_step(&truth_u, &pred_u).stage("mse per step")?;
                    mse_sum.resize(mse.len(), 0.0);
                    for (acc, v) in mse_sum.iter_mut().zip(&mse) {
                        *acc += v;
                    }
                    mse_runs += 1;
                    if si == 0 {
                        for &node in cfg.trajectory_nodes.iter().filter(|&&n| n < data.nodes()) {
                            write_trajectory(
                                &out.join(format!("trajectory_node{node}.csv")),
                                truth_u.row(node),
                                pred_u.row(node),
                            )?;
                        }
                    }
                }
            }

            if ni > 0 || recon_methods(cfg.task).is_empty() {
                continue;
            }
            for &rate in &cfg.masking.rates {
                let mask = mask_for(cfg, &data, rate, seed)?;
                for (mi, &method) in recon_methods(cfg.task).iter().enumerate() {
                    let est = clock.time(format!("seed {seed} rate {rate} {}", method.name()), || {
                        reconstruct(cfg, method, &data, &mask, model.as_ref(), seed)
                    })?;
                    report.reconstructions.push(score_reconstruction(cfg, &data, &est, &mask, seed, method)?);
                    if si == 0 && mi == 0 {
                        let pct = (rate * 100.0).round() as u32;
                        write_reconstruction(
                            &out.join(format!("reconstruction_rate{pct}.csv")),
                            &data.raw_signals(),
                            &to_signal_units(&data, &est),
                            &mask,
                        )?;
                    }
                }
            }
        }
    }

    report.aggregate();
    if !losses.is_empty() {
        let series: Vec<LossSeries<'_>> = losses
            .iter()
            .map(|(seed, t)| LossSeries {
                seed: *seed,
                koopman_dim: t.koopman_dim,
                history: &t.history,
            })
            .collect();
        write_loss(&out.join("loss.csv"), &series)?;
    }
    if mse_runs > 0 {
        let mean: Vec<f64> = mse_sum.iter().map(|v| v / mse_runs as f64).collect();
        write_mse_time(&out.join("mse_time.csv"), &mean)?;
    }
    if cfg.task == Task::Predict || cfg.task == Task::Eval {
        if let Some((_, first)) = losses.first() {
            let data = prepare(cfg, cfg.seeds[0], node_counts[0])?;
            Checkpoint::new(&first.model, Some(cfg.train.clone()), data.normalization, &data.unit)
                .save(&out.join("checkpoint.json"))?;
        }
    }
    write_sweep(&out.join("sweep.csv"), &report.aggregates)?;
    write_json(&out.join("report.json"), &report)?;
    write_json(
        &out.join("timing.json"),
        &Timing {
            total_seconds: clock.start.elapsed().as_secs_f64(),
            stages: clock.stages,
        },
    )?;
    Ok(report)
}

fn training_run(model: &GkaeModel, history: &[f64], data: &DatasetBundle, seed: u64, cfg: &ExperimentConfig) -> Result<TrainingRun> {
    Ok(TrainingRun {
        seed,
        nodes: data.nodes(),
        koopman_dim: model.config.koopman_dim,
        epochs: cfg.train.epochs,
        initial_loss: history.first().copied().unwrap_or(f64::NAN),
        final_loss: history.last().copied().unwrap_or(f64::NAN),
        embedding_variance: embedding_variance(model, data)?,
    })
}
