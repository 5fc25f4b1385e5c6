//! `report.json` contents. Wall-clock timings go to `timing.json` instead so
//! that a report depends only on the configuration and seeds.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Task;

pub const REPORT_FORMAT: &str = "gkae-report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub seed: u64,
    pub nodes: usize,
    pub steps: usize,
    pub tau: usize,
    pub kind: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Training-window std was zero and replaced by 1.
    pub std_clamped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub seed: u64,
    pub nodes: usize,
    pub koopman_dim: usize,
    pub epochs: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Total variance of the training-window embeddings.
    pub embedding_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastRun {
    pub seed: u64,
    pub nodes: usize,
    pub method: String,
    pub horizon: usize,
    /// Signal units.
    pub rmse: f64,
    pub mae: f64,
    /// Z-scored units.
    pub rmse_normalized: f64,
    pub mae_normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRun {
    pub seed: u64,
    pub rate: f64,
    pub method: String,
    /// Hidden test-window entries, signal units squared.
    pub epsilon: f64,
    pub epsilon_normalized: f64,
    /// Observed test-window entries, z-scored units.
    pub epsilon_observed_normalized: f64,
    /// Mean hidden-entry squared error of the blackout nodes (z-scored).
    pub blackout_mse: Option<f64>,
    /// Mean hidden-entry squared error of the other nodes (z-scored).
    pub partial_mse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sweep: String,
    pub value: f64,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format: String,
    pub task: Task,
    pub unit: String,
    pub config: Value,
    pub datasets: Vec<DatasetSummary>,
    pub training: Vec<TrainingRun>,
    pub forecasts: Vec<ForecastRun>,
    pub reconstructions: Vec<ReconstructionRun>,
    pub aggregates: Vec<Aggregate>,
}

impl MetricsReport {
    pub fn new(task: Task, config: Value) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            task,
            unit: String::new(),
            config,
            datasets: Vec::new(),
            training: Vec::new(),
            forecasts: Vec::new(),
            reconstructions: Vec::new(),
            aggregates: Vec::new(),
        }
    }

    /// Mean over seeds of the primary metric of every run, grouped by sweep
    /// point and method, in first-seen order.
    pub fn aggregate(&mut self) {
        let mut groups: Vec<(Aggregate, f64)> = Vec::new();
        let mut push = |sweep: &str, value: f64, method: &str, metric: &str, x: f64| {
            let found = groups.iter().position(|(g, _)| {
                g.sweep == sweep && g.value.to_bits() == value.to_bits() && g.method == method && g.metric == metric
            });
            let idx = found.unwrap_or_else(|| {
                groups.push((
                    Aggregate {
                        sweep: sweep.into(),
                        value,
                        method: method.into(),
                        metric: metric.into(),
                        mean: 0.0,
                        seeds: 0,
                    },
                    0.0,
                ));
                groups.len() - 1
            });
            groups[idx].0.seeds += 1;
            groups[idx].1 += x;
        };
        for r in &self.training {
            push("koopman_dim", r.koopman_dim as f64, "gkae", "final_loss", r.final_loss);
        }
        for r in &self.forecasts {
            push("nodes", r.nodes as f64, &r.method, "rmse_normalized", r.rmse_normalized);
        }
        for r in &self.reconstructions {
            push("masking_rate", r.rate, &r.method, "epsilon_normalized", r.epsilon_normalized);
        }
        self.aggregates = groups
            .into_iter()
            .map(|(mut a, sum)| {
                a.mean = sum / a.seeds as f64;
                a
            })
            .collect();
    }

    pub fn mean(&self, sweep: &str, value: f64, method: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.sweep == sweep && a.value == value && a.method == method)
            .map(|a| a.mean)
    }
}
