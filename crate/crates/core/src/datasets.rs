//! Synthetic UAV link-quality data and train/test normalization.
//!
//! UAVs follow a random-waypoint model in a square area; at each step two
//! UAVs are linked when within radius `r`, and each node's signal is the mean
//! log-distance SNR (dB) over its links.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::graph::{build_radius_graph, GraphKind, GraphSequence, GraphSnapshot};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded};
use crate::{math, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UavConfig {
    pub nodes: usize,
    /// Side length of the square area.
    pub area_side: f64,
    pub radius: f64,
    pub tx_power_dbm: f64,
    pub pathloss_exponent: f64,
    pub noise_floor_dbm: f64,
    /// Distance floor inside the path-loss logarithm.
    pub min_distance: f64,
    pub dt: f64,
    /// Speeds in area units per second.
    pub speed_min: f64,
    pub speed_max: f64,
    pub steps: usize,
    pub tau: usize,
    pub seed: u64,
}

impl Default for UavConfig {
    fn default() -> Self {
        Self {
            nodes: 20,
            area_side: 1.0,
            radius: 0.5,
            tx_power_dbm: 10.0,
            pathloss_exponent: 2.0,
            noise_floor_dbm: -90.0,
            min_distance: 0.01,
            dt: 0.1,
            speed_min: 0.01,
            speed_max: 0.05,
            steps: 500,
            tau: 300,
            seed: 0,
        }
    }
}

impl UavConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.nodes == 0 || self.steps == 0 {
            return bad("UAV simulation needs nodes and steps");
        }
        if !(self.radius > 0.0) {
            return bad("radius must be positive");
        }
        if !(self.area_side > 0.0) {
            return bad("area side must be positive");
        }
        if !(self.pathloss_exponent > 0.0) {
            return bad("path-loss exponent must be positive");
        }
        if !(self.speed_min >= 0.0 && self.speed_min <= self.speed_max) {
            return bad("speed range must satisfy 0 <= min <= max");
        }
        if !(self.dt > 0.0 && self.min_distance > 0.0) {
            return bad("dt and min_distance must be positive");
        }
        if self.tau >= self.steps {
            return bad("tau must be below the number of steps");
        }
        Ok(())
    }
}

/// `P_tx − 10 α log₁₀(max(d, d_min)) − N₀` in dB.
pub fn link_snr_db(cfg: &UavConfig, distance: f64) -> f64 {
    cfg.tx_power_dbm - 10.0 * cfg.pathloss_exponent * math::log10(distance.max(cfg.min_distance))
        - cfg.noise_floor_dbm
}

/// z-score statistics of a training window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
    /// The window had zero variance and `std` was clamped to 1.
    pub clamped: bool,
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
            clamped: false,
        }
    }

    pub fn forward(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn forward_matrix(&self, x: &Matrix) -> Matrix {
        x.map(|v| self.forward(v))
    }

    pub fn inverse_matrix(&self, z: &Matrix) -> Matrix {
        z.map(|v| self.inverse(v))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub sequence: GraphSequence,
    /// Node coordinates: one `N × d` matrix for a static layout, or one per
    /// step.
    pub coords: Vec<Matrix>,
    pub tau: usize,
    /// Set once the signals have been normalized.
    pub normalization: Option<Normalization>,
    pub unit: String,
}

impl DatasetBundle {
    pub fn steps(&self) -> usize {
        self.sequence.len()
    }

    pub fn nodes(&self) -> usize {
        self.sequence.node_count()
    }

    /// Coordinates at step `t`.
    pub fn coords_at(&self, t: usize) -> Option<&Matrix> {
        match self.coords.len() {
            0 => None,
            1 => self.coords.first(),
            _ => self.coords.get(t),
        }
    }

    /// Signals in original units (`N × T`).
    pub fn raw_signals(&self) -> Matrix {
        let x = self.sequence.signal_matrix();
        match &self.normalization {
            Some(n) => n.inverse_matrix(&x),
            None => x,
        }
    }
}

struct Walker {
    pos: [f64; 2],
    waypoint: [f64; 2],
    speed: f64,
}

impl Walker {
    fn pick(&mut self, rng: &mut crate::rng::Rng, cfg: &UavConfig) {
        self.waypoint = [rng.gen_range(0.0..=cfg.area_side), rng.gen_range(0.0..=cfg.area_side)];
        self.speed = rng.gen_range(cfg.speed_min..=cfg.speed_max);
    }

    fn advance(&mut self, rng: &mut crate::rng::Rng, cfg: &UavConfig) {
        let dx = self.waypoint[0] - self.pos[0];
        let dy = self.waypoint[1] - self.pos[1];
        let remaining = math::hypot(dx, dy);
        let step = self.speed * cfg.dt;
        if remaining <= step {
            self.pos = self.waypoint;
            self.pick(rng, cfg);
        } else {
            self.pos[0] += step * dx / remaining;
            self.pos[1] += step * dy / remaining;
        }
        for c in &mut self.pos {
            *c = c.clamp(0.0, cfg.area_side);
        }
    }
}

/// Type-3 sequence of mean link SNR (dB) per UAV.
pub fn simulate_uav(cfg: &UavConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    let mut rng = seeded(derive_seed(cfg.seed, 0x7561_76));
    let n = cfg.nodes;
    let mut walkers: Vec<Walker> = (0..n)
        .map(|_| Walker {
            pos: [rng.gen_range(0.0..=cfg.area_side), rng.gen_range(0.0..=cfg.area_side)],
            waypoint: [0.0; 2],
            speed: 0.0,
        })
        .collect();
    for w in &mut walkers {
        w.pick(&mut rng, cfg);
    }

    let mut snapshots = Vec::with_capacity(cfg.steps);
    let mut coords = Vec::with_capacity(cfg.steps);
    let mut previous = vec![0.0; n];
    for _ in 0..cfg.steps {
        let pos = Matrix::from_fn(n, 2, |i, d| walkers[i].pos[d]);
        let topo = build_radius_graph(&pos, cfg.radius)?;
        let mut signals = vec![0.0; n];
        for (i, s) in signals.iter_mut().enumerate() {
            let (mut sum, mut count) = (0.0, 0usize);
            for (j, _) in topo.neighbors(i) {
                let d = math::hypot(pos[(i, 0)] - pos[(j, 0)], pos[(i, 1)] - pos[(j, 1)]);
                sum += link_snr_db(cfg, d);
                count += 1;
            }
            *s = if count > 0 { sum / count as f64 } else { previous[i] };
        }
        previous.clone_from(&signals);
        snapshots.push(GraphSnapshot::new(signals, Arc::new(topo))?);
        coords.push(pos);
        for w in &mut walkers {
            w.advance(&mut rng, cfg);
        }
    }
    Ok(DatasetBundle {
        sequence: GraphSequence::new(snapshots, GraphKind::Type3, cfg.dt)?,
        coords,
        tau: cfg.tau,
        normalization: None,
        unit: "dB".into(),
    })
}

/// Global z-score from the columns `t < τ`, applied to every column.
pub fn split_and_normalize(bundle: &DatasetBundle, tau: usize) -> Result<DatasetBundle> {
    let steps = bundle.steps();
    if tau == 0 || tau >= steps {
        return Err(Error::InvalidConfig(alloc::format!("tau {tau} must lie in 1..{steps}")));
    }
    let raw = bundle.raw_signals();
    let n = raw.rows();
    let count = (n * tau) as f64;
    let mean = (0..n).flat_map(|i| raw.row(i)[..tau].iter()).sum::<f64>() / count;
    let var = (0..n)
        .flat_map(|i| raw.row(i)[..tau].iter())
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / count;
    let std = math::sqrt(var);
    let stats = if std > 1e-12 * mean.abs().max(1.0) {
        Normalization {
            mean,
            std,
            clamped: false,
        }
    } else {
        Normalization {
            mean,
            std: 1.0,
            clamped: true,
        }
    };
    Ok(DatasetBundle {
        sequence: bundle.sequence.with_signal_matrix(&stats.forward_matrix(&raw))?,
        coords: bundle.coords.clone(),
        tau,
        normalization: Some(stats),
        unit: bundle.unit.clone(),
    })
}
