//! Temporal graph smoothness (TGS) reconstruction and its Sobolev variant.
//!
//! Minimizes
//! `f(X) = Σ_{t≥1} d(t)ᵀ Q_t d(t) + γ ‖J ⊙ X − Y‖²_F`, `d(t) = x(t) − x(t−1)`,
//! with `Q_t = L_t` (TGS) or `(L_t + εI)^β` (TGSS), by projected gradient
//! descent. Columns `t < τ` are held at `Y`. Each iteration starts from a
//! Barzilai–Borwein step and backtracks until the Armijo condition holds.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::{laplacian_of, GraphSequence};
use crate::lcrecon::SamplingMask;
use crate::matrix::Matrix;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TgsConfig {
    pub gamma: f64,
    pub max_outer: usize,
    pub max_backtrack: usize,
    /// Stop when the ∞-norm of the projected gradient falls below this.
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub shrink: f64,
}

impl Default for TgsConfig {
    fn default() -> Self {
        Self {
            gamma: 10.0,
            max_outer: 500,
            max_backtrack: 40,
            grad_tol: 1e-6,
            armijo_c: 1e-4,
            shrink: 0.5,
        }
    }
}

impl TgsConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.gamma > 0.0
            && self.grad_tol > 0.0
            && self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0;
        if !ok {
            return Err(Error::InvalidConfig(
                "TGS needs gamma > 0, grad_tol > 0 and Armijo constants in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TgssConfig {
    #[serde(flatten)]
    pub base: TgsConfig,
    pub sobolev_epsilon: f64,
    pub sobolev_beta: u32,
}

impl Default for TgssConfig {
    fn default() -> Self {
        Self {
            base: TgsConfig::default(),
            sobolev_epsilon: 0.1,
            sobolev_beta: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessResult {
    /// `N × T` estimate.
    pub estimate: Matrix,
    pub objective: f64,
    pub iterations: usize,
    /// The projected-gradient tolerance was reached.
    pub converged: bool,
    /// Objective after every accepted iterate, starting with the initial one.
    pub objective_history: Vec<f64>,
}

/// The quadratic objective with one smoothing matrix per distinct topology.
pub struct SmoothnessObjective<'a> {
    gamma: f64,
    observed: Matrix,
    data: &'a Matrix,
    /// Index into `operators` for each `t ≥ 1`.
    operator_of: Vec<usize>,
    operators: Vec<Matrix>,
}

impl<'a> SmoothnessObjective<'a> {
    pub fn new(
        seq: &GraphSequence,
        data: &'a Matrix,
        mask: &SamplingMask,
        gamma: f64,
        epsilon: f64,
        beta: u32,
    ) -> Result<Self> {
        let shape = (seq.node_count(), seq.len());
        for (what, s) in [("data", data.shape()), ("mask", (mask.nodes(), mask.steps()))] {
            if s != shape {
                return Err(Error::ShapeMismatch {
                    op: if what == "data" { "smoothness data" } else { "smoothness mask" },
                    lhs: shape,
                    rhs: s,
                });
            }
        }
        if beta == 0 || epsilon < 0.0 {
            return Err(Error::InvalidConfig("Sobolev beta must be >= 1 and epsilon >= 0".into()));
        }
        let mut cache: BTreeMap<usize, usize> = BTreeMap::new();
        let mut operators = Vec::new();
        let mut operator_of = Vec::with_capacity(seq.len().saturating_sub(1));
        for snap in seq.snapshots().iter().skip(1) {
            let key = alloc::sync::Arc::as_ptr(snap.shared_topology()) as usize;
            let idx = match cache.get(&key) {
                Some(&i) => i,
                None => {
                    let q = sobolev_operator(&laplacian_of(snap.topology()), epsilon, beta)?;
                    operators.push(q);
                    cache.insert(key, operators.len() - 1);
                    operators.len() - 1
                }
            };
            operator_of.push(idx);
        }
        Ok(Self {
            gamma,
            observed: mask.to_matrix(),
            data,
            operator_of,
            operators,
        })
    }

    fn difference(x: &Matrix, t: usize) -> Vec<f64> {
        (0..x.rows()).map(|i| x[(i, t)] - x[(i, t - 1)]).collect()
    }

    pub fn value(&self, x: &Matrix) -> f64 {
        let mut f = 0.0;
        for t in 1..x.cols() {
            let d = Self::difference(x, t);
            let q = &self.operators[self.operator_of[t - 1]];
            let qd = q.matvec(&d).expect("operator shape checked at construction");
            f += d.iter().zip(&qd).map(|(a, b)| a * b).sum::<f64>();
        }
        let fit: f64 = x
            .as_slice()
            .iter()
            .zip(self.observed.as_slice())
            .zip(self.data.as_slice())
            .map(|((x, j), y)| {
                let r = j * x - y;
                r * r
            })
            .sum();
        f + self.gamma * fit
    }

    pub fn gradient(&self, x: &Matrix) -> Matrix {
        let (n, steps) = x.shape();
        let mut g = Matrix::zeros(n, steps);
        for t in 1..steps {
            let d = Self::difference(x, t);
            let q = &self.operators[self.operator_of[t - 1]];
            let qd = q.matvec(&d).expect("operator shape checked at construction");
            for i in 0..n {
                g[(i, t)] += 2.0 * qd[i];
                g[(i, t - 1)] -= 2.0 * qd[i];
            }
        }
        for ((gi, (xi, ji)), yi) in g
            .as_mut_slice()
            .iter_mut()
            .zip(x.as_slice().iter().zip(self.observed.as_slice()))
            .zip(self.data.as_slice())
        {
            *gi += 2.0 * self.gamma * ji * (ji * xi - yi);
        }
        g
    }
}

/// `(L + εI)^β`.
pub fn sobolev_operator(l: &Matrix, epsilon: f64, beta: u32) -> Result<Matrix> {
    let mut base = l.clone();
    if epsilon != 0.0 {
        for i in 0..base.rows() {
            base[(i, i)] += epsilon;
        }
    }
    let mut out = base.clone();
    for _ in 1..beta {
        out = out.matmul(&base)?;
    }
    Ok(out)
}

fn zero_prefix(g: &mut Matrix, tau: usize) {
    for i in 0..g.rows() {
        for t in 0..tau.min(g.cols()) {
            g[(i, t)] = 0.0;
        }
    }
}

fn inf_norm(m: &Matrix) -> f64 {
    m.max_abs()
}

fn frob2(m: &Matrix) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum()
}

/// Projected gradient with BB-initialized Armijo backtracking from `start`.
pub fn minimize(objective: &SmoothnessObjective<'_>, start: Matrix, tau: usize, cfg: &TgsConfig) -> Result<SmoothnessResult> {
    cfg.validate()?;
    let mut x = start;
    let mut f = objective.value(&x);
    let mut g = objective.gradient(&x);
    zero_prefix(&mut g, tau);
    let mut history = alloc::vec![f];
    let mut step = 1.0 / inf_norm(&g).max(1.0);
    let mut converged = inf_norm(&g) < cfg.grad_tol;
    let mut iterations = 0;
    while !converged && iterations < cfg.max_outer {
        let g2 = frob2(&g);
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtrack {
            let mut trial = x.clone();
            trial.add_assign_scaled(&g, -alpha);
            let ft = objective.value(&trial);
            if ft <= f - cfg.armijo_c * alpha * g2 {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= cfg.shrink;
        }
        let Some((next, f_next)) = accepted else { break };
        let mut g_next = objective.gradient(&next);
        zero_prefix(&mut g_next, tau);
        // Barzilai–Borwein: s = Δx, y = Δg, step = sᵀs / sᵀy
        let s = next.sub(&x)?;
        let y = g_next.sub(&g)?;
        let sy: f64 = s.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
        step = if sy > 0.0 { (frob2(&s) / sy).clamp(1e-12, 1e12) } else { alpha };
        x = next;
        f = f_next;
        g = g_next;
        history.push(f);
        iterations += 1;
        converged = inf_norm(&g) < cfg.grad_tol;
    }
    if !x.is_finite() {
        return Err(Error::NonFinite { op: "tgs_reconstruct" });
    }
    Ok(SmoothnessResult {
        estimate: x,
        objective: f,
        iterations,
        converged,
        objective_history: history,
    })
}

fn initial(data: &Matrix) -> Matrix {
    data.clone()
}

/// `data` is the masked `N × T` signal matrix (`J ⊙ X`).
pub fn tgs_reconstruct(seq: &GraphSequence, data: &Matrix, mask: &SamplingMask, cfg: &TgsConfig) -> Result<SmoothnessResult> {
    let objective = SmoothnessObjective::new(seq, data, mask, cfg.gamma, 0.0, 1)?;
    minimize(&objective, initial(data), mask.tau, cfg)
}

pub fn tgss_reconstruct(
    seq: &GraphSequence,
    data: &Matrix,
    mask: &SamplingMask,
    cfg: &TgssConfig,
) -> Result<SmoothnessResult> {
    let objective = SmoothnessObjective::new(seq, data, mask, cfg.base.gamma, cfg.sobolev_epsilon, cfg.sobolev_beta)?;
    minimize(&objective, initial(data), mask.tau, &cfg.base)
}
