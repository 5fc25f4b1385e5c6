//! Forecast and reconstruction error metrics.
//!
//! Forecast errors use per-step vector norms: with `e(p) = x(p) − x̂(p)`,
//! `RMSE = sqrt(mean_p ‖e(p)‖₂²)` and `MAE = mean_p ‖e(p)‖₁`.

use serde::{Deserialize, Serialize};

use crate::lcrecon::SamplingMask;
use crate::matrix::Matrix;
use crate::{Error, Result};

fn sq(x: f64) -> f64 {
    x * x
}

fn check_same(op: &'static str, truth: &Matrix, pred: &Matrix) -> Result<()> {
    if truth.shape() != pred.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: truth.shape(),
            rhs: pred.shape(),
        });
    }
    if truth.cols() == 0 {
        return Err(Error::EmptyScope);
    }
    Ok(())
}

/// `truth` and `pred` are `N × P`.
pub fn rmse_pred(truth: &Matrix, pred: &Matrix) -> Result<f64> {
    check_same("rmse_pred", truth, pred)?;
    let sq: f64 = truth.as_slice().iter().zip(pred.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(libm::sqrt(sq / truth.cols() as f64))
}

pub fn mae_pred(truth: &Matrix, pred: &Matrix) -> Result<f64> {
    check_same("mae_pred", truth, pred)?;
    let abs: f64 = truth.as_slice().iter().zip(pred.as_slice()).map(|(a, b)| libm::fabs(a - b)).sum();
    Ok(abs / truth.cols() as f64)
}

/// Squared error `(x − x̂)²` averaged over the nodes at each step.
pub fn mse_per_step(truth: &Matrix, pred: &Matrix) -> Result<alloc::vec::Vec<f64>> {
    check_same("mse_per_step", truth, pred)?;
    Ok((0..truth.cols())
        .map(|t| {
            (0..truth.rows()).map(|n| sq(truth[(n, t)] - pred[(n, t)])).sum::<f64>() / truth.rows() as f64
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// Hidden entries (`J = 0`).
    #[default]
    Masked,
    /// Observed entries (`J = 1`).
    Observed,
}

/// `(1 / (T − τ − 1)) Σ_{t ≥ τ} Σ_{n ∈ scope(t)} (x_n(t) − x̄_n(t))²` on `N × T`
/// matrices.
pub fn epsilon_recon(truth: &Matrix, estimate: &Matrix, mask: &SamplingMask, scope: Scope) -> Result<f64> {
    check_same("epsilon_recon", truth, estimate)?;
    if truth.shape() != (mask.nodes(), mask.steps()) {
        return Err(Error::ShapeMismatch {
            op: "epsilon_recon mask",
            lhs: truth.shape(),
            rhs: (mask.nodes(), mask.steps()),
        });
    }
    let (tau, steps) = (mask.tau, mask.steps());
    if steps < tau + 2 {
        return Err(Error::EmptyScope);
    }
    let want_observed = scope == Scope::Observed;
    let mut total = 0.0;
    let mut count = 0usize;
    for t in tau..steps {
        for n in 0..mask.nodes() {
            if mask.is_observed(n, t) == want_observed {
                total += sq(truth[(n, t)] - estimate[(n, t)]);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyScope);
    }
    Ok(total / (steps - tau - 1) as f64)
}

/// Mean squared error over the hidden test-window entries of one node, or
/// `None` if that node has none.
pub fn node_masked_mse(truth: &Matrix, estimate: &Matrix, mask: &SamplingMask, node: usize) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for t in mask.tau..mask.steps() {
        if !mask.is_observed(node, t) {
            total += sq(truth[(node, t)] - estimate[(node, t)]);
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}
