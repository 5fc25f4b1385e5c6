//! Plot-ready CSV files. Headers are fixed:
//!
//! | file | columns |
//! |------|---------|
//! | `loss.csv` | `seed,koopman_dim,epoch,loss` |
//! | `trajectory_node<i>.csv` | `step,truth,prediction` |
//! | `mse_time.csv` | `step,mse` |
//! | `sweep.csv` | `sweep,value,method,metric,mean,seeds` |

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::report::Aggregate;

pub const LOSS_HEADER: &str = "seed,koopman_dim,epoch,loss";
pub const TRAJECTORY_HEADER: &str = "step,truth,prediction";
pub const MSE_TIME_HEADER: &str = "step,mse";
pub const SWEEP_HEADER: &str = "sweep,value,method,metric,mean,seeds";

fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub struct LossSeries<'a> {
    pub seed: u64,
    pub koopman_dim: usize,
    pub history: &'a [f64],
}

pub fn write_loss(path: &Path, series: &[LossSeries<'_>]) -> Result<()> {
    let mut s = format!("{LOSS_HEADER}\n");
    for run in series {
        for (epoch, loss) in run.history.iter().enumerate() {
            let _ = writeln!(s, "{},{},{epoch},{loss}", run.seed, run.koopman_dim);
        }
    }
    write(path, s)
}

/// `step` counts forecast steps from 1.
pub fn write_trajectory(path: &Path, truth: &[f64], prediction: &[f64]) -> Result<()> {
    let mut s = format!("{TRAJECTORY_HEADER}\n");
    for (p, (t, y)) in truth.iter().zip(prediction).enumerate() {
        let _ = writeln!(s, "{},{t},{y}", p + 1);
    }
    write(path, s)
}

pub fn write_mse_time(path: &Path, mse: &[f64]) -> Result<()> {
    let mut s = format!("{MSE_TIME_HEADER}\n");
    for (p, v) in mse.iter().enumerate() {
        let _ = writeln!(s, "{},{v}", p + 1);
    }
    write(path, s)
}

pub fn write_sweep(path: &Path, rows: &[Aggregate]) -> Result<()> {
    let mut s = format!("{SWEEP_HEADER}\n");
    for a in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", a.sweep, a.value, a.method, a.metric, a.mean, a.seeds);
    }
    write(path, s)
}

/// Reads back a CSV written by this module, skipping the header.
pub fn read_numeric(path: &Path) -> Result<Vec<Vec<f64>>> {
    crate::csv_io::read_table(path)
}
