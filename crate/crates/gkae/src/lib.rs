//! File formats, CSV ingestion, experiment configuration and the task
//! pipelines behind the `gkae` command-line tool.
//!
//! | file | written by |
//! |------|------------|
//! | `report.json` | every task ([`report::MetricsReport`]) |
//! | `timing.json` | every task, wall-clock seconds per stage |
//! | `sweep.csv` | every task, per-sweep means |
//! | `loss.csv` | `train`, `predict`, `reconstruct`, `eval` |
//! | `trajectory_node<i>.csv`, `mse_time.csv` | `predict`, `eval` |
//! | `reconstruction_rate<pct>.csv` | `reconstruct`, `baseline`, `eval` |
//! | `bundle.json` | `simulate` |
//! | `checkpoint*.json` | `train`, `predict`, `eval` |

pub mod bundle;
pub mod checkpoint;
pub mod config;
pub mod csv_io;
mod error;
pub mod experiment;
pub mod plots;
pub mod report;

pub use error::{Error, Result};
