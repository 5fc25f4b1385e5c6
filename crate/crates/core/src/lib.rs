//! Numerical core for learning linear latent (Koopman) dynamics of
//! time-varying graph signals and reconstructing masked graph signals.
//!
//! The crate is `no_std` (with `alloc`). Everything here is a pure function of
//! its inputs and an explicit seed; file formats, CSV ingestion and the
//! experiment harness live in the `gkae` companion crate.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`graph`] | snapshots, sequences, Laplacian, spectra, GFT, smoothness, KNN/radius graphs |
//! | [`autodiff`] | dense reverse-mode tape and the Adam optimizer |
//! | [`layers`] | dense, graph-convolution and mean-aggregation layers |
//! | [`gkae`] | graph Koopman autoencoder: training, rollout, embedding prediction |
//! | [`lcrecon`] | sampling masks and the latent-consistency reconstruction autoencoder |
//! | [`baselines`] | TGS / TGSS smoothness solvers, nearest-neighbour fill, GCN autoencoder |
//! | [`datasets`] | UAV SNR simulation, train-window normalization |
//! | [`metrics`] | prediction RMSE/MAE and reconstruction error |
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod baselines;
pub mod datasets;
mod error;
pub mod gkae;
pub mod graph;
pub mod layers;
pub mod lcrecon;
pub mod math;
pub mod matrix;
pub mod metrics;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::Matrix;
