//! Reconstruction and forecasting baselines.

mod gcn;
mod nni;
mod tgs;

pub use gcn::{gcn_forecast, gcnae_reconstruct, GcnConfig, GcnObjective, GcnResult, GcnStack};
pub use nni::{nni_reconstruct, persistence_forecast};
pub use tgs::{
    minimize, sobolev_operator, tgs_reconstruct, tgss_reconstruct, SmoothnessObjective, SmoothnessResult, TgsConfig,
    TgssConfig,
};
