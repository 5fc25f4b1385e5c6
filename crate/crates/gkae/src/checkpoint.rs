//! Model checkpoints: named parameter arrays with shapes, the model and
//! training configuration, and the normalization needed to map predictions
//! back to signal units.

use std::path::Path;

use gkae_core::datasets::Normalization;
use gkae_core::gkae::{GkaeConfig, GkaeModel, TrainConfig};
use gkae_core::layers::{Mlp, Parameters};
use serde::{Deserialize, Serialize};

use crate::bundle::{read_tagged, DenseArray};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "gkae-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    #[serde(flatten)]
    pub array: DenseArray,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub model_config: GkaeConfig,
    pub train_config: Option<TrainConfig>,
    pub normalization: Option<Normalization>,
    pub unit: String,
    pub parameters: Vec<NamedArray>,
}

fn mlp_names(prefix: &str, mlp: &Mlp, out: &mut Vec<String>) {
    for i in 0..mlp.layers.len() {
        out.push(format!("{prefix}.{i}.weight"));
        out.push(format!("{prefix}.{i}.bias"));
    }
}

/// Parameter names in [`Parameters`] order.
pub fn parameter_names(model: &GkaeModel) -> Vec<String> {
    let mut names = Vec::new();
    for layer in ["graph_conv", "graph_sage"] {
        for p in ["w_self", "w_neigh", "bias"] {
            names.push(format!("{layer}.{p}"));
        }
    }
    mlp_names("koopman_encoder", &model.koopman_encoder, &mut names);
    names.push("koopman".into());
    mlp_names("koopman_decoder", &model.koopman_decoder, &mut names);
    mlp_names("graph_decoder", &model.graph_decoder, &mut names);
    names
}

impl Checkpoint {
    pub fn new(
        model: &GkaeModel,
        train_config: Option<TrainConfig>,
        normalization: Option<Normalization>,
        unit: &str,
    ) -> Self {
        let parameters = parameter_names(model)
            .into_iter()
            .zip(model.parameters())
            .map(|(name, p)| NamedArray {
                name,
                array: DenseArray::from(p),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            model_config: model.config.clone(),
            train_config,
            normalization,
            unit: unit.into(),
            parameters,
        }
    }

    /// Rebuilds the model, checking every name and shape.
    pub fn model(&self) -> std::result::Result<GkaeModel, String> {
        let mut model = GkaeModel::new(self.model_config.clone(), 0);
        let names = parameter_names(&model);
        if names.len() != self.parameters.len() {
            return Err(format!("expected {} parameter arrays, found {}", names.len(), self.parameters.len()));
        }
        for ((name, slot), stored) in names.iter().zip(model.parameters_mut()).zip(&self.parameters) {
            if *name != stored.name {
                return Err(format!("expected parameter {name}, found {}", stored.name));
            }
            let m = stored.array.to_matrix().map_err(|e| format!("{name}: {e}"))?;
            if m.shape() != slot.shape() {
                return Err(format!("{name}: stored shape {:?}, model expects {:?}", m.shape(), slot.shape()));
            }
            *slot = m;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = read_tagged(path, CHECKPOINT_FORMAT)?;
        ck.model().map_err(|message| Error::Format {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(ck)
    }
}
