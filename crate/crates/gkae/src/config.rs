//! Experiment configuration: a versioned JSON document, every field
//! optional except `task`. See the README for the schema.

use std::path::{Path, PathBuf};

use gkae_core::baselines::{GcnConfig, TgssConfig};
use gkae_core::datasets::UavConfig;
use gkae_core::gkae::{GkaeConfig, TrainConfig};
use gkae_core::lcrecon::LcConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::csv_io::GraphRule;
use crate::error::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Simulate,
    Train,
    Predict,
    Reconstruct,
    Baseline,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Synthetic UAV swarm; its `seed` is replaced by the run seed.
    Uav(UavConfig),
    Csv {
        signals: PathBuf,
        #[serde(default)]
        coords: Option<PathBuf>,
        graph: GraphRule,
        #[serde(default)]
        tau: Option<usize>,
        #[serde(default)]
        unit: String,
    },
    Bundle {
        path: PathBuf,
        #[serde(default)]
        tau: Option<usize>,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Uav(UavConfig::default())
    }
}

/// GKAE widths; the node count comes from the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub embed_dim: usize,
    pub koopman_dim: usize,
    pub kae_hidden: usize,
    pub kae_layers: usize,
    pub decoder_hidden: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let c = GkaeConfig::new(0);
        Self {
            embed_dim: c.embed_dim,
            koopman_dim: c.koopman_dim,
            kae_hidden: c.kae_hidden,
            kae_layers: c.kae_layers,
            decoder_hidden: c.decoder_hidden,
        }
    }
}

impl ModelSpec {
    pub fn for_nodes(&self, nodes: usize) -> GkaeConfig {
        GkaeConfig {
            nodes,
            embed_dim: self.embed_dim,
            koopman_dim: self.koopman_dim,
            kae_hidden: self.kae_hidden,
            kae_layers: self.kae_layers,
            decoder_hidden: self.decoder_hidden,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskingSpec {
    pub rates: Vec<f64>,
    /// Nodes hidden at every `t ≥ τ`.
    pub blackout: Vec<usize>,
}

impl Default for MaskingSpec {
    fn default() -> Self {
        Self {
            rates: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            blackout: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    /// Koopman dimensions for the `train` task; empty means the model's own.
    pub koopman_dims: Vec<usize>,
    /// UAV swarm sizes for `predict`; empty means the dataset's own.
    pub node_counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub version: u32,
    pub task: Task,
    pub dataset: DatasetSpec,
    /// Z-score the signals with training-window statistics.
    pub normalize: bool,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub lc: LcConfig,
    pub gcn: GcnConfig,
    /// TGSS settings; TGS uses `tgss.base` alone.
    pub tgss: TgssConfig,
    /// Forecast horizon `P` in steps.
    pub horizon: usize,
    pub masking: MaskingSpec,
    pub sweep: SweepSpec,
    pub seeds: Vec<u64>,
    /// Node indices whose truth/prediction trajectories are written.
    pub trajectory_nodes: Vec<usize>,
    /// Trained model used by `predict`, `reconstruct` and `eval` instead of
    /// training one per seed.
    pub checkpoint: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            task: Task::Eval,
            dataset: DatasetSpec::default(),
            normalize: true,
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            lc: LcConfig::default(),
            gcn: GcnConfig::default(),
            tgss: TgssConfig::default(),
            horizon: 20,
            masking: MaskingSpec::default(),
            sweep: SweepSpec::default(),
            seeds: vec![0, 1, 2, 3, 4],
            trajectory_nodes: vec![0],
            checkpoint: None,
        }
    }
}

/// Sets `key` (a dotted path) in `doc` to `value`, which is read as JSON if
/// it parses and as a string otherwise. Missing objects are created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("override key {key:?} has an empty segment")));
        }
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        let map = node.as_object_mut().expect("just made an object");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses a config document after applying `overrides` in order.
    /// Relative dataset paths resolve against `base`.
    pub fn from_value(mut doc: Value, overrides: &[String], base: Option<&Path>) -> Result<Self> {
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        if let Some(d) = doc.get_mut("dataset").and_then(Value::as_object_mut) {
            d.entry("source").or_insert_with(|| Value::String("uav".into()));
        }
        let mut cfg: ExperimentConfig =
            serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(base) = base {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_value(doc, overrides, path.parent())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(c) = &mut self.checkpoint {
            fix(c);
        }
        match &mut self.dataset {
            DatasetSpec::Uav(_) => {}
            DatasetSpec::Csv { signals, coords, .. } => {
                fix(signals);
                if let Some(c) = coords {
                    fix(c);
                }
            }
            DatasetSpec::Bundle { path, .. } => fix(path),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return fail(format!("config version {} is not supported (expected {CONFIG_VERSION})", self.version));
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        if self.horizon == 0 {
            return fail("horizon must be positive".into());
        }
        if let Some(r) = self.masking.rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return fail(format!("masking rate {r} outside [0, 1)"));
        }
        if let Some(c) = &self.checkpoint {
            if !c.exists() {
                return fail(format!("checkpoint {} does not exist", c.display()));
            }
        }
        match &self.dataset {
            DatasetSpec::Uav(u) => u.validate().map_err(|e| Error::Config(e.to_string()))?,
            DatasetSpec::Csv { signals, coords, .. } => {
                for p in std::iter::once(signals).chain(coords) {
                    if !p.exists() {
                        return fail(format!("dataset file {} does not exist", p.display()));
                    }
                }
            }
            DatasetSpec::Bundle { path, .. } => {
                if !path.exists() {
                    return fail(format!("bundle {} does not exist", path.display()));
                }
            }
        }
        Ok(())
    }

    /// The full resolved configuration as JSON.
    pub fn echo(&self) -> Value {
        serde_json::to_value(self).expect("config is always serializable")
    }
}
