//! Versioned JSON container for [`DatasetBundle`].
//!
//! Distinct topologies are stored once and referenced per step, so a static
//! graph costs one weight matrix regardless of `T`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use gkae_core::datasets::{DatasetBundle, Normalization};
use gkae_core::graph::{GraphKind, GraphSequence, GraphSnapshot, Topology};
use gkae_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BUNDLE_FORMAT: &str = "gkae-bundle/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Type1,
    Type2,
    Type3,
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseArray {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Matrix> for DenseArray {
    fn from(m: &Matrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().to_vec(),
        }
    }
}

impl DenseArray {
    pub fn to_matrix(&self) -> gkae_core::Result<Matrix> {
        Matrix::new(self.rows, self.cols, self.data.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct BundleFile {
    format: String,
    kind: Kind,
    dt: f64,
    tau: usize,
    unit: String,
    normalization: Option<Normalization>,
    /// `N × T`.
    signals: DenseArray,
    topologies: Vec<DenseArray>,
    /// Index into `topologies` for each step.
    topology_of: Vec<usize>,
    coords: Vec<DenseArray>,
}

fn to_file(bundle: &DatasetBundle) -> BundleFile {
    let seq = &bundle.sequence;
    let mut seen: HashMap<*const Topology, usize> = HashMap::new();
    let mut topologies = Vec::new();
    let topology_of = seq
        .snapshots()
        .iter()
        .map(|s| {
            *seen.entry(Arc::as_ptr(s.shared_topology())).or_insert_with(|| {
                topologies.push(DenseArray::from(s.weights()));
                topologies.len() - 1
            })
        })
        .collect();
    BundleFile {
        format: BUNDLE_FORMAT.into(),
        kind: match seq.kind() {
            GraphKind::Type1 => Kind::Type1,
            GraphKind::Type2 => Kind::Type2,
            GraphKind::Type3 => Kind::Type3,
        },
        dt: seq.dt,
        tau: bundle.tau,
        unit: bundle.unit.clone(),
        normalization: bundle.normalization,
        signals: DenseArray::from(&seq.signal_matrix()),
        topologies,
        topology_of,
        coords: bundle.coords.iter().map(DenseArray::from).collect(),
    }
}

fn from_file(path: &Path, file: BundleFile) -> Result<DatasetBundle> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let signals = file.signals.to_matrix()?;
    if file.topology_of.len() != signals.cols() {
        return Err(bad(format!(
            "{} topology references for {} steps",
            file.topology_of.len(),
            signals.cols()
        )));
    }
    let topologies = file
        .topologies
        .iter()
        .map(|a| Ok(Arc::new(Topology::from_weights(a.to_matrix()?)?)))
        .collect::<Result<Vec<_>>>()?;
    let snapshots = file
        .topology_of
        .iter()
        .enumerate()
        .map(|(t, &k)| {
            let topo = topologies
                .get(k)
                .ok_or_else(|| bad(format!("step {t} references missing topology {k}")))?;
            Ok(GraphSnapshot::new(signals.column_values(t), topo.clone())?)
        })
        .collect::<Result<Vec<_>>>()?;
    let kind = match file.kind {
        Kind::Type1 => GraphKind::Type1,
        Kind::Type2 => GraphKind::Type2,
        Kind::Type3 => GraphKind::Type3,
    };
    Ok(DatasetBundle {
        sequence: GraphSequence::new(snapshots, kind, file.dt)?,
        coords: file.coords.iter().map(|c| c.to_matrix()).collect::<gkae_core::Result<_>>()?,
        tau: file.tau,
        normalization: file.normalization,
        unit: file.unit,
    })
}

pub fn bundle_to_json(bundle: &DatasetBundle) -> String {
    serde_json::to_string(&to_file(bundle)).expect("bundle fields are always serializable")
}

pub fn save_bundle(bundle: &DatasetBundle, path: &Path) -> Result<()> {
    std::fs::write(path, bundle_to_json(bundle)).map_err(|e| Error::io(path, e))
}

/// Reads a tag-checked JSON document of type `T`.
pub(crate) fn read_tagged<T: serde::de::DeserializeOwned>(path: &Path, expected: &'static str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let found = value.get("format").and_then(|f| f.as_str()).unwrap_or("");
    if found != expected {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: found.into(),
            expected,
        });
    }
    serde_json::from_value(value).map_err(|e| Error::json(path, e))
}

pub fn load_bundle(path: &Path) -> Result<DatasetBundle> {
    let file: BundleFile = read_tagged(path, BUNDLE_FORMAT)?;
    from_file(path, file)
}
