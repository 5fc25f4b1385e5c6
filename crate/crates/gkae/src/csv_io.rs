//! CSV ingestion of node-time datasets and the reconstruction report format.
//!
//! Row and column numbers in errors are 1-based file positions, so a header
//! row counts as row 1.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use gkae_core::datasets::DatasetBundle;
use gkae_core::graph::{build_knn_graph, build_radius_graph, GraphKind, GraphSequence, GraphSnapshot, Topology};
use gkae_core::lcrecon::SamplingMask;
use gkae_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the static graph of a CSV dataset is formed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum GraphRule {
    Knn { k: usize },
    Radius { r: f64 },
    /// Unit-weight undirected edges given as node index pairs.
    EdgeList { edges: Vec<(usize, usize)> },
}

fn parse_error(path: &Path, row: usize, col: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        col,
        message: message.into(),
    }
}

/// Reads a numeric table. The first row is taken as a header when none of
/// its fields parses as a number.
pub fn read_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(path, r + 1, 0, e.to_string()))?;
        if r == 0 && record.iter().all(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(parse_error(
                path,
                r + 1,
                record.len().min(w) + 1,
                format!("expected {w} fields, found {}", record.len()),
            ));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_error(path, r + 1, c + 1, format!("not a finite number: {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    Ok(rows)
}

/// Signals CSV (rows = time, columns = nodes) as an `N × T` matrix.
pub fn load_signals(path: &Path) -> Result<Matrix> {
    let rows = read_table(path)?;
    let (steps, n) = (rows.len(), rows[0].len());
    Ok(Matrix::from_fn(n, steps, |i, t| rows[t][i]))
}

/// Coordinates CSV (rows = nodes, columns = spatial dimensions).
pub fn load_coords(path: &Path) -> Result<Matrix> {
    Ok(Matrix::from_rows(&read_table(path)?))
}

/// Edge-list CSV with two integer columns and an optional weight column.
pub fn load_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    read_table(path)?
        .iter()
        .enumerate()
        .map(|(r, row)| {
            if row.len() < 2 {
                return Err(parse_error(path, r + 1, row.len() + 1, "edge rows need two node indices"));
            }
            let idx = |c: usize| {
                let v = row[c];
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(parse_error(path, r + 1, c + 1, format!("not a node index: {v}")))
                }
            };
            Ok((idx(0)?, idx(1)?))
        })
        .collect()
}

fn topology_for(rule: &GraphRule, coords: Option<&Matrix>, n: usize) -> Result<Topology> {
    let need_coords = || {
        coords.ok_or_else(|| Error::Config("knn and radius graph rules need a coordinates file".into()))
    };
    let topo = match rule {
        GraphRule::Knn { k } => build_knn_graph(need_coords()?, *k)?,
        GraphRule::Radius { r } => build_radius_graph(need_coords()?, *r)?,
        GraphRule::EdgeList { edges } => {
            let canonical: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
            Topology::from_edges(n, &canonical, 1.0)?
        }
    };
    Ok(topo)
}

/// Default observed prefix for datasets without one: the first 60% of the
/// steps (300 of 500).
pub fn default_tau(steps: usize) -> usize {
    (steps * 3 / 5).clamp(1, steps.saturating_sub(1).max(1))
}

/// Loads a static-graph (Type-1) dataset. `coords` is required by the
/// KNN and radius rules.
pub fn load_csv(signals: &Path, coords: Option<&Path>, rule: &GraphRule) -> Result<DatasetBundle> {
    let x = load_signals(signals)?;
    let coords = coords.map(load_coords).transpose()?;
    if let Some(c) = &coords {
        if c.rows() != x.rows() {
            return Err(Error::ShapeMismatch(format!(
                "signals have {} node columns but the coordinates file has {} rows",
                x.rows(),
                c.rows()
            )));
        }
    }
    let topo = topology_for(rule, coords.as_ref(), x.rows())?;
    let shared = Arc::new(topo);
    let snapshots = (0..x.cols())
        .map(|t| GraphSnapshot::new(x.column_values(t), shared.clone()))
        .collect::<gkae_core::Result<Vec<_>>>()?;
    Ok(DatasetBundle {
        sequence: GraphSequence::new(snapshots, GraphKind::Type1, 1.0)?,
        coords: coords.into_iter().collect(),
        tau: default_tau(x.cols()),
        normalization: None,
        unit: String::new(),
    })
}

/// Columns `t,node,observed,truth,estimate`, one row per entry, `t` major.
pub fn write_reconstruction(path: &Path, truth: &Matrix, estimate: &Matrix, mask: &SamplingMask) -> Result<()> {
    if truth.shape() != estimate.shape() || truth.shape() != (mask.nodes(), mask.steps()) {
        return Err(Error::ShapeMismatch(format!(
            "truth {:?}, estimate {:?}, mask {:?}",
            truth.shape(),
            estimate.shape(),
            (mask.nodes(), mask.steps())
        )));
    }
    let mut out = String::from("t,node,observed,truth,estimate\n");
    for t in 0..truth.cols() {
        for n in 0..truth.rows() {
            out.push_str(&format!(
                "{t},{n},{},{},{}\n",
                u8::from(mask.is_observed(n, t)),
                truth[(n, t)],
                estimate[(n, t)]
            ));
        }
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
