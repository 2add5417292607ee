use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::node::NodeModel;
use super::state_space::{Conversion, StateSpace};
use super::subspace::IdentificationConfig;
use crate::dataio::{Channel, ModelKind, NodeChannelSpec};
use crate::{Error, Result};

pub const MODEL_FILE_FORMAT: &str = "tunnel-rom/node-models";

/// One node model as stored on disk. Matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeModelRecord {
    pub kind: ModelKind,
    pub node: usize,
    pub order: usize,
    pub fire_node: bool,
    pub inputs: Vec<Channel>,
    pub output: Channel,
    pub dt: f64,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub conversion: Conversion,
    #[serde(default)]
    pub reflected_eigenvalues: usize,
}

/// A compact chain model as stored on disk, with its wiring: which
/// exogenous channel drives each column of `b`, where each node's states
/// start, and which nodes carry sensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactModelRecord {
    pub kind: ModelKind,
    pub node_count: usize,
    pub inputs: Vec<Channel>,
    pub offsets: Vec<usize>,
    pub orders: Vec<usize>,
    pub sensors: Vec<usize>,
    pub dt: f64,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c_full: Vec<Vec<f64>>,
    pub d_full: Vec<Vec<f64>>,
}

/// A set of node models: `node_count` thermal and `node_count` smoke models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub node_count: usize,
    pub sample_time: f64,
    pub fire_nodes: Vec<usize>,
    pub identification: IdentificationConfig,
    pub nodes: Vec<NodeModelRecord>,
    /// Assembled chains, if exported.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compact: Vec<CompactModelRecord>,
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("matrix {name} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl NodeModelRecord {
    pub fn from_model(m: &NodeModel<f64>) -> Self {
        Self {
            kind: m.spec.kind,
            node: m.spec.node,
            order: m.order(),
            fire_node: m.spec.fire_node,
            inputs: m.spec.inputs.clone(),
            output: m.spec.output,
            dt: m.model.dt,
            a: rows(&m.model.a),
            b: rows(&m.model.b),
            c: rows(&m.model.c),
            d: rows(&m.model.d),
            conversion: m.model.conversion,
            reflected_eigenvalues: m.model.reflected_eigenvalues,
        }
    }

    pub fn to_model(&self) -> Result<NodeModel<f64>> {
        let n = self.order;
        let k = self.inputs.len();
        let spec = NodeChannelSpec {
            node: self.node,
            kind: self.kind,
            fire_node: self.fire_node,
            inputs: self.inputs.clone(),
            output: self.output,
        };
        let model = StateSpace {
            a: matrix("a", &self.a, n, n)?,
            b: matrix("b", &self.b, n, k)?,
            c: matrix("c", &self.c, 1, n)?,
            d: matrix("d", &self.d, 1, k)?,
            dt: self.dt,
            conversion: self.conversion,
            reflected_eigenvalues: self.reflected_eigenvalues,
        };
        NodeModel::new(spec, model)
    }
}

impl ModelFile {
    pub fn new(
        models: &[NodeModel<f64>],
        node_count: usize,
        fire_nodes: &[usize],
        sample_time: f64,
        identification: IdentificationConfig,
    ) -> Self {
        Self {
            format: MODEL_FILE_FORMAT.to_string(),
            version: 1,
            node_count,
            sample_time,
            fire_nodes: fire_nodes.to_vec(),
            identification,
            nodes: models.iter().map(NodeModelRecord::from_model).collect(),
            compact: Vec::new(),
        }
    }

    /// Models of one kind ordered by node index.
    pub fn models(&self, kind: ModelKind) -> Result<Vec<NodeModel<f64>>> {
        let mut out: Vec<NodeModel<f64>> = self
            .nodes
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.to_model())
            .collect::<Result<_>>()?;
        out.sort_by_key(|m| m.node());
        let ok = out.len() == self.node_count && out.iter().enumerate().all(|(i, m)| m.node() == i + 1);
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "model file must hold one {kind} model per node 1..={}",
                self.node_count
            )));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if file.format != MODEL_FILE_FORMAT {
            return Err(Error::parse(path, format!("unexpected format tag {:?}", file.format)));
        }
        for r in &file.nodes {
            r.to_model()
                .map_err(|e| Error::parse(path, format!("node {} {}: {e}", r.node, r.kind)))?;
        }
        Ok(file)
    }
}
