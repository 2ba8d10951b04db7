//! Versioned JSON checkpoints of trained forecasters.
//!
//! ```json
//! {
//!   "format": "graph-anomaly-checkpoint",
//!   "version": 1,
//!   "gate_order": "ifgo",
//!   "n_nodes": 2, "hidden": 32, "input_dim": 1,
//!   "augment": true, "sharing": "shared",
//!   "node_ids": ["a", "b"],
//!   "graph": { "directed": false, "edges": [[0, 1]] },
//!   "params": [[...]],
//!   "normalization": { "mean": [...], "std": [...] },
//!   "train": { ... }
//! }
//! ```
//!
//! Each entry of `params` is one flat block laid out as
//! `W (4H×D) | U (4H×H) | b (4H) | v (H) | c_out`, gates in `gate_order`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::lstm::{LstmParams, GATE_ORDER};
use crate::model::{GraphLstmModel, ParamSharing};
use crate::norm::NormalizationParams;
use crate::train::TrainConfig;

pub const CHECKPOINT_FORMAT: &str = "graph-anomaly-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    directed: bool,
    edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    format: String,
    version: u32,
    gate_order: String,
    n_nodes: usize,
    hidden: usize,
    input_dim: usize,
    augment: bool,
    sharing: ParamSharing,
    node_ids: Vec<String>,
    graph: GraphRecord,
    params: Vec<Vec<f64>>,
    normalization: Option<NormalizationParams>,
    train: TrainConfig,
}

/// A trained model together with what is needed to apply it to raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: GraphLstmModel,
    pub graph: Graph,
    pub node_ids: Vec<String>,
    pub normalization: Option<NormalizationParams>,
    pub train: TrainConfig,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let m = &self.model;
        let rec = Record {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            gate_order: GATE_ORDER.into(),
            n_nodes: m.n_nodes(),
            hidden: m.hidden(),
            input_dim: m.params()[0].input(),
            augment: m.augmented(),
            sharing: m.sharing(),
            node_ids: self.node_ids.clone(),
            graph: GraphRecord {
                directed: self.graph.is_directed(),
                edges: self.graph.edges().to_vec(),
            },
            params: m.params().iter().map(|p| p.as_flat().to_vec()).collect(),
            normalization: self.normalization.clone(),
            train: self.train.clone(),
        };
        serde_json::to_string_pretty(&rec).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: Record = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if rec.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("not a checkpoint (format `{}`)", rec.format)));
        }
        if rec.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                rec.version
            )));
        }
        if rec.gate_order != GATE_ORDER {
            return Err(Error::Checkpoint(format!("gate order `{}` is not `{GATE_ORDER}`", rec.gate_order)));
        }
        if rec.node_ids.len() != rec.n_nodes {
            return Err(Error::Checkpoint(format!(
                "{} node ids for {} nodes",
                rec.node_ids.len(),
                rec.n_nodes
            )));
        }
        let expected_blocks = match rec.sharing {
            ParamSharing::Shared => 1,
            ParamSharing::PerNode => rec.n_nodes,
        };
        if rec.params.len() != expected_blocks {
            return Err(Error::Checkpoint(format!(
                "{} parameter blocks, {:?} sharing needs {expected_blocks}",
                rec.params.len(),
                rec.sharing
            )));
        }
        if let Some(n) = &rec.normalization {
            if n.mean.len() != rec.n_nodes || n.std.len() != rec.n_nodes {
                return Err(Error::Checkpoint("normalization length differs from node count".into()));
            }
        }
        let params = rec
            .params
            .into_iter()
            .map(|p| LstmParams::from_flat(rec.hidden, rec.input_dim, p))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let graph = Graph::new(rec.n_nodes, rec.graph.edges, rec.graph.directed)?;
        let model = GraphLstmModel::from_params(params, graph.neighbor_table(), rec.augment, rec.n_nodes)?;
        Ok(Self {
            model,
            graph,
            node_ids: rec.node_ids,
            normalization: rec.normalization,
            train: rec.train,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn sample(sharing: ParamSharing) -> Checkpoint {
        let graph = Graph::new(3, vec![(0, 1), (1, 2)], false).unwrap();
        let model =
            GraphLstmModel::new(3, 4, graph.neighbor_table(), true, sharing, &mut SeededRng::new(5)).unwrap();
        Checkpoint {
            model,
            graph,
            node_ids: vec!["a".into(), "b".into(), "c".into()],
            normalization: Some(NormalizationParams {
                mean: vec![1.0, 2.0, 0.1],
                std: vec![0.3, 1.0 / 3.0, 1e-8],
            }),
            train: TrainConfig::default(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        for sharing in [ParamSharing::Shared, ParamSharing::PerNode] {
            let ck = sample(sharing);
            let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
            assert_eq!(back, ck);
        }
    }

    #[test]
    fn rejects_bad_headers_and_shapes() {
        let text = sample(ParamSharing::Shared).to_json().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["version"] = 2.into();
        assert!(matches!(Checkpoint::from_json(&v.to_string()), Err(Error::Checkpoint(_))));
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["gate_order"] = "ifog".into();
        assert!(Checkpoint::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["params"][0].as_array_mut().unwrap().pop();
        assert!(Checkpoint::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["extra"] = 1.into();
        assert!(Checkpoint::from_json(&v.to_string()).is_err());
    }
}
