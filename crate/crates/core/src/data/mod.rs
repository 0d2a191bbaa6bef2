//! Dataset ingestion and report persistence.

mod manifest;
mod parse;
mod predictions;
mod report;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_graph_with_nodes, ConflictPolicy, GraphError, NodeId, Sign, SignedEdge, SignedGraph};

pub use manifest::{builtin_manifests, find_manifest, DatasetManifest, ManifestCheck};
pub use parse::{open_maybe_gz, parse_edge_list, parse_reader, EdgeFormat, ParsedEdges, RawEdgeRecord};
pub use predictions::{read_predictions, write_predictions, PredictionRow};
pub use report::{persist_report, write_json, write_reports_csv, write_rows_csv};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown edge-list format `{0}`")]
    UnknownFormat(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("{0}: no edge records")]
    EmptyFile(PathBuf),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid prediction: {0}")]
    InvalidPrediction(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Dense id → original id, in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IdMap {
    ids: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, NodeId>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, id: &str) -> NodeId {
        if let Some(&k) = self.index.get(id) {
            return k;
        }
        let k = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), k);
        k
    }

    pub fn get(&self, id: &str) -> Option<NodeId> {
        self.index.get(id).copied()
    }

    pub fn original(&self, v: NodeId) -> Option<&str> {
        self.ids.get(v).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut m: IdMap = serde_json::from_str(&text)?;
        m.index = m.ids.iter().enumerate().map(|(k, s)| (s.clone(), k)).collect();
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestStats {
    /// Records handed to [`to_signed_graph`].
    pub raw_rows: usize,
    /// Lines or blocks the parser skipped.
    pub malformed_rows: usize,
    pub zero_weight_rows: usize,
    /// Rows with a derivable sign.
    pub signed_rows: usize,
    pub positive_rows: usize,
    pub nodes: usize,
    pub pos_edges: usize,
    pub neg_edges: usize,
    pub conflicts: usize,
    pub self_loops: usize,
    pub duplicates: usize,
    /// Share of positive undirected edges, in percent.
    pub pct_positive: f64,
}

impl IngestStats {
    pub fn edges(&self) -> usize {
        self.pos_edges + self.neg_edges
    }
}

/// Collapses weights to signs and directions to undirected edges.
pub fn to_signed_graph(
    records: &[RawEdgeRecord],
    policy: ConflictPolicy,
) -> Result<(SignedGraph, IdMap, IngestStats), DataError> {
    let mut ids = IdMap::new();
    let mut edges = Vec::with_capacity(records.len());
    let mut stats = IngestStats {
        raw_rows: records.len(),
        ..IngestStats::default()
    };
    for r in records {
        let Some(sign) = Sign::from_weight(r.weight) else {
            stats.zero_weight_rows += 1;
            continue;
        };
        stats.signed_rows += 1;
        if sign.is_positive() {
            stats.positive_rows += 1;
        }
        let u = ids.intern(&r.source);
        let v = ids.intern(&r.target);
        edges.push(SignedEdge::new(u, v, sign));
    }
    let (g, b) = build_graph_with_nodes(ids.len(), &edges, policy)?;
    stats.nodes = g.node_count();
    stats.pos_edges = g.pos_edge_count();
    stats.neg_edges = g.neg_edge_count();
    stats.conflicts = b.conflicts;
    stats.self_loops = b.self_loops;
    stats.duplicates = b.duplicates;
    stats.pct_positive = if g.edge_count() == 0 {
        0.0
    } else {
        100.0 * g.pos_edge_count() as f64 / g.edge_count() as f64
    };
    Ok((g, ids, stats))
}

/// A parsed, collapsed dataset.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub name: String,
    pub graph: SignedGraph,
    pub id_map: IdMap,
    pub stats: IngestStats,
}

pub fn load_dataset(name: &str, path: &Path, format: EdgeFormat, policy: ConflictPolicy) -> Result<LoadedDataset, DataError> {
    let parsed = parse_edge_list(path, format)?;
    let (graph, id_map, mut stats) = to_signed_graph(&parsed.records, policy)?;
    stats.malformed_rows = parsed.malformed;
    if let Some(m) = find_manifest(name) {
        for w in m.check(&stats).warnings() {
            log::warn!("{name}: {w}");
        }
    }
    Ok(LoadedDataset {
        name: name.to_string(),
        graph,
        id_map,
        stats,
    })
}
