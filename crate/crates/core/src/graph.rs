//! Undirected signed graphs, degree partitions and the edge-triplet taxonomy.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Segments;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("pair ({0}, {1}) carries both a positive and a negative edge")]
    ConflictingSign(NodeId, NodeId),
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("no null pair found after {attempts} attempts")]
    Exhausted { attempts: usize },
    #[error("node {node} out of range for a graph of {node_count} nodes")]
    NodeOutOfRange { node: NodeId, node_count: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Polarity of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Sign {
    /// Sign of a rating or vote; zero has none.
    pub fn from_weight(w: f64) -> Option<Sign> {
        if w > 0.0 {
            Some(Sign::Positive)
        } else if w < 0.0 {
            Some(Sign::Negative)
        } else {
            None
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Positive => 1,
            Sign::Negative => -1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Sign::Positive
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Positive => "+1",
            Sign::Negative => "-1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignedEdge {
    pub u: NodeId,
    pub v: NodeId,
    pub sign: Sign,
}

impl SignedEdge {
    pub fn new(u: NodeId, v: NodeId, sign: Sign) -> Self {
        Self { u, v, sign }
    }

    /// Endpoint pair with the smaller id first.
    pub fn key(&self) -> (NodeId, NodeId) {
        (self.u.min(self.v), self.u.max(self.v))
    }
}

/// What to do with a pair that appears with both signs once directions are
/// collapsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictPolicy {
    /// Remove the pair entirely.
    #[default]
    Drop,
    Error,
}

/// Counters collected while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub input_edges: usize,
    pub self_loops: usize,
    pub duplicates: usize,
    pub conflicts: usize,
}

/// Immutable undirected graph with disjoint positive and negative adjacency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedGraph {
    node_count: usize,
    pos_adj: Vec<Vec<NodeId>>,
    neg_adj: Vec<Vec<NodeId>>,
}

/// Builds a graph over `max id + 1` nodes.
pub fn build_graph(
    raw_edges: &[SignedEdge],
    policy: ConflictPolicy,
) -> Result<(SignedGraph, BuildStats), GraphError> {
    let node_count = raw_edges
        .iter()
        .map(|e| e.u.max(e.v) + 1)
        .max()
        .unwrap_or(0);
    build_graph_with_nodes(node_count, raw_edges, policy)
}

/// Builds a graph over exactly `node_count` nodes (ids must be below it).
pub fn build_graph_with_nodes(
    node_count: usize,
    raw_edges: &[SignedEdge],
    policy: ConflictPolicy,
) -> Result<(SignedGraph, BuildStats), GraphError> {
    let mut stats = BuildStats {
        input_edges: raw_edges.len(),
        ..Default::default()
    };
    // (has_pos, has_neg) per canonical pair
    let mut pairs: BTreeMap<(NodeId, NodeId), (bool, bool)> = BTreeMap::new();
    for e in raw_edges {
        for node in [e.u, e.v] {
            if node >= node_count {
                return Err(GraphError::NodeOutOfRange { node, node_count });
            }
        }
        if e.u == e.v {
            stats.self_loops += 1;
            continue;
        }
        let entry = pairs.entry(e.key()).or_insert((false, false));
        let seen = match e.sign {
            Sign::Positive => std::mem::replace(&mut entry.0, true),
            Sign::Negative => std::mem::replace(&mut entry.1, true),
        };
        if seen {
            stats.duplicates += 1;
        }
    }
    if stats.self_loops > 0 {
        log::warn!("dropped {} self-loop(s)", stats.self_loops);
    }

    let mut pos_adj = vec![Vec::new(); node_count];
    let mut neg_adj = vec![Vec::new(); node_count];
    for (&(u, v), &(pos, neg)) in &pairs {
        match (pos, neg) {
            (true, true) => {
                if policy == ConflictPolicy::Error {
                    return Err(GraphError::ConflictingSign(u, v));
                }
                stats.conflicts += 1;
            }
            (true, false) => {
                pos_adj[u].push(v);
                pos_adj[v].push(u);
            }
            (false, true) => {
                neg_adj[u].push(v);
                neg_adj[v].push(u);
            }
            (false, false) => unreachable!(),
        }
    }
    if stats.conflicts > 0 {
        log::warn!("dropped {} pair(s) with conflicting signs", stats.conflicts);
    }
    for list in pos_adj.iter_mut().chain(neg_adj.iter_mut()) {
        list.sort_unstable();
    }
    Ok((
        SignedGraph {
            node_count,
            pos_adj,
            neg_adj,
        },
        stats,
    ))
}

impl SignedGraph {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn pos_neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.pos_adj[v]
    }

    pub fn neg_neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.neg_adj[v]
    }

    /// Size of the full neighborhood; the two lists are disjoint.
    pub fn degree(&self, v: NodeId) -> usize {
        self.pos_adj[v].len() + self.neg_adj[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.node_count).map(|v| self.degree(v)).collect()
    }

    /// Mean degree over all nodes, isolated ones included.
    pub fn mean_degree(&self) -> f64 {
        if self.node_count == 0 {
            return 0.0;
        }
        2.0 * self.edge_count() as f64 / self.node_count as f64
    }

    pub fn pos_edge_count(&self) -> usize {
        self.pos_adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neg_edge_count(&self) -> usize {
        self.neg_adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn edge_count(&self) -> usize {
        self.pos_edge_count() + self.neg_edge_count()
    }

    pub fn sign_of(&self, u: NodeId, v: NodeId) -> Option<Sign> {
        if u >= self.node_count || v >= self.node_count {
            return None;
        }
        if self.pos_adj[u].binary_search(&v).is_ok() {
            Some(Sign::Positive)
        } else if self.neg_adj[u].binary_search(&v).is_ok() {
            Some(Sign::Negative)
        } else {
            None
        }
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.sign_of(u, v).is_some()
    }

    /// Every undirected edge once, as `(min, max, sign)` in ascending order.
    pub fn edges(&self) -> Vec<SignedEdge> {
        let mut out = Vec::with_capacity(self.edge_count());
        for u in 0..self.node_count {
            let pos = self.pos_adj[u].iter().map(|&v| (v, Sign::Positive));
            let neg = self.neg_adj[u].iter().map(|&v| (v, Sign::Negative));
            let mut row: Vec<_> = pos.chain(neg).filter(|&(v, _)| v > u).collect();
            row.sort_unstable();
            out.extend(row.into_iter().map(|(v, s)| SignedEdge::new(u, v, s)));
        }
        out
    }

    /// Positive neighbor lists as aggregation segments.
    pub fn pos_segments(&self) -> Arc<Segments> {
        Arc::new(Segments::from_groups(&self.pos_adj))
    }

    pub fn neg_segments(&self) -> Arc<Segments> {
        Arc::new(Segments::from_groups(&self.neg_adj))
    }

    /// Checks symmetry, disjointness, ordering and the absence of self-loops.
    pub fn validate(&self) -> Result<(), String> {
        for v in 0..self.node_count {
            for (name, adj, other) in [
                ("pos", &self.pos_adj, &self.neg_adj),
                ("neg", &self.neg_adj, &self.pos_adj),
            ] {
                let list = &adj[v];
                if list.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(format!("{name}_adj[{v}] not strictly ascending"));
                }
                for &u in list {
                    if u == v {
                        return Err(format!("self-loop at {v}"));
                    }
                    if adj[u].binary_search(&v).is_err() {
                        return Err(format!("{name} edge {v}->{u} not symmetric"));
                    }
                    if other[v].binary_search(&u).is_ok() {
                        return Err(format!("pair ({v},{u}) has both signs"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Head/tail status of a node under a [`DegreePartition`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DegreeClass {
    Head,
    Tail,
    Unlabeled,
}

/// How a partition was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PartitionRule {
    /// Tail iff degree ≤ K.
    Threshold(f64),
    /// Top/bottom fractions of nodes ordered by degree.
    Percentile { top: f64, bottom: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreePartition {
    pub rule: PartitionRule,
    classes: Vec<DegreeClass>,
}

impl DegreePartition {
    pub fn from_classes(rule: PartitionRule, classes: Vec<DegreeClass>) -> Self {
        Self { rule, classes }
    }

    pub fn class(&self, v: NodeId) -> DegreeClass {
        self.classes[v]
    }

    pub fn classes(&self) -> &[DegreeClass] {
        &self.classes
    }

    pub fn head(&self) -> Vec<NodeId> {
        self.members(DegreeClass::Head)
    }

    pub fn tail(&self) -> Vec<NodeId> {
        self.members(DegreeClass::Tail)
    }

    fn members(&self, class: DegreeClass) -> Vec<NodeId> {
        (0..self.classes.len())
            .filter(|&v| self.classes[v] == class)
            .collect()
    }

    pub fn head_count(&self) -> usize {
        self.classes.iter().filter(|c| **c == DegreeClass::Head).count()
    }

    pub fn tail_count(&self) -> usize {
        self.classes.iter().filter(|c| **c == DegreeClass::Tail).count()
    }

    pub fn threshold(&self) -> Option<f64> {
        match self.rule {
            PartitionRule::Threshold(k) => Some(k),
            PartitionRule::Percentile { .. } => None,
        }
    }
}

/// Tail = `{v : deg(v) ≤ k}`, head = the rest.
pub fn partition_by_threshold(g: &SignedGraph, k: f64) -> DegreePartition {
    let classes = (0..g.node_count())
        .map(|v| {
            if g.degree(v) as f64 <= k {
                DegreeClass::Tail
            } else {
                DegreeClass::Head
            }
        })
        .collect();
    DegreePartition {
        rule: PartitionRule::Threshold(k),
        classes,
    }
}

/// Head = top `top_frac` of nodes by degree, tail = bottom `bottom_frac`.
///
/// Nodes are ordered by degree descending, then id ascending; the head is a
/// prefix and the tail a suffix of that order, so equal degrees favor low
/// ids for the head and high ids for the tail.
pub fn partition_by_percentile(
    g: &SignedGraph,
    top_frac: f64,
    bottom_frac: f64,
) -> Result<DegreePartition, GraphError> {
    if !(top_frac > 0.0 && bottom_frac > 0.0 && top_frac + bottom_frac <= 1.0 + 1e-12) {
        return Err(GraphError::InvalidArgument(format!(
            "percentile fractions must be positive with sum ≤ 1, got {top_frac} and {bottom_frac}"
        )));
    }
    let n = g.node_count();
    let mut order: Vec<NodeId> = (0..n).collect();
    order.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
    let n_head = ((top_frac * n as f64) + 1e-9).floor() as usize;
    let n_tail = (((bottom_frac * n as f64) + 1e-9).floor() as usize).min(n - n_head);
    let mut classes = vec![DegreeClass::Unlabeled; n];
    for &v in &order[..n_head] {
        classes[v] = DegreeClass::Head;
    }
    for &v in &order[n - n_tail..] {
        classes[v] = DegreeClass::Tail;
    }
    Ok(DegreePartition {
        rule: PartitionRule::Percentile {
            top: top_frac,
            bottom: bottom_frac,
        },
        classes,
    })
}

/// Group of an edge by the head/tail status of its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TripletGroup {
    HH,
    HT,
    TT,
    #[serde(rename = "UNLABELED")]
    Unlabeled,
}

impl TripletGroup {
    pub const ALL: [TripletGroup; 4] = [
        TripletGroup::HH,
        TripletGroup::HT,
        TripletGroup::TT,
        TripletGroup::Unlabeled,
    ];
}

impl fmt::Display for TripletGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TripletGroup::HH => "HH",
            TripletGroup::HT => "HT",
            TripletGroup::TT => "TT",
            TripletGroup::Unlabeled => "UNLABELED",
        })
    }
}

pub fn classify_triplet(p: &DegreePartition, u: NodeId, v: NodeId) -> TripletGroup {
    use DegreeClass::*;
    match (p.class(u), p.class(v)) {
        (Head, Head) => TripletGroup::HH,
        (Tail, Tail) => TripletGroup::TT,
        (Head, Tail) | (Tail, Head) => TripletGroup::HT,
        _ => TripletGroup::Unlabeled,
    }
}

/// Train/test partition of the undirected edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train_edges: Vec<SignedEdge>,
    pub test_edges: Vec<SignedEdge>,
    pub seed: u64,
}

/// Shuffles the edge list under `seed` and keeps the first
/// `⌈ratio·|E|⌉` edges for training.
pub fn split_edges(g: &SignedGraph, train_ratio: f64, seed: u64) -> Result<DataSplit, GraphError> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(GraphError::InvalidArgument(format!(
            "train ratio must lie in (0, 1), got {train_ratio}"
        )));
    }
    let mut edges = g.edges();
    if edges.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    edges.shuffle(&mut rng);
    let n_train = ((train_ratio * edges.len() as f64) - 1e-9).ceil() as usize;
    let test_edges = edges.split_off(n_train.min(edges.len()));
    Ok(DataSplit {
        train_edges: edges,
        test_edges,
        seed,
    })
}

const REJECTION_TRIES: usize = 64;

/// Uniformly samples `n` unordered pairs `(u < v)` with no edge of either sign.
pub fn sample_null_pairs(g: &SignedGraph, n: usize, seed: u64) -> Result<Vec<(NodeId, NodeId)>, GraphError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let nodes = g.node_count();
    let all_pairs = nodes * nodes.saturating_sub(1) / 2;
    if nodes < 2 || g.edge_count() >= all_pairs {
        return Err(GraphError::Exhausted { attempts: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let max_attempts = 1000 + 100 * n;
    let mut attempts = 0;
    while out.len() < n {
        if attempts >= max_attempts {
            return Err(GraphError::Exhausted { attempts });
        }
        attempts += 1;
        let a = rng.random_range(0..nodes);
        let b = rng.random_range(0..nodes);
        if a != b && !g.has_edge(a, b) {
            out.push((a.min(b), a.max(b)));
        }
    }
    Ok(out)
}

/// For each anchor `i`, draws a partner `k ≠ i` with no edge `(i, k)`.
///
/// Rejection sampling first; if that keeps failing the non-neighbors are
/// enumerated so the draw stays uniform and bounded.
pub fn sample_null_partners(g: &SignedGraph, anchors: &[NodeId], rng: &mut ChaCha8Rng) -> Result<Vec<NodeId>, GraphError> {
    let n = g.node_count();
    let mut out = Vec::with_capacity(anchors.len());
    for &i in anchors {
        if i >= n {
            return Err(GraphError::NodeOutOfRange { node: i, node_count: n });
        }
        if g.degree(i) + 1 >= n {
            return Err(GraphError::Exhausted { attempts: 0 });
        }
        let mut found = None;
        for _ in 0..REJECTION_TRIES {
            let k = rng.random_range(0..n);
            if k != i && !g.has_edge(i, k) {
                found = Some(k);
                break;
            }
        }
        let k = match found {
            Some(k) => k,
            None => {
                let candidates: Vec<NodeId> = (0..n).filter(|&k| k != i && !g.has_edge(i, k)).collect();
                candidates[rng.random_range(0..candidates.len())]
            }
        };
        out.push(k);
    }
    Ok(out)
}
