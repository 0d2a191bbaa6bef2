//! Seeded random signed graphs with a heavy-tailed degree distribution and
//! a learnable sign pattern, for smoke runs without the public datasets.
//!
//! Degrees follow a Chung–Lu model with power-law expected degrees. A small
//! share of nodes is "distrusted": edges touching them are mostly negative,
//! all other edges mostly positive.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{build_graph_with_nodes, ConflictPolicy, GraphError, Sign, SignedEdge, SignedGraph};
use crate::rng::{rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub nodes: usize,
    /// Target number of undirected edges.
    pub edges: usize,
    /// Power-law exponent of the expected degree sequence.
    pub exponent: f64,
    /// Fraction of distrusted nodes.
    pub distrusted: f64,
    /// P(negative) for an edge touching a distrusted node.
    pub neg_if_distrusted: f64,
    /// P(negative) otherwise.
    pub neg_background: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Shape of Bitcoin-Alpha after collapsing directions: 3,783 nodes,
    /// about 14k undirected edges, roughly 93% positive.
    pub fn bitcoin_alpha_like(seed: u64) -> Self {
        Self {
            nodes: 3_783,
            edges: 14_000,
            exponent: 2.1,
            distrusted: 0.05,
            neg_if_distrusted: 0.6,
            neg_background: 0.01,
            seed,
        }
    }

    /// Scaled-down variant for tests.
    pub fn small(nodes: usize, edges: usize, seed: u64) -> Self {
        Self {
            nodes,
            edges,
            ..Self::bitcoin_alpha_like(seed)
        }
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SignedGraph, GraphError> {
    let n = cfg.nodes;
    if n < 2 {
        return Err(GraphError::InvalidArgument("need at least two nodes".into()));
    }
    let max_edges = n * (n - 1) / 2;
    if cfg.edges > max_edges / 2 {
        return Err(GraphError::InvalidArgument(format!("{} edges is too dense for {} nodes", cfg.edges, n)));
    }
    let mut rng = rng_for(cfg.seed, Stream::Synthetic);

    let alpha = 1.0 / (cfg.exponent - 1.0);
    let weights: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).powf(-alpha)).collect();
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cumulative.push(acc);
    }
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        let x = rng.random_range(0.0..acc);
        cumulative.partition_point(|&c| c <= x).min(n - 1)
    };

    let distrusted: Vec<bool> = (0..n).map(|_| rng.random_bool(cfg.distrusted)).collect();
    let mut seen = HashSet::with_capacity(cfg.edges);
    let mut edges = Vec::with_capacity(cfg.edges);
    let mut attempts = 0usize;
    let max_attempts = 50 * cfg.edges + 1000;
    while edges.len() < cfg.edges {
        if attempts >= max_attempts {
            return Err(GraphError::Exhausted { attempts });
        }
        attempts += 1;
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            continue;
        }
        let p_neg = if distrusted[a] || distrusted[b] {
            cfg.neg_if_distrusted
        } else {
            cfg.neg_background
        };
        let sign = if rng.random_bool(p_neg) { Sign::Negative } else { Sign::Positive };
        edges.push(SignedEdge::new(a, b, sign));
    }
    // Shuffle ids so that degree is not a function of the id.
    let mut perm: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
    let edges: Vec<SignedEdge> = edges.into_iter().map(|e| SignedEdge::new(perm[e.u], perm[e.v], e.sign)).collect();
    Ok(build_graph_with_nodes(n, &edges, ConflictPolicy::Error)?.0)
}
