//! Shared fixtures for the criterion benches.

use ddsgnn_core::synthetic::{generate, SyntheticConfig};
use ddsgnn_core::train::RunContext;
use ddsgnn_core::{ModelConfig, SignedGraph};

/// Bitcoin-Alpha-shaped graph scaled by `frac` (1.0 = full size).
pub fn bench_graph(frac: f64) -> SignedGraph {
    let full = SyntheticConfig::bitcoin_alpha_like(0);
    let cfg = SyntheticConfig {
        nodes: (full.nodes as f64 * frac) as usize,
        edges: (full.edges as f64 * frac) as usize,
        ..full
    };
    generate(&cfg).expect("synthetic graph")
}

pub fn bench_context(g: &SignedGraph, cfg: &ModelConfig) -> RunContext {
    RunContext::prepare(g, cfg, 0).expect("context")
}
