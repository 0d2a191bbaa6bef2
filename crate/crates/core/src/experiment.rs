//! Multi-run drivers: seed sets, the ablation matrix, K sweeps and audits of
//! externally produced predictions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::config::{Ablation, ConfigError, KPolicy, ModelConfig};
use crate::data::{IdMap, PredictionRow};
use crate::graph::{classify_triplet, Sign, SignedGraph, TripletGroup};
use crate::metrics::{edge_labels, EvalReport, ReportMeta, SignPrediction};
use crate::train::{evaluate, train, RunContext, RunError, TrainedModel};

/// K values of the degree-threshold sweep.
pub const DEFAULT_SWEEP_K: [f64; 4] = [6.0, 15.0, 30.0, 50.0];

/// One trained and evaluated seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub ctx: RunContext,
    pub trained: TrainedModel,
    pub report: EvalReport,
}

/// Trains on `seed` and evaluates under the configured K policy. The
/// checkpointed config echoes the seed actually used.
pub fn run_seed(graph: &SignedGraph, dataset: &str, cfg: &ModelConfig, seed: u64) -> Result<SeedRun, RunError> {
    let cfg = ModelConfig { seed, ..cfg.clone() };
    let ctx = RunContext::prepare(graph, &cfg, seed)?;
    let trained = train(&ctx, &cfg)?;
    let report = evaluate(&trained, &ctx, dataset, &cfg.k_policy, &ctx.partition)?;
    Ok(SeedRun { ctx, trained, report })
}

pub fn run_seeds(graph: &SignedGraph, dataset: &str, cfg: &ModelConfig, seeds: &[u64]) -> Result<Vec<EvalReport>, RunError> {
    seeds
        .iter()
        .map(|&s| run_seed(graph, dataset, cfg, s).map(|r| r.report))
        .collect()
}

/// Parses `N..M` (exclusive end) or a single seed.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, ConfigError> {
    let bad = || ConfigError::Invalid(format!("bad seed range `{s}` (expected N..M or N)"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b <= a {
            return Err(bad());
        }
        Ok((a..b).collect())
    } else {
        Ok(vec![s.parse().map_err(|_| bad())?])
    }
}

/// Mean and sample standard deviation; the deviation needs two values.
pub fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.len() > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Aggregate of several reports of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// Variant name or K value.
    pub key: String,
    pub runs: usize,
    pub delta_dsp: Option<f64>,
    pub delta_dsp_std: Option<f64>,
    pub auc: Option<f64>,
    pub auc_std: Option<f64>,
    pub f1: Option<f64>,
    pub f1_std: Option<f64>,
    pub gap_hh_ht: Option<f64>,
    pub gap_ht_tt: Option<f64>,
}

pub fn summarize(key: impl Into<String>, reports: &[EvalReport]) -> SummaryRow {
    let col = |f: &dyn Fn(&EvalReport) -> Option<f64>| reports.iter().filter_map(f).collect::<Vec<_>>();
    let (delta_dsp, delta_dsp_std) = mean_std(&col(&|r| r.delta_dsp));
    let (auc, auc_std) = mean_std(&col(&|r| r.auc));
    let (f1, f1_std) = mean_std(&col(&|r| Some(r.f1)));
    SummaryRow {
        key: key.into(),
        runs: reports.len(),
        delta_dsp,
        delta_dsp_std,
        auc,
        auc_std,
        f1,
        f1_std,
        gap_hh_ht: mean_std(&col(&|r| r.gap_hh_ht)).0,
        gap_ht_tt: mean_std(&col(&|r| r.gap_ht_tt)).0,
    }
}

/// Reports of one ablation variant over the seed set.
#[derive(Debug, Clone)]
pub struct AblationResult {
    pub variant: Ablation,
    pub reports: Vec<EvalReport>,
}

pub fn ablate(graph: &SignedGraph, dataset: &str, cfg: &ModelConfig, seeds: &[u64]) -> Result<Vec<AblationResult>, RunError> {
    Ablation::ALL
        .into_iter()
        .map(|variant| {
            let c = cfg.with_ablation(variant);
            Ok(AblationResult {
                variant,
                reports: run_seeds(graph, dataset, &c, seeds)?,
            })
        })
        .collect()
}

/// One row of the K sweep.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub k: f64,
    pub reports: Vec<EvalReport>,
}

/// Trains and evaluates with `K` fixed to each value, in ascending order.
pub fn sweep_k(
    graph: &SignedGraph,
    dataset: &str,
    cfg: &ModelConfig,
    ks: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepResult>, RunError> {
    if ks.is_empty() {
        return Err(ConfigError::Invalid("K sweep needs at least one value".into()).into());
    }
    let mut ks = ks.to_vec();
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    ks.into_iter()
        .map(|k| {
            let c = ModelConfig {
                k_policy: KPolicy::Fixed(k),
                ..cfg.clone()
            };
            Ok(SweepResult {
                k,
                reports: run_seeds(graph, dataset, &c, seeds)?,
            })
        })
        .collect()
}

/// Test-edge predictions in original ids, for [`audit`] or external tools.
pub fn prediction_rows(ctx: &RunContext, id_map: Option<&IdMap>, preds: &[SignPrediction]) -> Vec<PredictionRow> {
    let name = |v: usize| match id_map.and_then(|m| m.original(v)) {
        Some(s) => s.to_string(),
        None => v.to_string(),
    };
    ctx.split
        .test_edges
        .iter()
        .zip(preds)
        .map(|(e, p)| PredictionRow {
            source: name(e.u),
            target: name(e.v),
            sign: p.label.as_i8(),
            score: Some(p.pos_score),
        })
        .collect()
}

/// Group accuracies of externally supplied predictions on the test split
/// of `ctx`. Predictions may list an edge in either orientation; extra rows
/// are ignored, a missing test edge is an error.
pub fn audit(
    ctx: &RunContext,
    id_map: Option<&IdMap>,
    rows: &[PredictionRow],
    policy: &KPolicy,
    meta: ReportMeta,
) -> Result<EvalReport, RunError> {
    let dense = |s: &str| match id_map {
        Some(m) => m.get(s),
        None => s.parse::<usize>().ok(),
    };
    let mut by_edge = HashMap::with_capacity(rows.len());
    for r in rows {
        if let (Some(a), Some(b)) = (dense(&r.source), dense(&r.target)) {
            let sign = if r.sign > 0 { Sign::Positive } else { Sign::Negative };
            by_edge.insert((a.min(b), a.max(b)), sign);
        }
    }
    let partition = ctx.partition_for(policy)?;
    let test = &ctx.split.test_edges;
    let mut preds = Vec::with_capacity(test.len());
    for e in test {
        match by_edge.get(&(e.u.min(e.v), e.u.max(e.v))) {
            Some(&s) => preds.push(s),
            None => {
                let name = |v: usize| id_map.and_then(|m| m.original(v)).map_or_else(|| v.to_string(), str::to_string);
                return Err(RunError::UnmatchedEdges(name(e.u), name(e.v)));
            }
        }
    }
    let labels = edge_labels(test);
    let groups: Vec<TripletGroup> = test.iter().map(|e| classify_triplet(&partition, e.u, e.v)).collect();
    let meta = ReportMeta {
        k_policy: policy.to_string(),
        k_value: partition.threshold(),
        ..meta
    };
    Ok(EvalReport::build(meta, &preds, &labels, &groups, None)?)
}
