//! Full-batch training and evaluation of one run.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Adam, EngineError, Matrix, ParamStore, Tape};
use crate::backbone::{init_embeddings, GraphSegments};
use crate::config::{ConfigError, KPolicy, ModelConfig};
use crate::data::DataError;
use crate::graph::{
    build_graph_with_nodes, classify_triplet, sample_null_partners, split_edges, ConflictPolicy, DataSplit,
    DegreePartition, GraphError, SignedGraph, TripletGroup,
};
use crate::losses::{fairness_loss, head_constraint_loss, sign_prediction_loss, total_loss, HtTriplets, LossError, SignBatch};
use crate::metrics::{edge_labels, predict_edges, EvalReport, MetricsError, ReportMeta, SignPrediction};
use crate::model::{mean_missing_norm, Checkpoint, DdSgnn, ForwardOptions, ModelSpec};
use crate::rng::{rng_for_epoch, Stream};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("numerical failure: {0}")]
    Numerical(#[from] EngineError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("checkpoint does not match config: {0}")]
    DimMismatch(String),
    #[error("no prediction for test edge ({0}, {1})")]
    UnmatchedEdges(String, String),
    #[error("{0}")]
    Io(String),
}

impl RunError {
    /// Whether the failure is a NaN/overflow during compute.
    pub fn is_numerical(&self) -> bool {
        matches!(self, RunError::Numerical(_) | RunError::Loss(LossError::Engine(_)))
    }
}

/// Everything derived from (graph, config, seed) before any parameter exists.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub seed: u64,
    pub split: DataSplit,
    /// Graph of the training edges over all nodes; the model only sees this.
    pub train_graph: SignedGraph,
    pub seg: GraphSegments,
    pub x0: Matrix,
    pub partition: DegreePartition,
    pub head: Arc<Vec<usize>>,
    pub ht: HtTriplets,
}

impl RunContext {
    pub fn prepare(graph: &SignedGraph, cfg: &ModelConfig, seed: u64) -> Result<Self, RunError> {
        cfg.validate()?;
        let split = split_edges(graph, cfg.train_ratio, seed)?;
        if split.train_edges.is_empty() {
            return Err(LossError::EmptyTrainSet.into());
        }
        let (train_graph, _) = build_graph_with_nodes(graph.node_count(), &split.train_edges, ConflictPolicy::Error)?;
        let partition = cfg.k_policy.partition(&train_graph)?;
        let head = Arc::new(partition.head());
        let ht = HtTriplets::from_edges(&split.train_edges, &partition, cfg.fairness_normalizer);
        let x0 = init_embeddings(graph.node_count(), cfg.d_in, seed).x0;
        Ok(Self {
            seed,
            seg: GraphSegments::new(&train_graph),
            split,
            train_graph,
            x0,
            partition,
            head,
            ht,
        })
    }

    /// Partition of the training graph under another policy.
    pub fn partition_for(&self, policy: &KPolicy) -> Result<DegreePartition, RunError> {
        Ok(policy.partition(&self.train_graph)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
    /// Mean `‖m_v‖` over head nodes, layers and polarities.
    pub head_m_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub model: DdSgnn,
    pub store: ParamStore,
    pub log: Vec<EpochLog>,
}

pub fn model_spec(cfg: &ModelConfig) -> ModelSpec {
    ModelSpec {
        d_in: cfg.d_in,
        hidden: cfg.hidden_dim,
        layers: cfg.layers,
        classifier_hidden: cfg.classifier_hidden,
        with_plugin: cfg.plugin_enabled,
    }
}

/// One forward pass of the training objective; returns the total-loss
/// variable and the log entry of the pass.
pub fn training_loss(
    tape: &mut Tape,
    model: &DdSgnn,
    store: &ParamStore,
    ctx: &RunContext,
    cfg: &ModelConfig,
    batch: &SignBatch,
) -> Result<(crate::autodiff::Var, EpochLog), RunError> {
    let loss_cfg = cfg.loss_config();
    let opts = ForwardOptions {
        plugin: cfg.plugin_mode(),
        ..ForwardOptions::default()
    };
    let enc = model.forward(tape, store, &ctx.seg, &ctx.x0, &opts)?;
    let l1 = if cfg.plugin_enabled {
        fairness_loss(tape, enc.z, &ctx.ht)?
    } else {
        tape.constant(Matrix::scalar(0.0))?
    };
    let l2 = head_constraint_loss(tape, &enc.missing, &ctx.head)?;
    let l3 = sign_prediction_loss(tape, enc.z, enc.classifier, batch, &enc.active_params, loss_cfg.reg_lambda)?;
    let total = total_loss(tape, l1, l2, l3, &loss_cfg)?;
    let log = EpochLog {
        epoch: 0,
        l1: tape.scalar(l1).expect("scalar"),
        l2: tape.scalar(l2).expect("scalar"),
        l3: tape.scalar(l3).expect("scalar"),
        total: tape.scalar(total).expect("scalar"),
        head_m_norm: mean_missing_norm(tape, &enc.missing, &ctx.head),
    };
    Ok((total, log))
}

/// Signed training edges with the null partners of `epoch`.
pub fn epoch_batch(ctx: &RunContext, epoch: usize) -> Result<SignBatch, RunError> {
    let mut rng = rng_for_epoch(ctx.seed, Stream::NullPairs, epoch);
    let anchors: Vec<usize> = ctx.split.train_edges.iter().map(|e| e.u).collect();
    let null = sample_null_partners(&ctx.train_graph, &anchors, &mut rng)?;
    Ok(SignBatch::new(&ctx.split.train_edges, &null)?)
}

pub fn train(ctx: &RunContext, cfg: &ModelConfig) -> Result<TrainedModel, RunError> {
    train_with(ctx, cfg, |_| {})
}

/// As [`train`], calling `on_epoch` after every optimizer step.
pub fn train_with(ctx: &RunContext, cfg: &ModelConfig, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainedModel, RunError> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let model = DdSgnn::init(&mut store, model_spec(cfg), ctx.seed);
    let mut adam = Adam::new(cfg.learning_rate);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let batch = epoch_batch(ctx, epoch)?;
        let mut tape = Tape::new();
        let (total, mut entry) = training_loss(&mut tape, &model, &store, ctx, cfg, &batch)?;
        if !entry.total.is_finite() {
            return Err(EngineError::NonFinite { op: "total_loss" }.into());
        }
        let grads = tape.backward(total)?;
        drop(tape);
        store.zero_grad();
        store.accumulate(&grads);
        adam.step(&mut store);
        if store.iter().any(|(_, p)| !p.value.is_finite()) {
            return Err(EngineError::NonFinite { op: "adam" }.into());
        }
        entry.epoch = epoch;
        log::debug!(
            "epoch {epoch}: L1 {:.6} L2 {:.6} L3 {:.6} total {:.6} head |m| {:.6}",
            entry.l1,
            entry.l2,
            entry.l3,
            entry.total,
            entry.head_m_norm
        );
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainedModel {
        config: cfg.clone(),
        model,
        store,
        log,
    })
}

/// Node representations used for prediction.
pub fn embed(trained: &TrainedModel, ctx: &RunContext) -> Result<Matrix, RunError> {
    let cfg = &trained.config;
    let suppress_rows = (!cfg.inject_heads_at_inference).then(|| Arc::clone(&ctx.head));
    let opts = ForwardOptions {
        plugin: cfg.plugin_mode(),
        suppress_rows,
        ..ForwardOptions::default()
    };
    let mut tape = Tape::new();
    let enc = trained.model.forward(&mut tape, &trained.store, &ctx.seg, &ctx.x0, &opts)?;
    Ok(tape.value(enc.z).clone())
}

pub fn predict_test(trained: &TrainedModel, ctx: &RunContext) -> Result<Vec<SignPrediction>, RunError> {
    let z = embed(trained, ctx)?;
    let pairs: Vec<(usize, usize)> = ctx.split.test_edges.iter().map(|e| (e.u, e.v)).collect();
    Ok(predict_edges(&z, &trained.store, &trained.model.classifier, &pairs)?)
}

/// Scores the test split, grouping edges by `partition`.
pub fn evaluate(
    trained: &TrainedModel,
    ctx: &RunContext,
    dataset: &str,
    policy: &KPolicy,
    partition: &DegreePartition,
) -> Result<EvalReport, RunError> {
    let preds = predict_test(trained, ctx)?;
    report_from_predictions(&trained.config, ctx, dataset, policy, partition, &preds)
}

pub fn report_from_predictions(
    cfg: &ModelConfig,
    ctx: &RunContext,
    dataset: &str,
    policy: &KPolicy,
    partition: &DegreePartition,
    preds: &[SignPrediction],
) -> Result<EvalReport, RunError> {
    let test = &ctx.split.test_edges;
    let labels = edge_labels(test);
    let groups: Vec<TripletGroup> = test.iter().map(|e| classify_triplet(partition, e.u, e.v)).collect();
    let signs: Vec<_> = preds.iter().map(|p| p.label).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.pos_score).collect();
    let raw: Vec<f64> = preds.iter().map(|p| p.raw_pos_prob).collect();
    let loss = cfg.loss_config();
    let meta = ReportMeta {
        dataset: dataset.to_string(),
        seed: ctx.seed,
        k_policy: policy.to_string(),
        k_value: partition.threshold(),
        model: cfg.variant(),
        epochs: cfg.epochs,
        mu: loss.mu,
        eta: loss.eta,
        f1_variant: cfg.f1_variant,
    };
    Ok(EvalReport::build(meta, &signs, &labels, &groups, Some((&scores, &raw)))?)
}

pub fn checkpoint(trained: &TrainedModel) -> Checkpoint<ModelConfig> {
    Checkpoint::capture(trained.config.clone(), &trained.model, &trained.store)
}

/// Restores a trained model, checking it against `cfg`'s dimensions.
pub fn restore(ck: &Checkpoint<ModelConfig>, cfg: &ModelConfig) -> Result<TrainedModel, RunError> {
    if ck.spec != model_spec(cfg) {
        return Err(RunError::DimMismatch(format!("checkpoint {:?} vs config {:?}", ck.spec, model_spec(cfg))));
    }
    let (model, store) = ck.restore().map_err(RunError::DimMismatch)?;
    Ok(TrainedModel {
        config: cfg.clone(),
        model,
        store,
        log: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticConfig};

    fn cfg() -> ModelConfig {
        ModelConfig {
            d_in: 8,
            hidden_dim: 8,
            classifier_hidden: 8,
            epochs: 4,
            ..ModelConfig::default()
        }
    }

    fn graph() -> SignedGraph {
        generate(&SyntheticConfig::small(80, 240, 5)).unwrap()
    }

    #[test]
    fn fixed_seed_gives_identical_checkpoint() {
        let g = graph();
        let ctx = RunContext::prepare(&g, &cfg(), 3).unwrap();
        let a = serde_json::to_string(&checkpoint(&train(&ctx, &cfg()).unwrap())).unwrap();
        let ctx = RunContext::prepare(&g, &cfg(), 3).unwrap();
        let b = serde_json::to_string(&checkpoint(&train(&ctx, &cfg()).unwrap())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn baseline_logs_zero_debias_terms() {
        let c = cfg().baseline();
        let ctx = RunContext::prepare(&graph(), &c, 0).unwrap();
        let t = train(&ctx, &c).unwrap();
        assert_eq!(t.log.len(), 4);
        for e in &t.log {
            assert_eq!((e.l1, e.l2, e.head_m_norm), (0.0, 0.0, 0.0));
            assert_eq!(e.total, e.l3);
        }
    }

    #[test]
    fn restored_checkpoint_reproduces_report() {
        let g = graph();
        let c = cfg();
        let ctx = RunContext::prepare(&g, &c, 1).unwrap();
        let t = train(&ctx, &c).unwrap();
        let before = evaluate(&t, &ctx, "s", &c.k_policy, &ctx.partition).unwrap();
        let text = serde_json::to_string(&checkpoint(&t)).unwrap();
        let ck: Checkpoint<ModelConfig> = serde_json::from_str(&text).unwrap();
        let back = restore(&ck, &ck.config).unwrap();
        let after = evaluate(&back, &ctx, "s", &c.k_policy, &ctx.partition).unwrap();
        assert_eq!(before, after);

        let wider = ModelConfig { hidden_dim: 16, ..c };
        assert!(matches!(restore(&ck, &wider), Err(RunError::DimMismatch(_))));
    }

    #[test]
    fn loss_decreases_on_learnable_graph() {
        let c = ModelConfig { epochs: 30, ..cfg() };
        let ctx = RunContext::prepare(&graph(), &c, 0).unwrap();
        let t = train(&ctx, &c).unwrap();
        assert!(t.log.last().unwrap().l3 < t.log[0].l3);
    }

    #[test]
    fn suppressing_heads_changes_only_through_missing_info() {
        let g = graph();
        let c = cfg();
        let ctx = RunContext::prepare(&g, &c, 0).unwrap();
        let t = train(&ctx, &c).unwrap();
        let on = embed(&t, &ctx).unwrap();
        let mut off_cfg = t.clone();
        off_cfg.config.inject_heads_at_inference = false;
        let off = embed(&off_cfg, &ctx).unwrap();
        assert_ne!(on, off);
        let mut base = t.clone();
        base.config.plugin_enabled = false;
        let mut base_off = base.clone();
        base_off.config.inject_heads_at_inference = false;
        assert_eq!(embed(&base, &ctx).unwrap(), embed(&base_off, &ctx).unwrap());
    }
}
