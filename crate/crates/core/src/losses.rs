//! Training objectives: degree-fairness alignment, head constraint, and the
//! sign-prediction loss with its ranking hinges and weight decay.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{EngineError, Matrix, ParamId, ParamStore, Tape, Var};
use crate::backbone::{glorot, Missing};
use crate::graph::{classify_triplet, DegreePartition, NodeId, Sign, SignedEdge, TripletGroup};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("no training edges")]
    EmptyTrainSet,
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(String),
}

/// Normalizer of the head and tail sums in the fairness loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FairnessNormalizer {
    /// Global head and tail set sizes.
    #[default]
    GroupSize,
    /// Number of HT triplets on both sides.
    HtCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub mu: f64,
    pub eta: f64,
    pub reg_lambda: f64,
    pub fairness_normalizer: FairnessNormalizer,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            mu: 1e-2,
            eta: 1e-3,
            reg_lambda: 1e-5,
            fairness_normalizer: FairnessNormalizer::GroupSize,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        for (name, v) in [("mu", self.mu), ("eta", self.eta), ("reg_lambda", self.reg_lambda)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(LossError::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Head and tail endpoints of the HT training triplets, with normalizers.
#[derive(Debug, Clone, PartialEq)]
pub struct HtTriplets {
    pub heads: Arc<Vec<NodeId>>,
    pub tails: Arc<Vec<NodeId>>,
    pub head_norm: f64,
    pub tail_norm: f64,
}

impl HtTriplets {
    pub fn from_edges(edges: &[SignedEdge], partition: &DegreePartition, normalizer: FairnessNormalizer) -> Self {
        let mut heads = Vec::new();
        let mut tails = Vec::new();
        for e in edges {
            if classify_triplet(partition, e.u, e.v) != TripletGroup::HT {
                continue;
            }
            if partition.class(e.u) == crate::graph::DegreeClass::Head {
                heads.push(e.u);
                tails.push(e.v);
            } else {
                heads.push(e.v);
                tails.push(e.u);
            }
        }
        if heads.is_empty() {
            log::warn!("no HT triplets among {} training edges; fairness loss is 0", edges.len());
        }
        let (head_norm, tail_norm) = match normalizer {
            FairnessNormalizer::GroupSize => (partition.head_count() as f64, partition.tail_count() as f64),
            FairnessNormalizer::HtCount => (heads.len() as f64, heads.len() as f64),
        };
        Self {
            heads: Arc::new(heads),
            tails: Arc::new(tails),
            head_norm,
            tail_norm,
        }
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }
}

/// `‖Σ z_head / |S_h| − Σ z_tail / |S_t|‖²` over HT triplets; 0 without any.
pub fn fairness_loss(tape: &mut Tape, z: Var, ht: &HtTriplets) -> Result<Var, EngineError> {
    if ht.is_empty() || ht.head_norm == 0.0 || ht.tail_norm == 0.0 {
        return tape.constant(Matrix::scalar(0.0));
    }
    let h = tape.gather_rows(z, &ht.heads)?;
    let h = tape.sum_rows(h)?;
    let h = tape.scale(h, 1.0 / ht.head_norm)?;
    let t = tape.gather_rows(z, &ht.tails)?;
    let t = tape.sum_rows(t)?;
    let t = tape.scale(t, 1.0 / ht.tail_norm)?;
    let d = tape.sub(h, t)?;
    tape.squared_l2(d)
}

/// `Σ_layers Σ_{v ∈ head} ‖M_pos[v]‖² + ‖M_neg[v]‖²`.
pub fn head_constraint_loss(tape: &mut Tape, missing: &[Missing], head: &Arc<Vec<NodeId>>) -> Result<Var, EngineError> {
    let mut acc: Option<Var> = None;
    if !head.is_empty() {
        for m in missing {
            for part in [m.pos, m.neg] {
                let rows = tape.gather_rows(part, head)?;
                let sq = tape.squared_l2(rows)?;
                acc = Some(match acc {
                    Some(a) => tape.add(a, sq)?,
                    None => sq,
                });
            }
        }
    }
    match acc {
        Some(a) => Ok(a),
        None => tape.constant(Matrix::scalar(0.0)),
    }
}

/// Sign classifier: `[z_i ‖ z_j] → tanh(hidden) → 3 logits`.
///
/// The first-layer weight is stored as two halves (source and target rows)
/// so the projection runs once per node rather than once per pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierParams {
    pub w_src: ParamId,
    pub w_dst: ParamId,
    pub b_hidden: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
}

pub const SIGN_CLASSES: usize = 3;
pub const LABEL_POS: usize = 0;
pub const LABEL_NEG: usize = 1;
pub const LABEL_NULL: usize = 2;

impl ClassifierParams {
    pub fn init(store: &mut ParamStore, z_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            w_src: store.add("classifier.w_src", glorot(z_dim, hidden, rng)),
            w_dst: store.add("classifier.w_dst", glorot(z_dim, hidden, rng)),
            b_hidden: store.add("classifier.b_hidden", Matrix::zeros(1, hidden)),
            w_out: store.add("classifier.w_out", glorot(hidden, SIGN_CLASSES, rng)),
            b_out: store.add("classifier.b_out", Matrix::zeros(1, SIGN_CLASSES)),
        }
    }

    pub fn ids(&self) -> [ParamId; 5] {
        [self.w_src, self.w_dst, self.b_hidden, self.w_out, self.b_out]
    }

    pub fn vars(&self, tape: &mut Tape, store: &ParamStore) -> ClassifierVars {
        ClassifierVars {
            w_src: tape.param(store, self.w_src),
            w_dst: tape.param(store, self.w_dst),
            b_hidden: tape.param(store, self.b_hidden),
            w_out: tape.param(store, self.w_out),
            b_out: tape.param(store, self.b_out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierVars {
    pub w_src: Var,
    pub w_dst: Var,
    pub b_hidden: Var,
    pub w_out: Var,
    pub b_out: Var,
}

/// Logits (`pairs × 3`, columns `+`, `−`, `?`) for the pairs `(src[k], dst[k])`.
pub fn classifier_logits(
    tape: &mut Tape,
    z: Var,
    c: ClassifierVars,
    src: &Arc<Vec<NodeId>>,
    dst: &Arc<Vec<NodeId>>,
) -> Result<Var, EngineError> {
    let p = tape.matmul(z, c.w_src)?;
    let q = tape.matmul(z, c.w_dst)?;
    let p = tape.gather_rows(p, src)?;
    let q = tape.gather_rows(q, dst)?;
    let pre = tape.add(p, q)?;
    let pre = tape.add_row(pre, c.b_hidden)?;
    let hidden = tape.tanh(pre)?;
    let out = tape.matmul(hidden, c.w_out)?;
    tape.add_row(out, c.b_out)
}

/// Training edges of one epoch with their sampled null partners.
#[derive(Debug, Clone, PartialEq)]
pub struct SignBatch {
    src: Arc<Vec<NodeId>>,
    dst: Arc<Vec<NodeId>>,
    null: Arc<Vec<NodeId>>,
    pos_rows: Arc<Vec<usize>>,
    neg_rows: Arc<Vec<usize>>,
    pair_src: Arc<Vec<NodeId>>,
    pair_dst: Arc<Vec<NodeId>>,
    labels: Arc<Vec<usize>>,
}

impl SignBatch {
    /// `null[k]` is the null partner of `edges[k].u`.
    pub fn new(edges: &[SignedEdge], null: &[NodeId]) -> Result<Self, LossError> {
        if edges.is_empty() {
            return Err(LossError::EmptyTrainSet);
        }
        assert_eq!(edges.len(), null.len(), "one null partner per edge");
        let src: Vec<_> = edges.iter().map(|e| e.u).collect();
        let dst: Vec<_> = edges.iter().map(|e| e.v).collect();
        let (pos_rows, neg_rows): (Vec<usize>, Vec<usize>) = (0..edges.len()).partition(|&k| edges[k].sign.is_positive());
        let mut pair_src = src.clone();
        pair_src.extend_from_slice(&src);
        let mut pair_dst = dst.clone();
        pair_dst.extend_from_slice(null);
        let mut labels: Vec<usize> = edges
            .iter()
            .map(|e| match e.sign {
                Sign::Positive => LABEL_POS,
                Sign::Negative => LABEL_NEG,
            })
            .collect();
        labels.extend(std::iter::repeat_n(LABEL_NULL, edges.len()));
        Ok(Self {
            src: Arc::new(src),
            dst: Arc::new(dst),
            null: Arc::new(null.to_vec()),
            pos_rows: Arc::new(pos_rows),
            neg_rows: Arc::new(neg_rows),
            pair_src: Arc::new(pair_src),
            pair_dst: Arc::new(pair_dst),
            labels: Arc::new(labels),
        })
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Mean of `relu(x)` over the selected rows, or `None` if no rows.
fn hinge_mean(tape: &mut Tape, x: Var, rows: &Arc<Vec<usize>>, flip: bool) -> Result<Option<Var>, EngineError> {
    if rows.is_empty() {
        return Ok(None);
    }
    let sel = tape.gather_rows(x, rows)?;
    let sel = if flip { tape.scale(sel, -1.0)? } else { sel };
    let h = tape.relu(sel)?;
    Ok(Some(tape.mean(h)?))
}

/// Cross-entropy over signed and null pairs, the two ranking hinges, and
/// `reg_lambda · Σ‖θ‖²` over `reg_params`.
pub fn sign_prediction_loss(
    tape: &mut Tape,
    z: Var,
    c: ClassifierVars,
    batch: &SignBatch,
    reg_params: &[Var],
    reg_lambda: f64,
) -> Result<Var, LossError> {
    if batch.is_empty() {
        return Err(LossError::EmptyTrainSet);
    }
    let logits = classifier_logits(tape, z, c, &batch.pair_src, &batch.pair_dst)?;
    let mut loss = tape.softmax_cross_entropy(logits, &batch.labels)?;

    let zi = tape.gather_rows(z, &batch.src)?;
    let zj = tape.gather_rows(z, &batch.dst)?;
    let zk = tape.gather_rows(z, &batch.null)?;
    let dj = tape.sub(zi, zj)?;
    let dij = tape.row_squared_norm(dj)?;
    let dk = tape.sub(zi, zk)?;
    let dik = tape.row_squared_norm(dk)?;
    let gap = tape.sub(dij, dik)?;
    for h in [
        hinge_mean(tape, gap, &batch.pos_rows, false)?,
        hinge_mean(tape, gap, &batch.neg_rows, true)?,
    ]
    .into_iter()
    .flatten()
    {
        loss = tape.add(loss, h)?;
    }

    if reg_lambda > 0.0 {
        for &p in reg_params {
            let sq = tape.squared_l2(p)?;
            let sq = tape.scale(sq, reg_lambda)?;
            loss = tape.add(loss, sq)?;
        }
    }
    Ok(loss)
}

/// `μ·L1 + η·L2 + L3`.
pub fn total_loss(tape: &mut Tape, l1: Var, l2: Var, l3: Var, cfg: &LossConfig) -> Result<Var, EngineError> {
    let a = tape.scale(l1, cfg.mu)?;
    let b = tape.scale(l2, cfg.eta)?;
    let s = tape.add(a, b)?;
    tape.add(s, l3)
}

/// Scalar form of [`total_loss`].
pub fn total_loss_value(l1: f64, l2: f64, l3: f64, cfg: &LossConfig) -> Result<f64, EngineError> {
    let v = cfg.mu * l1 + cfg.eta * l2 + l3;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EngineError::NonFinite { op: "total_loss" })
    }
}
