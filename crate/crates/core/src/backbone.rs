//! Balance-theory two-channel encoder.
//!
//! Every layer keeps a positive and a negative representation per node. The
//! first layer aggregates the initial embeddings over positive (resp.
//! negative) neighbors; deeper layers follow balance theory: the positive
//! channel collects positive neighbors' positive vectors and negative
//! neighbors' negative vectors ("friend of a friend", "enemy of an enemy"),
//! the negative channel the crossed combination.
//!
//! Missing-neighborhood matrices from the debiasing plugin are added onto the
//! aggregated slots when present. Weights are stored input-major
//! (`concat_dim × out_dim`) so node rows multiply from the left.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{EngineError, Matrix, Segments, Tape, Var};
use crate::graph::SignedGraph;
use crate::rng::{rng_for, Stream};

/// Non-linearity applied after each layer's projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    /// Test hook for hand-computable oracles.
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var, EngineError> {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => Ok(x),
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

/// Fixed initial node representations.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub x0: Matrix,
}

/// I.i.d. `N(0, 1/√d_in)` entries, deterministic per seed.
pub fn init_embeddings(node_count: usize, d_in: usize, seed: u64) -> EmbeddingTable {
    assert!(d_in > 0, "d_in must be positive");
    let mut rng = rng_for(seed, Stream::Embeddings);
    let normal = Normal::new(0.0, 1.0 / (d_in as f64).sqrt()).expect("valid std");
    let data = (0..node_count * d_in).map(|_| normal.sample(&mut rng)).collect();
    EmbeddingTable {
        x0: Matrix::from_vec(node_count, d_in, data).expect("finite normal samples"),
    }
}

/// Glorot-uniform matrix.
pub(crate) fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("finite")
}

/// Neighbor lists of one graph in aggregation form.
#[derive(Debug, Clone)]
pub struct GraphSegments {
    pub pos: Arc<Segments>,
    pub neg: Arc<Segments>,
}

impl GraphSegments {
    pub fn new(g: &SignedGraph) -> Self {
        Self {
            pos: g.pos_segments(),
            neg: g.neg_segments(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.pos.len()
    }

    fn of(&self, polarity: Polarity) -> &Arc<Segments> {
        match polarity {
            Polarity::Positive => &self.pos,
            Polarity::Negative => &self.neg,
        }
    }
}

/// Row `v` = mean of `h` over the `polarity`-neighbors of `v` (zero row if
/// there are none).
pub fn neighborhood_mean(
    tape: &mut Tape,
    seg: &GraphSegments,
    h: Var,
    polarity: Polarity,
) -> Result<Var, EngineError> {
    if tape.value(h).rows() != seg.node_count() {
        return Err(EngineError::ShapeMismatch {
            op: "neighborhood_mean",
            left: tape.value(h).shape(),
            right: (seg.node_count(), tape.value(h).cols()),
        });
    }
    tape.segment_mean(h, seg.of(polarity))
}

/// Matrix-level convenience wrapper around [`neighborhood_mean`].
pub fn neighborhood_mean_matrix(g: &SignedGraph, h: &Matrix, polarity: Polarity) -> Result<Matrix, EngineError> {
    let mut tape = Tape::new();
    let seg = GraphSegments::new(g);
    let hv = tape.constant(h.clone())?;
    let out = neighborhood_mean(&mut tape, &seg, hv, polarity)?;
    Ok(tape.value(out).clone())
}

/// Per-layer projection weights of both channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerWeights<T> {
    pub w_pos: T,
    pub w_neg: T,
}

/// Both channels of one layer on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerVars {
    pub h_pos: Var,
    pub h_neg: Var,
}

/// Both channels of one layer, materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub h_pos: Matrix,
    pub h_neg: Matrix,
}

impl LayerState {
    pub fn of(tape: &Tape, vars: LayerVars) -> Self {
        Self {
            h_pos: tape.value(vars.h_pos).clone(),
            h_neg: tape.value(vars.h_neg).clone(),
        }
    }
}

/// Missing-neighborhood matrices for one layer: `pos` rides the
/// positive-neighbor slot, `neg` the negative-neighbor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Missing {
    pub pos: Var,
    pub neg: Var,
}

fn inject(tape: &mut Tape, agg: Var, m: Option<Var>) -> Result<Var, EngineError> {
    match m {
        Some(m) => tape.add(agg, m),
        None => Ok(agg),
    }
}

/// First layer:
/// `h_pos[v] = σ([posmean(X0)[v] + M_pos[v] ‖ X0[v]] · W_pos)` and the same
/// for the negative channel with negative neighbors and `M_neg`.
pub fn first_layer_forward(
    tape: &mut Tape,
    seg: &GraphSegments,
    x0: Var,
    weights: LayerWeights<Var>,
    missing: Option<Missing>,
    act: Activation,
) -> Result<LayerVars, EngineError> {
    let agg_pos = neighborhood_mean(tape, seg, x0, Polarity::Positive)?;
    let agg_pos = inject(tape, agg_pos, missing.map(|m| m.pos))?;
    let cat = tape.concat_cols(&[agg_pos, x0])?;
    let pre = tape.matmul(cat, weights.w_pos)?;
    let h_pos = act.apply(tape, pre)?;

    let agg_neg = neighborhood_mean(tape, seg, x0, Polarity::Negative)?;
    let agg_neg = inject(tape, agg_neg, missing.map(|m| m.neg))?;
    let cat = tape.concat_cols(&[agg_neg, x0])?;
    let pre = tape.matmul(cat, weights.w_neg)?;
    let h_neg = act.apply(tape, pre)?;
    Ok(LayerVars { h_pos, h_neg })
}

/// Deeper layers:
///
/// ```text
/// h_pos' = σ([posmean(h_pos) + M_pos ‖ negmean(h_neg) + M_neg ‖ h_pos] · W_pos)
/// h_neg' = σ([posmean(h_neg) + M_pos ‖ negmean(h_pos) + M_neg ‖ h_neg] · W_neg)
/// ```
///
/// `M_pos` is added to the positive-neighbor slot of both channels.
pub fn deeper_layer_forward(
    tape: &mut Tape,
    seg: &GraphSegments,
    prev: LayerVars,
    weights: LayerWeights<Var>,
    missing: Option<Missing>,
    act: Activation,
) -> Result<LayerVars, EngineError> {
    let m_pos = missing.map(|m| m.pos);
    let m_neg = missing.map(|m| m.neg);

    let pp = neighborhood_mean(tape, seg, prev.h_pos, Polarity::Positive)?;
    let pp = inject(tape, pp, m_pos)?;
    let nn = neighborhood_mean(tape, seg, prev.h_neg, Polarity::Negative)?;
    let nn = inject(tape, nn, m_neg)?;
    let cat = tape.concat_cols(&[pp, nn, prev.h_pos])?;
    let pre = tape.matmul(cat, weights.w_pos)?;
    let h_pos = act.apply(tape, pre)?;

    let pn = neighborhood_mean(tape, seg, prev.h_neg, Polarity::Positive)?;
    let pn = inject(tape, pn, m_pos)?;
    let np = neighborhood_mean(tape, seg, prev.h_pos, Polarity::Negative)?;
    let np = inject(tape, np, m_neg)?;
    let cat = tape.concat_cols(&[pn, np, prev.h_neg])?;
    let pre = tape.matmul(cat, weights.w_neg)?;
    let h_neg = act.apply(tape, pre)?;
    Ok(LayerVars { h_pos, h_neg })
}

/// `z_v = h_pos[v] ‖ h_neg[v]`.
pub fn final_representation(tape: &mut Tape, last: LayerVars) -> Result<Var, EngineError> {
    tape.concat_cols(&[last.h_pos, last.h_neg])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, ConflictPolicy, Sign, SignedEdge};

    fn path3() -> SignedGraph {
        build_graph(
            &[SignedEdge::new(0, 1, Sign::Positive), SignedEdge::new(1, 2, Sign::Negative)],
            ConflictPolicy::Drop,
        )
        .unwrap()
        .0
    }

    #[test]
    fn embeddings_are_seeded_and_scaled() {
        let a = init_embeddings(3783, 64, 11);
        assert_eq!(a.x0.shape(), (3783, 64));
        assert_eq!(a, init_embeddings(3783, 64, 11));
        assert_ne!(a, init_embeddings(3783, 64, 12));
        let n = a.x0.data().len() as f64;
        let mean = a.x0.sum() / n;
        let var = a.x0.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var * 64.0 - 1.0).abs() < 0.1, "variance {var}");
    }

    #[test]
    fn neighborhood_mean_examples() {
        let g = path3();
        let h = Matrix::from_rows(&[&[2.0, 0.0], &[4.0, 2.0], &[-1.0, 5.0]]);
        let pos = neighborhood_mean_matrix(&g, &h, Polarity::Positive).unwrap();
        assert_eq!(pos.row(0), h.row(1));
        assert_eq!(pos.row(2), &[0.0, 0.0]);
        let neg = neighborhood_mean_matrix(&g, &h, Polarity::Negative).unwrap();
        assert_eq!(neg.row(0), &[0.0, 0.0]);

        let star = build_graph(
            &[SignedEdge::new(2, 0, Sign::Positive), SignedEdge::new(2, 1, Sign::Positive)],
            ConflictPolicy::Drop,
        )
        .unwrap()
        .0;
        let h = Matrix::from_rows(&[&[2.0, 0.0], &[4.0, 2.0], &[9.0, 9.0]]);
        let m = neighborhood_mean_matrix(&star, &h, Polarity::Positive).unwrap();
        assert_eq!(m.row(2), &[3.0, 1.0]);
    }

    /// Identity projection and activation expose the concatenated blocks.
    #[test]
    fn first_layer_identity_blocks_on_path() {
        let g = path3();
        let seg = GraphSegments::new(&g);
        let x0 = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let mut t = Tape::new();
        let x = t.constant(x0).unwrap();
        let w = t.constant(Matrix::identity(4)).unwrap();
        let out = first_layer_forward(&mut t, &seg, x, LayerWeights { w_pos: w, w_neg: w }, None, Activation::Identity).unwrap();
        let s = LayerState::of(&t, out);
        // node 0: one positive neighbor (1), no negative neighbors
        assert_eq!(s.h_pos.row(0), &[3.0, 4.0, 1.0, 2.0]);
        assert_eq!(s.h_neg.row(0), &[0.0, 0.0, 1.0, 2.0]);
        // node 1: positive neighbor 0, negative neighbor 2
        assert_eq!(s.h_pos.row(1), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.h_neg.row(1), &[5.0, 6.0, 3.0, 4.0]);
        // node 2: no positive neighbors
        assert_eq!(s.h_pos.row(2), &[0.0, 0.0, 5.0, 6.0]);
    }

    #[test]
    fn isolated_node_sees_only_itself() {
        let g = crate::graph::build_graph_with_nodes(2, &[], ConflictPolicy::Drop).unwrap().0;
        let seg = GraphSegments::new(&g);
        let mut t = Tape::new();
        let x = t.constant(Matrix::from_rows(&[&[0.5, -0.5], &[1.0, 0.0]])).unwrap();
        let wm = Matrix::from_rows(&[&[1.0], &[2.0], &[3.0], &[4.0]]);
        let w = t.constant(wm).unwrap();
        let out = first_layer_forward(&mut t, &seg, x, LayerWeights { w_pos: w, w_neg: w }, None, Activation::Tanh).unwrap();
        let want = (3.0 * 0.5 + 4.0 * -0.5f64).tanh();
        assert!((t.value(out.h_pos).get(0, 0) - want).abs() < 1e-15);
    }

    #[test]
    fn missing_fills_empty_slot() {
        let g = path3();
        let seg = GraphSegments::new(&g);
        let mut t = Tape::new();
        let x = t.constant(Matrix::zeros(3, 2)).unwrap();
        let m = t.constant(Matrix::from_rows(&[&[0.0, 0.0], &[0.0, 0.0], &[7.0, -7.0]])).unwrap();
        let w = t.constant(Matrix::identity(4)).unwrap();
        let out = first_layer_forward(
            &mut t,
            &seg,
            x,
            LayerWeights { w_pos: w, w_neg: w },
            Some(Missing { pos: m, neg: m }),
            Activation::Identity,
        )
        .unwrap();
        assert_eq!(t.value(out.h_pos).row(2), &[7.0, -7.0, 0.0, 0.0]);
    }

    #[test]
    fn deeper_layer_of_zero_state_is_zero() {
        let g = path3();
        let seg = GraphSegments::new(&g);
        let mut t = Tape::new();
        let z = t.constant(Matrix::zeros(3, 2)).unwrap();
        let w = t.constant(Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0], &[7.0, 8.0], &[9.0, 1.0], &[2.0, 3.0]])).unwrap();
        let prev = LayerVars { h_pos: z, h_neg: z };
        let out = deeper_layer_forward(
            &mut t,
            &seg,
            prev,
            LayerWeights { w_pos: w, w_neg: w },
            Some(Missing { pos: z, neg: z }),
            Activation::Tanh,
        )
        .unwrap();
        assert_eq!(t.value(out.h_pos), &Matrix::zeros(3, 2));
        assert_eq!(t.value(out.h_neg), &Matrix::zeros(3, 2));
    }

    #[test]
    fn final_representation_concatenates_channels() {
        let mut t = Tape::new();
        let p = t.constant(Matrix::from_rows(&[&[1.0, 0.0]])).unwrap();
        let n = t.constant(Matrix::from_rows(&[&[0.0, 2.0]])).unwrap();
        let z = final_representation(&mut t, LayerVars { h_pos: p, h_neg: n }).unwrap();
        assert_eq!(t.value(z).row(0), &[1.0, 0.0, 0.0, 2.0]);

        let zero = t.constant(Matrix::zeros(5, 3)).unwrap();
        let z = final_representation(&mut t, LayerVars { h_pos: zero, h_neg: zero }).unwrap();
        assert_eq!(t.value(z), &Matrix::zeros(5, 6));
    }

    #[test]
    fn shape_mismatch_surfaces() {
        let g = path3();
        let seg = GraphSegments::new(&g);
        let mut t = Tape::new();
        let x = t.constant(Matrix::zeros(3, 2)).unwrap();
        let w = t.constant(Matrix::identity(3)).unwrap();
        let err = first_layer_forward(&mut t, &seg, x, LayerWeights { w_pos: w, w_neg: w }, None, Activation::Tanh);
        assert!(matches!(err, Err(EngineError::ShapeMismatch { .. })));
    }
}
