//! Degree-debiasing plugin: a learned, per-node localized translation that
//! estimates the neighborhood information a node is missing.
//!
//! For a source representation `h_v` and its aggregated neighborhood `h_N`:
//!
//! ```text
//! γ_v = tanh(h_v·Wγ1 + h_N·Wγ2)
//! β_v = tanh(h_v·Wβ1 + h_N·Wβ2)
//! r_v = (γ_v + 1) ⊙ r* + β_v
//! m_v = h_v + r_v − h_N
//! ```
//!
//! One translation per layer and polarity. The positive translation reads
//! the positive channel and its positive-neighbor mean, the negative one the
//! negative channel and its negative-neighbor mean. At the first layer both
//! channels are the initial embeddings.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{EngineError, Matrix, ParamId, ParamStore, Tape, Var};
use crate::backbone::{glorot, neighborhood_mean, Activation, GraphSegments, LayerVars, Missing, Polarity};

/// How the plugin participates in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PluginMode {
    /// No missing information is injected; the encoder is the plain backbone.
    Disabled,
    /// Full localized translation.
    #[default]
    Localized,
    /// `r_v = r*` for every node.
    GlobalOnly,
}

/// Parameter ids of one polarity's translation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolarityTranslation {
    pub r: ParamId,
    pub w_gamma_self: ParamId,
    pub w_gamma_nbr: ParamId,
    pub w_beta_self: ParamId,
    pub w_beta_nbr: ParamId,
}

impl PolarityTranslation {
    fn init(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            r: store.add(format!("{prefix}.r"), Matrix::zeros(1, dim)),
            w_gamma_self: store.add(format!("{prefix}.w_gamma_self"), glorot(dim, dim, rng)),
            w_gamma_nbr: store.add(format!("{prefix}.w_gamma_nbr"), glorot(dim, dim, rng)),
            w_beta_self: store.add(format!("{prefix}.w_beta_self"), glorot(dim, dim, rng)),
            w_beta_nbr: store.add(format!("{prefix}.w_beta_nbr"), glorot(dim, dim, rng)),
        }
    }

    pub fn ids(&self) -> [ParamId; 5] {
        [self.r, self.w_gamma_self, self.w_gamma_nbr, self.w_beta_self, self.w_beta_nbr]
    }

    pub fn vars(&self, tape: &mut Tape, store: &ParamStore) -> TranslationVars {
        TranslationVars {
            r: tape.param(store, self.r),
            w_gamma_self: tape.param(store, self.w_gamma_self),
            w_gamma_nbr: tape.param(store, self.w_gamma_nbr),
            w_beta_self: tape.param(store, self.w_beta_self),
            w_beta_nbr: tape.param(store, self.w_beta_nbr),
        }
    }
}

/// Tape handles of one polarity's translation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranslationVars {
    pub r: Var,
    pub w_gamma_self: Var,
    pub w_gamma_nbr: Var,
    pub w_beta_self: Var,
    pub w_beta_nbr: Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerTranslation {
    pub pos: PolarityTranslation,
    pub neg: PolarityTranslation,
}

/// All translation parameters, one entry per encoder layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationParams {
    pub layers: Vec<LayerTranslation>,
}

impl TranslationParams {
    /// `source_dims[l]` is the width of the representation layer `l` reads.
    pub fn init(store: &mut ParamStore, source_dims: &[usize], rng: &mut impl Rng) -> Self {
        let layers = source_dims
            .iter()
            .enumerate()
            .map(|(l, &dim)| LayerTranslation {
                pos: PolarityTranslation::init(store, &format!("plugin.{l}.pos"), dim, rng),
                neg: PolarityTranslation::init(store, &format!("plugin.{l}.neg"), dim, rng),
            })
            .collect();
        Self { layers }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| l.pos.ids().into_iter().chain(l.neg.ids()))
            .collect()
    }
}

/// Localized translation `r_v` for every row of `h_self`. `delta` is the
/// activation of the scaling and shifting maps (tanh in the model).
pub fn localize(
    tape: &mut Tape,
    h_self: Var,
    h_nbr: Var,
    t: TranslationVars,
    mode: PluginMode,
    delta: Activation,
) -> Result<Var, EngineError> {
    let (rows, cols) = tape.value(h_self).shape();
    if mode == PluginMode::GlobalOnly {
        let zeros = tape.constant(Matrix::zeros(rows, cols))?;
        return tape.add_row(zeros, t.r);
    }
    let a = tape.matmul(h_self, t.w_gamma_self)?;
    let b = tape.matmul(h_nbr, t.w_gamma_nbr)?;
    let pre = tape.add(a, b)?;
    let gamma = delta.apply(tape, pre)?;
    let a = tape.matmul(h_self, t.w_beta_self)?;
    let b = tape.matmul(h_nbr, t.w_beta_nbr)?;
    let pre = tape.add(a, b)?;
    let beta = delta.apply(tape, pre)?;
    let scaled = tape.mul_row(gamma, t.r)?;
    let shifted = tape.add_row(scaled, t.r)?;
    tape.add(shifted, beta)
}

/// `m = h_self + r − h_nbr`, row-wise.
pub fn missing_info(tape: &mut Tape, h_self: Var, r: Var, h_nbr: Var) -> Result<Var, EngineError> {
    let s = tape.add(h_self, r)?;
    tape.sub(s, h_nbr)
}

/// Missing-information matrices of one layer for all nodes.
///
/// `source` is the previous layer (the initial embeddings for the first
/// layer, in which case both channels are the same variable).
pub fn compute_missing_all(
    tape: &mut Tape,
    seg: &GraphSegments,
    source: LayerVars,
    pos: TranslationVars,
    neg: TranslationVars,
    mode: PluginMode,
) -> Result<Missing, EngineError> {
    let nbr_pos = neighborhood_mean(tape, seg, source.h_pos, Polarity::Positive)?;
    let r_pos = localize(tape, source.h_pos, nbr_pos, pos, mode, Activation::Tanh)?;
    let m_pos = missing_info(tape, source.h_pos, r_pos, nbr_pos)?;

    let nbr_neg = neighborhood_mean(tape, seg, source.h_neg, Polarity::Negative)?;
    let r_neg = localize(tape, source.h_neg, nbr_neg, neg, mode, Activation::Tanh)?;
    let m_neg = missing_info(tape, source.h_neg, r_neg, nbr_neg)?;
    Ok(Missing { pos: m_pos, neg: m_neg })
}

/// Plain-matrix weights of one translation, for single-node evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationWeights {
    pub r: Matrix,
    pub w_gamma_self: Matrix,
    pub w_gamma_nbr: Matrix,
    pub w_beta_self: Matrix,
    pub w_beta_nbr: Matrix,
}

impl TranslationWeights {
    pub fn from_store(store: &ParamStore, p: &PolarityTranslation) -> Self {
        Self {
            r: store.value(p.r).clone(),
            w_gamma_self: store.value(p.w_gamma_self).clone(),
            w_gamma_nbr: store.value(p.w_gamma_nbr).clone(),
            w_beta_self: store.value(p.w_beta_self).clone(),
            w_beta_nbr: store.value(p.w_beta_nbr).clone(),
        }
    }
}

/// `r_v` of one node given its representation and neighborhood vector.
pub fn localize_vector(
    h_v: &[f64],
    h_n: &[f64],
    w: &TranslationWeights,
    mode: PluginMode,
    delta: Activation,
) -> Result<Vec<f64>, EngineError> {
    let mut tape = Tape::new();
    let hv = tape.constant(Matrix::row_vector(h_v))?;
    let hn = tape.constant(Matrix::row_vector(h_n))?;
    let t = TranslationVars {
        r: tape.constant(w.r.clone())?,
        w_gamma_self: tape.constant(w.w_gamma_self.clone())?,
        w_gamma_nbr: tape.constant(w.w_gamma_nbr.clone())?,
        w_beta_self: tape.constant(w.w_beta_self.clone())?,
        w_beta_nbr: tape.constant(w.w_beta_nbr.clone())?,
    };
    let r = localize(&mut tape, hv, hn, t, mode, delta)?;
    Ok(tape.value(r).row(0).to_vec())
}

/// `m = h_v + r_v − h_N` on plain vectors.
pub fn missing_info_vector(h_v: &[f64], r_v: &[f64], h_n: &[f64]) -> Vec<f64> {
    assert!(h_v.len() == r_v.len() && r_v.len() == h_n.len(), "length mismatch");
    h_v.iter().zip(r_v).zip(h_n).map(|((a, r), n)| a + r - n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, ConflictPolicy, Sign, SignedEdge};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn weights(d: usize, seed: u64, r: Vec<f64>) -> TranslationWeights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TranslationWeights {
            r: Matrix::row_vector(&r),
            w_gamma_self: glorot(d, d, &mut rng),
            w_gamma_nbr: glorot(d, d, &mut rng),
            w_beta_self: glorot(d, d, &mut rng),
            w_beta_nbr: glorot(d, d, &mut rng),
        }
    }

    /// Scalar loops over the stored (input-major) weights.
    fn oracle_localize(h_v: &[f64], h_n: &[f64], w: &TranslationWeights) -> Vec<f64> {
        let d = h_v.len();
        (0..d)
            .map(|j| {
                let mut g = 0.0;
                let mut b = 0.0;
                for i in 0..d {
                    g += h_v[i] * w.w_gamma_self.get(i, j) + h_n[i] * w.w_gamma_nbr.get(i, j);
                    b += h_v[i] * w.w_beta_self.get(i, j) + h_n[i] * w.w_beta_nbr.get(i, j);
                }
                (g.tanh() + 1.0) * w.r.get(0, j) + b.tanh()
            })
            .collect()
    }

    #[test]
    fn zero_weights_zero_r_give_zero_translation() {
        let w = TranslationWeights {
            r: Matrix::zeros(1, 3),
            w_gamma_self: Matrix::zeros(3, 3),
            w_gamma_nbr: Matrix::zeros(3, 3),
            w_beta_self: Matrix::zeros(3, 3),
            w_beta_nbr: Matrix::zeros(3, 3),
        };
        let r = localize_vector(&[1.0, -2.0, 0.5], &[0.3, 0.3, 0.3], &w, PluginMode::Localized, Activation::Tanh).unwrap();
        assert_eq!(r, vec![0.0; 3]);
    }

    #[test]
    fn zero_gamma_beta_leave_r_star() {
        let mut w = weights(2, 1, vec![0.4, -1.5]);
        for m in [&mut w.w_gamma_self, &mut w.w_gamma_nbr, &mut w.w_beta_self, &mut w.w_beta_nbr] {
            m.fill(0.0);
        }
        let r = localize_vector(&[3.0, 1.0], &[-1.0, 2.0], &w, PluginMode::Localized, Activation::Tanh).unwrap();
        assert_eq!(r, vec![0.4, -1.5]);
    }

    #[test]
    fn identity_delta_unit_gamma_doubles_r_star() {
        // h_v = [1, 0], Wγ1 column sums pick h_v[0] = 1 into every γ coordinate.
        let mut w = TranslationWeights {
            r: Matrix::row_vector(&[0.3, -0.8]),
            w_gamma_self: Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 0.0]]),
            w_gamma_nbr: Matrix::zeros(2, 2),
            w_beta_self: Matrix::zeros(2, 2),
            w_beta_nbr: Matrix::zeros(2, 2),
        };
        let r = localize_vector(&[1.0, 0.0], &[5.0, -5.0], &w, PluginMode::Localized, Activation::Identity).unwrap();
        assert_eq!(r, vec![0.6, -1.6]);
        w.w_gamma_self.fill(0.0);
        let r = localize_vector(&[1.0, 0.0], &[5.0, -5.0], &w, PluginMode::Localized, Activation::Identity).unwrap();
        assert_eq!(r, vec![0.3, -0.8]);
    }

    #[test]
    fn localize_matches_scalar_loops() {
        let w = weights(4, 9, vec![0.2, -0.1, 0.7, 0.0]);
        let h_v = [0.5, -0.25, 1.0, 0.1];
        let h_n = [-0.3, 0.8, 0.0, 0.6];
        let got = localize_vector(&h_v, &h_n, &w, PluginMode::Localized, Activation::Tanh).unwrap();
        let want = oracle_localize(&h_v, &h_n, &w);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn global_only_ignores_context() {
        let w = weights(3, 4, vec![0.1, 0.2, 0.3]);
        let a = localize_vector(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0], &w, PluginMode::GlobalOnly, Activation::Tanh).unwrap();
        let b = localize_vector(&[-5.0, 0.0, 9.0], &[1.0, 1.0, 1.0], &w, PluginMode::GlobalOnly, Activation::Tanh).unwrap();
        assert_eq!(a, vec![0.1, 0.2, 0.3]);
        assert_eq!(a, b);
    }

    #[test]
    fn missing_info_example() {
        assert_eq!(missing_info_vector(&[1.0, 0.0], &[0.5, 0.5], &[1.0, 1.0]), vec![0.5, -0.5]);
        assert_eq!(missing_info_vector(&[2.0, -1.0], &[0.0, 0.0], &[2.0, -1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn compute_missing_all_matches_per_node_oracle() {
        let g = build_graph(
            &[
                SignedEdge::new(0, 1, Sign::Positive),
                SignedEdge::new(0, 2, Sign::Negative),
                SignedEdge::new(1, 2, Sign::Positive),
                SignedEdge::new(2, 3, Sign::Negative),
            ],
            ConflictPolicy::Drop,
        )
        .unwrap()
        .0;
        let seg = GraphSegments::new(&g);
        let x = Matrix::from_rows(&[&[0.1, 0.2], &[-0.3, 0.4], &[0.5, -0.6], &[0.7, 0.8]]);
        let wp = weights(2, 2, vec![0.3, -0.2]);
        let wn = weights(2, 3, vec![-0.1, 0.6]);

        let mut t = Tape::new();
        let xv = t.constant(x.clone()).unwrap();
        let consts = |t: &mut Tape, w: &TranslationWeights| TranslationVars {
            r: t.constant(w.r.clone()).unwrap(),
            w_gamma_self: t.constant(w.w_gamma_self.clone()).unwrap(),
            w_gamma_nbr: t.constant(w.w_gamma_nbr.clone()).unwrap(),
            w_beta_self: t.constant(w.w_beta_self.clone()).unwrap(),
            w_beta_nbr: t.constant(w.w_beta_nbr.clone()).unwrap(),
        };
        let pv = consts(&mut t, &wp);
        let nv = consts(&mut t, &wn);
        let m = compute_missing_all(&mut t, &seg, LayerVars { h_pos: xv, h_neg: xv }, pv, nv, PluginMode::Localized).unwrap();

        for v in 0..4 {
            for (nbrs, w, out) in [(g.pos_neighbors(v), &wp, m.pos), (g.neg_neighbors(v), &wn, m.neg)] {
                let mut h_n = vec![0.0; 2];
                for &u in nbrs {
                    for c in 0..2 {
                        h_n[c] += x.get(u, c) / nbrs.len() as f64;
                    }
                }
                let r = oracle_localize(x.row(v), &h_n, w);
                let want = missing_info_vector(x.row(v), &r, &h_n);
                for c in 0..2 {
                    assert!((t.value(out).get(v, c) - want[c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn init_registers_five_params_per_polarity() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tp = TranslationParams::init(&mut store, &[8, 4], &mut rng);
        assert_eq!(tp.ids().len(), 20);
        assert_eq!(store.value(tp.layers[1].neg.w_beta_nbr).shape(), (4, 4));
        assert_eq!(store.value(tp.layers[0].pos.r), &Matrix::zeros(1, 8));
    }
}
