//! Parameter layout and forward pass of the full model: encoder, optional
//! plugin, and sign classifier.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{EngineError, Matrix, ParamId, ParamStore, Tape, Var};
use crate::backbone::{
    deeper_layer_forward, final_representation, first_layer_forward, glorot, Activation, GraphSegments, LayerVars,
    LayerWeights, Missing,
};
use crate::losses::{ClassifierParams, ClassifierVars};
use crate::plugin::{compute_missing_all, PluginMode, TranslationParams};
use crate::rng::{rng_for, Stream};

/// Shape of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub d_in: usize,
    pub hidden: usize,
    pub layers: usize,
    pub classifier_hidden: usize,
    pub with_plugin: bool,
}

impl ModelSpec {
    /// Width of the representation layer `l` reads.
    pub fn source_dim(&self, l: usize) -> usize {
        if l == 0 {
            self.d_in
        } else {
            self.hidden
        }
    }

    pub fn z_dim(&self) -> usize {
        2 * self.hidden
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdSgnn {
    pub spec: ModelSpec,
    pub layers: Vec<LayerWeights<ParamId>>,
    pub translation: Option<TranslationParams>,
    pub classifier: ClassifierParams,
}

/// Per-pass switches.
#[derive(Debug, Clone, Default)]
pub struct ForwardOptions {
    pub plugin: PluginMode,
    pub activation: Activation,
    /// Nodes whose missing information is zeroed before injection.
    pub suppress_rows: Option<Arc<Vec<usize>>>,
}

/// Result of one forward pass.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub z: Var,
    /// Missing-information matrices per layer; empty without the plugin.
    pub missing: Vec<Missing>,
    pub classifier: ClassifierVars,
    /// Every parameter that took part, for weight decay.
    pub active_params: Vec<Var>,
}

impl DdSgnn {
    /// Backbone, plugin and classifier draw from separate streams so that
    /// shared parts are identical with and without the plugin.
    pub fn init(store: &mut ParamStore, spec: ModelSpec, seed: u64) -> Self {
        let mut rng = rng_for(seed, Stream::Weights);
        let layers = (0..spec.layers)
            .map(|l| {
                let rows = if l == 0 { 2 * spec.d_in } else { 3 * spec.hidden };
                LayerWeights {
                    w_pos: store.add(format!("layer.{l}.w_pos"), glorot(rows, spec.hidden, &mut rng)),
                    w_neg: store.add(format!("layer.{l}.w_neg"), glorot(rows, spec.hidden, &mut rng)),
                }
            })
            .collect();
        let translation = spec.with_plugin.then(|| {
            let mut rng = rng_for(seed, Stream::PluginWeights);
            let dims: Vec<usize> = (0..spec.layers).map(|l| spec.source_dim(l)).collect();
            TranslationParams::init(store, &dims, &mut rng)
        });
        let mut rng = rng_for(seed, Stream::ClassifierWeights);
        let classifier = ClassifierParams::init(store, spec.z_dim(), spec.classifier_hidden, &mut rng);
        Self {
            spec,
            layers,
            translation,
            classifier,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        seg: &GraphSegments,
        x0: &Matrix,
        opts: &ForwardOptions,
    ) -> Result<Encoded, EngineError> {
        let use_plugin = opts.plugin != PluginMode::Disabled && self.translation.is_some();
        let x = tape.constant(x0.clone())?;
        let mut active = Vec::new();
        let mut missing = Vec::new();
        let mut state = LayerVars { h_pos: x, h_neg: x };
        for (l, w) in self.layers.iter().enumerate() {
            let wv = LayerWeights {
                w_pos: tape.param(store, w.w_pos),
                w_neg: tape.param(store, w.w_neg),
            };
            active.extend([wv.w_pos, wv.w_neg]);
            let m = if use_plugin {
                let tp = &self.translation.as_ref().expect("checked").layers[l];
                let pos = tp.pos.vars(tape, store);
                let neg = tp.neg.vars(tape, store);
                for t in [pos, neg] {
                    active.extend([t.r, t.w_gamma_self, t.w_gamma_nbr, t.w_beta_self, t.w_beta_nbr]);
                }
                let m = compute_missing_all(tape, seg, state, pos, neg, opts.plugin)?;
                missing.push(m);
                Some(match &opts.suppress_rows {
                    Some(rows) if !rows.is_empty() => suppress(tape, m, rows)?,
                    _ => m,
                })
            } else {
                None
            };
            state = if l == 0 {
                first_layer_forward(tape, seg, x, wv, m, opts.activation)?
            } else {
                deeper_layer_forward(tape, seg, state, wv, m, opts.activation)?
            };
        }
        let z = final_representation(tape, state)?;
        let classifier = self.classifier.vars(tape, store);
        active.extend([
            classifier.w_src,
            classifier.w_dst,
            classifier.b_hidden,
            classifier.w_out,
            classifier.b_out,
        ]);
        Ok(Encoded {
            z,
            missing,
            classifier,
            active_params: active,
        })
    }

    /// Ids of all parameters in registration order.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut out: Vec<ParamId> = self.layers.iter().flat_map(|w| [w.w_pos, w.w_neg]).collect();
        if let Some(t) = &self.translation {
            out.extend(t.ids());
        }
        out.extend(self.classifier.ids());
        out
    }
}

fn suppress(tape: &mut Tape, m: Missing, rows: &Arc<Vec<usize>>) -> Result<Missing, EngineError> {
    let mask = |tape: &mut Tape, v: Var| -> Result<Var, EngineError> {
        let (r, c) = tape.value(v).shape();
        let mut mm = Matrix::filled(r, c, 1.0);
        for &row in rows.iter() {
            mm.row_mut(row).fill(0.0);
        }
        let mv = tape.constant(mm)?;
        tape.mul(v, mv)
    };
    Ok(Missing {
        pos: mask(tape, m.pos)?,
        neg: mask(tape, m.neg)?,
    })
}

/// Mean over layers, polarities and `nodes` of `‖m_v‖`.
pub fn mean_missing_norm(tape: &Tape, missing: &[Missing], nodes: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for m in missing {
        for part in [m.pos, m.neg] {
            let v = tape.value(part);
            for &n in nodes {
                total += v.row(n).iter().map(|x| x * x).sum::<f64>().sqrt();
                count += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Serialized parameters plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<C> {
    pub config: C,
    pub spec: ModelSpec,
    pub params: Vec<NamedMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMatrix {
    pub name: String,
    pub value: Matrix,
}

impl<C> Checkpoint<C> {
    pub fn capture(config: C, model: &DdSgnn, store: &ParamStore) -> Self {
        Self {
            config,
            spec: model.spec,
            params: model
                .param_ids()
                .into_iter()
                .map(|id| NamedMatrix {
                    name: store.get(id).name.clone(),
                    value: store.value(id).clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds model and store; every parameter must be present with the
    /// expected shape.
    pub fn restore(&self) -> Result<(DdSgnn, ParamStore), String> {
        let mut store = ParamStore::new();
        let model = DdSgnn::init(&mut store, self.spec, 0);
        if self.params.len() != store.len() {
            return Err(format!("checkpoint has {} parameters, model needs {}", self.params.len(), store.len()));
        }
        for p in &self.params {
            let id = store.find(&p.name).ok_or_else(|| format!("unknown parameter `{}`", p.name))?;
            let want = store.value(id).shape();
            if p.value.shape() != want {
                return Err(format!("parameter `{}` has shape {:?}, expected {:?}", p.name, p.value.shape(), want));
            }
            if !p.value.is_finite() {
                return Err(format!("parameter `{}` is not finite", p.name));
            }
            store.get_mut(id).value = p.value.clone();
        }
        Ok((model, store))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::init_embeddings;
    use crate::graph::{build_graph, ConflictPolicy, Sign, SignedEdge};

    fn spec(with_plugin: bool) -> ModelSpec {
        ModelSpec {
            d_in: 4,
            hidden: 3,
            layers: 2,
            classifier_hidden: 5,
            with_plugin,
        }
    }

    fn graph() -> crate::graph::SignedGraph {
        build_graph(
            &[
                SignedEdge::new(0, 1, Sign::Positive),
                SignedEdge::new(1, 2, Sign::Negative),
                SignedEdge::new(2, 3, Sign::Positive),
                SignedEdge::new(0, 3, Sign::Positive),
            ],
            ConflictPolicy::Drop,
        )
        .unwrap()
        .0
    }

    #[test]
    fn shared_parameters_match_across_variants() {
        let mut s1 = ParamStore::new();
        let mut s2 = ParamStore::new();
        let a = DdSgnn::init(&mut s1, spec(true), 5);
        let b = DdSgnn::init(&mut s2, spec(false), 5);
        assert_eq!(s1.value(a.layers[1].w_neg), s2.value(b.layers[1].w_neg));
        assert_eq!(s1.value(a.classifier.w_out), s2.value(b.classifier.w_out));
        assert_eq!(s1.value(a.layers[0].w_pos).shape(), (8, 3));
        assert_eq!(s1.value(a.layers[1].w_pos).shape(), (9, 3));
    }

    #[test]
    fn disabled_plugin_equals_plain_model_bitwise() {
        let g = graph();
        let seg = GraphSegments::new(&g);
        let x0 = init_embeddings(4, 4, 1).x0;
        let mut s1 = ParamStore::new();
        let mut s2 = ParamStore::new();
        let dd = DdSgnn::init(&mut s1, spec(true), 9);
        let base = DdSgnn::init(&mut s2, spec(false), 9);
        let off = ForwardOptions {
            plugin: PluginMode::Disabled,
            ..ForwardOptions::default()
        };
        let mut t1 = Tape::new();
        let e1 = dd.forward(&mut t1, &s1, &seg, &x0, &off).unwrap();
        let mut t2 = Tape::new();
        let e2 = base.forward(&mut t2, &s2, &seg, &x0, &ForwardOptions::default()).unwrap();
        assert_eq!(t1.value(e1.z), t2.value(e2.z));
        assert!(e1.missing.is_empty());
        assert_eq!(e1.active_params.len(), e2.active_params.len());
    }

    #[test]
    fn suppressed_rows_get_no_missing_info() {
        let g = graph();
        let seg = GraphSegments::new(&g);
        let x0 = init_embeddings(4, 4, 1).x0;
        let mut s = ParamStore::new();
        let dd = DdSgnn::init(&mut s, spec(true), 9);
        let full = ForwardOptions::default();
        let partial = ForwardOptions {
            suppress_rows: Some(Arc::new(vec![0, 1, 2, 3])),
            ..ForwardOptions::default()
        };
        let off = ForwardOptions {
            plugin: PluginMode::Disabled,
            ..ForwardOptions::default()
        };
        let z = |o: &ForwardOptions| {
            let mut t = Tape::new();
            let e = dd.forward(&mut t, &s, &seg, &x0, o).unwrap();
            t.value(e.z).clone()
        };
        assert_eq!(z(&partial), z(&off));
        assert_ne!(z(&full), z(&off));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut s = ParamStore::new();
        let m = DdSgnn::init(&mut s, spec(true), 2);
        let ck = Checkpoint::capture("cfg".to_string(), &m, &s);
        let json = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint<String> = serde_json::from_str(&json).unwrap();
        let (m2, s2) = back.restore().unwrap();
        assert_eq!(m2, m);
        for id in m.param_ids() {
            assert_eq!(s.value(id), s2.value(id));
        }
        let mut bad = back.clone();
        bad.params[0].value = Matrix::zeros(1, 1);
        assert!(bad.restore().is_err());
    }

    #[test]
    fn missing_norm_mean() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::from_rows(&[&[3.0, 4.0], &[0.0, 0.0]])).unwrap();
        let b = t.constant(Matrix::from_rows(&[&[1.0, 0.0], &[9.0, 9.0]])).unwrap();
        let v = mean_missing_norm(&t, &[Missing { pos: a, neg: b }], &[0]);
        assert_eq!(v, 3.0);
    }
}
