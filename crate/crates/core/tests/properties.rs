use proptest::prelude::*;

use ddsgnn_core::autodiff::{finite_difference_check, Matrix, ParamStore, Tape};
use ddsgnn_core::backbone::{Activation, GraphSegments};
use ddsgnn_core::graph::{build_graph_with_nodes, ConflictPolicy, Sign, SignedEdge, SignedGraph};
use ddsgnn_core::model::{DdSgnn, ForwardOptions, ModelSpec};
use ddsgnn_core::plugin::{localize_vector, missing_info_vector, PluginMode, TranslationWeights};

fn spec(d: usize) -> ModelSpec {
    ModelSpec {
        d_in: d,
        hidden: d,
        layers: 2,
        classifier_hidden: d,
        with_plugin: true,
    }
}

/// Random simple signed graph on `n` nodes from a flat pair mask.
fn graph_from(n: usize, mask: &[u8]) -> (SignedGraph, Vec<SignedEdge>) {
    let mut edges = Vec::new();
    let mut k = 0;
    for u in 0..n {
        for v in u + 1..n {
            match mask[k % mask.len()] % 4 {
                1 | 2 => edges.push(SignedEdge::new(u, v, Sign::Positive)),
                3 => edges.push(SignedEdge::new(u, v, Sign::Negative)),
                _ => {}
            }
            k += 1;
        }
    }
    let g = build_graph_with_nodes(n, &edges, ConflictPolicy::Error).unwrap().0;
    (g, edges)
}

fn encode(g: &SignedGraph, x0: &Matrix, model: &DdSgnn, store: &ParamStore) -> Matrix {
    let mut tape = Tape::new();
    let enc = model
        .forward(&mut tape, store, &GraphSegments::new(g), x0, &ForwardOptions::default())
        .unwrap();
    tape.value(enc.z).clone()
}

fn vec_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn encoder_is_permutation_equivariant(
        n in 2usize..9,
        mask in prop::collection::vec(any::<u8>(), 36),
        x in vec_strategy(9 * 3),
        perm_keys in prop::collection::vec(any::<u32>(), 9),
    ) {
        let d = 3;
        let (g, edges) = graph_from(n, &mask);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.sort_by_key(|&i| (perm_keys[i], i));
        let moved: Vec<SignedEdge> = edges.iter().map(|e| SignedEdge::new(perm[e.u], perm[e.v], e.sign)).collect();
        let gp = build_graph_with_nodes(n, &moved, ConflictPolicy::Error).unwrap().0;

        let x0 = Matrix::from_vec(n, d, x[..n * d].to_vec()).unwrap();
        let mut xp = Matrix::zeros(n, d);
        for v in 0..n {
            xp.row_mut(perm[v]).copy_from_slice(x0.row(v));
        }
        let mut store = ParamStore::new();
        let model = DdSgnn::init(&mut store, spec(d), 5);
        let z = encode(&g, &x0, &model, &store);
        let zp = encode(&gp, &xp, &model, &store);
        for v in 0..n {
            for (a, b) in z.row(v).iter().zip(zp.row(perm[v])) {
                prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn encoder_outputs_stay_finite(
        n in 2usize..9,
        mask in prop::collection::vec(any::<u8>(), 36),
        x in vec_strategy(9 * 3),
        scale in 1.0f64..1e6,
    ) {
        let (g, _) = graph_from(n, &mask);
        let x0 = Matrix::from_vec(n, 3, x[..n * 3].iter().map(|v| v * scale).collect()).unwrap();
        let mut store = ParamStore::new();
        let model = DdSgnn::init(&mut store, spec(3), 1);
        prop_assert!(encode(&g, &x0, &model, &store).is_finite());
    }

    #[test]
    fn missing_info_is_homogeneous(h in vec_strategy(5), r in vec_strategy(5), nb in vec_strategy(5), a in -3.0f64..3.0) {
        let sc = |v: &[f64]| v.iter().map(|x| a * x).collect::<Vec<_>>();
        let lhs = missing_info_vector(&sc(&h), &sc(&r), &sc(&nb));
        let rhs = sc(&missing_info_vector(&h, &r, &nb));
        for (x, y) in lhs.iter().zip(&rhs) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn missing_info_vanishes_when_neighborhood_matches(h in vec_strategy(5), r in vec_strategy(5)) {
        let nb: Vec<f64> = h.iter().zip(&r).map(|(a, b)| a + b).collect();
        prop_assert!(missing_info_vector(&h, &r, &nb).iter().all(|&m| m == 0.0));
    }

    #[test]
    fn zero_translation_weights_return_r_star(h in vec_strategy(4), nb in vec_strategy(4), r in vec_strategy(4)) {
        let w = TranslationWeights {
            r: Matrix::row_vector(&r),
            w_gamma_self: Matrix::zeros(4, 4),
            w_gamma_nbr: Matrix::zeros(4, 4),
            w_beta_self: Matrix::zeros(4, 4),
            w_beta_nbr: Matrix::zeros(4, 4),
        };
        let got = localize_vector(&h, &nb, &w, PluginMode::Localized, Activation::Tanh).unwrap();
        prop_assert_eq!(got, r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn plugin_gradients_match_finite_differences(
        n in 3usize..9,
        mask in prop::collection::vec(any::<u8>(), 36),
        x in vec_strategy(9 * 3),
        seed in 0u64..1000,
    ) {
        let (g, _) = graph_from(n, &mask);
        let seg = GraphSegments::new(&g);
        let x0 = Matrix::from_vec(n, 3, x[..n * 3].to_vec()).unwrap();
        let mut store = ParamStore::new();
        let model = DdSgnn::init(&mut store, spec(3), seed);
        let ids: Vec<_> = model.translation.as_ref().unwrap().ids();
        for &id in &ids {
            if store.get(id).name.ends_with(".r") {
                let k = id.index() as f64;
                for (i, v) in store.get_mut(id).value.data_mut().iter_mut().enumerate() {
                    *v = ((k + 1.0) * 0.37 + i as f64 * 0.11).sin() * 0.5;
                }
            }
        }
        let report = finite_difference_check(&mut store, &ids, 1e-4, |tape, store| {
            let enc = model.forward(tape, store, &seg, &x0, &ForwardOptions::default())?;
            let mut loss = tape.squared_l2(enc.z)?;
            for m in &enc.missing {
                for part in [m.pos, m.neg] {
                    let s = tape.squared_l2(part)?;
                    loss = tape.add(loss, s)?;
                }
            }
            Ok(loss)
        })
        .unwrap();
        prop_assert!(report.max_relative_error < 1e-4, "{:?}", report);
    }
}
