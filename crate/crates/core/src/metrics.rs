//! Sign-prediction scoring and degree-fairness measurement.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{EngineError, Matrix, ParamStore, Tape};
use crate::graph::{NodeId, Sign, SignedEdge, TripletGroup};
use crate::losses::{classifier_logits, ClassifierParams, LABEL_NEG, LABEL_NULL, LABEL_POS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("auc needs both positive and negative labels")]
    OneClassOnly,
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("group {0} has no edges")]
    UndefinedGroup(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Predicted sign of one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignPrediction {
    pub label: Sign,
    /// `P(+) / (P(+) + P(−))` from the 3-class softmax.
    pub pos_score: f64,
    /// Unrenormalized 3-class `P(+)`.
    pub raw_pos_prob: f64,
}

/// Decision rule on `(+, −, ?)` logits: `+` iff `l+ ≥ l−`.
pub fn predict_from_logits(logits: &[f64]) -> SignPrediction {
    let (lp, ln, lq) = (logits[LABEL_POS], logits[LABEL_NEG], logits[LABEL_NULL]);
    let max = lp.max(ln).max(lq);
    let (ep, en, eq) = ((lp - max).exp(), (ln - max).exp(), (lq - max).exp());
    SignPrediction {
        label: if lp >= ln { Sign::Positive } else { Sign::Negative },
        pos_score: ep / (ep + en),
        raw_pos_prob: ep / (ep + en + eq),
    }
}

/// Predictions for `edges` in their stored `(u, v)` order.
pub fn predict_edges(
    z: &Matrix,
    store: &ParamStore,
    classifier: &ClassifierParams,
    edges: &[(NodeId, NodeId)],
) -> Result<Vec<SignPrediction>, MetricsError> {
    if edges.is_empty() {
        return Ok(Vec::new());
    }
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone())?;
    let cv = classifier.vars(&mut tape, store);
    let src = Arc::new(edges.iter().map(|e| e.0).collect::<Vec<_>>());
    let dst = Arc::new(edges.iter().map(|e| e.1).collect::<Vec<_>>());
    let logits = classifier_logits(&mut tape, zv, cv, &src, &dst)?;
    let lm = tape.value(logits);
    Ok((0..lm.rows()).map(|r| predict_from_logits(lm.row(r))).collect())
}

pub fn predict_sign(
    z: &Matrix,
    store: &ParamStore,
    classifier: &ClassifierParams,
    u: NodeId,
    v: NodeId,
) -> Result<SignPrediction, MetricsError> {
    Ok(predict_edges(z, store, classifier, &[(u, v)])?[0])
}

fn check_len(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Mann–Whitney AUC: `P(score⁺ > score⁻) + ½·P(tie)`.
pub fn auc(scores: &[f64], labels: &[Sign]) -> Result<f64, MetricsError> {
    check_len(scores.len(), labels.len())?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = labels.iter().filter(|s| s.is_positive()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::OneClassOnly);
    }
    // Sum of midranks of positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k].is_positive()).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Variant {
    /// F1 of the positive sign.
    #[default]
    Binary,
    Macro,
    Weighted,
}

fn f1_of(preds: &[Sign], labels: &[Sign], class: Sign) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (&p, &l) in preds.iter().zip(labels) {
        match (p == class, l == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fneg) as f64;
    2.0 * p * r / (p + r)
}

pub fn f1(preds: &[Sign], labels: &[Sign]) -> Result<f64, MetricsError> {
    f1_with(preds, labels, F1Variant::Binary)
}

pub fn f1_with(preds: &[Sign], labels: &[Sign], variant: F1Variant) -> Result<f64, MetricsError> {
    check_len(preds.len(), labels.len())?;
    let pos = f1_of(preds, labels, Sign::Positive);
    Ok(match variant {
        F1Variant::Binary => pos,
        F1Variant::Macro => (pos + f1_of(preds, labels, Sign::Negative)) / 2.0,
        F1Variant::Weighted => {
            let n_pos = labels.iter().filter(|s| s.is_positive()).count() as f64;
            let n = labels.len() as f64;
            (n_pos * pos + (n - n_pos) * f1_of(preds, labels, Sign::Negative)) / n
        }
    })
}

pub fn accuracy(preds: &[Sign], labels: &[Sign]) -> Result<f64, MetricsError> {
    check_len(preds.len(), labels.len())?;
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupCount {
    pub correct: usize,
    pub count: usize,
}

impl GroupCount {
    /// `None` for an empty group.
    pub fn accuracy(&self) -> Option<f64> {
        (self.count > 0).then(|| self.correct as f64 / self.count as f64)
    }

    fn merge(self, other: GroupCount) -> GroupCount {
        GroupCount {
            correct: self.correct + other.correct,
            count: self.count + other.count,
        }
    }
}

/// Per-group correct/total counts; every group is present, possibly empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub groups: BTreeMap<TripletGroup, GroupCount>,
}

impl GroupAccuracy {
    pub fn get(&self, g: TripletGroup) -> GroupCount {
        self.groups.get(&g).copied().unwrap_or_default()
    }

    pub fn accuracy(&self, g: TripletGroup) -> Option<f64> {
        self.get(g).accuracy()
    }

    /// HT and TT pooled.
    pub fn dot_t(&self) -> GroupCount {
        self.get(TripletGroup::HT).merge(self.get(TripletGroup::TT))
    }

    pub fn total(&self) -> usize {
        self.groups.values().map(|c| c.count).sum()
    }

    /// `|acc(HH) − acc(HT ∪ TT)|`.
    pub fn delta_dsp(&self) -> Result<f64, MetricsError> {
        let hh = self
            .accuracy(TripletGroup::HH)
            .ok_or_else(|| MetricsError::UndefinedGroup("HH".into()))?;
        let dt = self.dot_t().accuracy().ok_or_else(|| MetricsError::UndefinedGroup("HT+TT".into()))?;
        Ok(delta_dsp(hh, dt))
    }

    /// `|acc(a) − acc(b)|`.
    pub fn gap(&self, a: TripletGroup, b: TripletGroup) -> Result<f64, MetricsError> {
        let acc = |g: TripletGroup| self.accuracy(g).ok_or_else(|| MetricsError::UndefinedGroup(g.to_string()));
        Ok((acc(a)? - acc(b)?).abs())
    }
}

pub fn group_accuracy(preds: &[Sign], labels: &[Sign], groups: &[TripletGroup]) -> Result<GroupAccuracy, MetricsError> {
    check_len(preds.len(), labels.len())?;
    check_len(preds.len(), groups.len())?;
    let mut out: BTreeMap<TripletGroup, GroupCount> = TripletGroup::ALL.iter().map(|&g| (g, GroupCount::default())).collect();
    for ((p, l), g) in preds.iter().zip(labels).zip(groups) {
        let c = out.get_mut(g).expect("all groups seeded");
        c.count += 1;
        if p == l {
            c.correct += 1;
        }
    }
    Ok(GroupAccuracy { groups: out })
}

/// Degree statistical parity gap. The per-edge average of a difference that
/// is constant per group reduces to the difference itself.
pub fn delta_dsp(acc_hh: f64, acc_dot_t: f64) -> f64 {
    (acc_hh - acc_dot_t).abs()
}

/// One evaluation run. Field order fixes the JSON key order and CSV columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub seed: u64,
    #[serde(rename = "K_policy")]
    pub k_policy: String,
    /// Absent when only hard predictions are available.
    pub auc: Option<f64>,
    pub f1: f64,
    pub acc_hh: Option<f64>,
    pub acc_ht: Option<f64>,
    pub acc_tt: Option<f64>,
    pub acc_dot_t: Option<f64>,
    pub delta_dsp: Option<f64>,
    pub epochs: usize,
    pub mu: f64,
    pub eta: f64,
    pub model: String,
    pub k_value: Option<f64>,
    pub auc_raw: Option<f64>,
    pub f1_variant: F1Variant,
    pub accuracy: f64,
    pub gap_hh_ht: Option<f64>,
    pub gap_ht_tt: Option<f64>,
    pub count_hh: usize,
    pub count_ht: usize,
    pub count_tt: usize,
    pub count_unlabeled: usize,
    pub acc_unlabeled: Option<f64>,
}

/// Run metadata echoed into an [`EvalReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportMeta {
    pub dataset: String,
    pub seed: u64,
    pub k_policy: String,
    pub k_value: Option<f64>,
    pub model: String,
    pub epochs: usize,
    pub mu: f64,
    pub eta: f64,
    pub f1_variant: F1Variant,
}

impl EvalReport {
    /// Fairness fields only; AUC and F1 are computed when scores are given.
    pub fn build(
        meta: ReportMeta,
        preds: &[Sign],
        labels: &[Sign],
        groups: &[TripletGroup],
        scores: Option<(&[f64], &[f64])>,
    ) -> Result<Self, MetricsError> {
        let ga = group_accuracy(preds, labels, groups)?;
        let (auc_v, auc_raw) = match scores {
            Some((renorm, raw)) => (Some(auc(renorm, labels)?), Some(auc(raw, labels)?)),
            None => (None, None),
        };
        let f1_v = f1_with(preds, labels, meta.f1_variant)?;
        Ok(Self {
            dataset: meta.dataset,
            seed: meta.seed,
            k_policy: meta.k_policy,
            auc: auc_v,
            f1: f1_v,
            acc_hh: ga.accuracy(TripletGroup::HH),
            acc_ht: ga.accuracy(TripletGroup::HT),
            acc_tt: ga.accuracy(TripletGroup::TT),
            acc_dot_t: ga.dot_t().accuracy(),
            delta_dsp: ga.delta_dsp().ok(),
            epochs: meta.epochs,
            mu: meta.mu,
            eta: meta.eta,
            model: meta.model,
            k_value: meta.k_value,
            auc_raw,
            f1_variant: meta.f1_variant,
            accuracy: accuracy(preds, labels)?,
            gap_hh_ht: ga.gap(TripletGroup::HH, TripletGroup::HT).ok(),
            gap_ht_tt: ga.gap(TripletGroup::HT, TripletGroup::TT).ok(),
            count_hh: ga.get(TripletGroup::HH).count,
            count_ht: ga.get(TripletGroup::HT).count,
            count_tt: ga.get(TripletGroup::TT).count,
            count_unlabeled: ga.get(TripletGroup::Unlabeled).count,
            acc_unlabeled: ga.accuracy(TripletGroup::Unlabeled),
        })
    }
}

/// Signs of a list of edges.
pub fn edge_labels(edges: &[SignedEdge]) -> Vec<Sign> {
    edges.iter().map(|e| e.sign).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use Sign::{Negative as N, Positive as P};

    fn brute_auc(scores: &[f64], labels: &[Sign]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, li) in labels.iter().enumerate() {
            for (j, lj) in labels.iter().enumerate() {
                if li.is_positive() && !lj.is_positive() {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn logits_examples() {
        let p = predict_from_logits(&[5.0, 0.0, 0.0]);
        assert_eq!(p.label, P);
        assert!((p.pos_score - 0.993).abs() < 1e-3);
        let p = predict_from_logits(&[1.3, 1.3, 9.0]);
        assert_eq!(p.label, P);
        assert_eq!(p.pos_score, 0.5);
        assert_eq!(predict_from_logits(&[-1.0, 0.0, 0.0]).label, N);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.7, 0.1], &[P, N, P, N]).unwrap(), 0.75);
        assert_eq!(auc(&[0.9, 0.1], &[P, N]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 4], &[P, N, P, N]).unwrap(), 0.5);
        assert_eq!(auc(&[0.3, 0.4], &[P, P]).unwrap_err(), MetricsError::OneClassOnly);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(&[P, N, P], &[P, N, P]).unwrap(), 1.0);
        assert_eq!(f1(&[N, N], &[P, N]).unwrap(), 0.0);
        // TP = 2, FP = 1, FN = 1
        let v = f1(&[P, P, P, N, N], &[P, P, N, P, N]).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        let m = f1_with(&[P, P, P, N, N], &[P, P, N, P, N], F1Variant::Macro).unwrap();
        assert!((m - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
        let w = f1_with(&[P, P, P, N, N], &[P, P, N, P, N], F1Variant::Weighted).unwrap();
        assert!((w - (3.0 * 2.0 / 3.0 + 2.0 * 0.5) / 5.0).abs() < 1e-15);
    }

    #[test]
    fn group_examples() {
        use TripletGroup::*;
        let ga = group_accuracy(&[P, P, N, N], &[P, P, P, P], &[HH, HH, HT, HT]).unwrap();
        assert_eq!(ga.accuracy(HH), Some(1.0));
        assert_eq!(ga.accuracy(HT), Some(0.0));
        assert_eq!(ga.accuracy(TT), None);
        assert_eq!(ga.get(TT).count, 0);
        assert_eq!(ga.delta_dsp().unwrap(), 1.0);
        assert!(matches!(ga.gap(HT, TT), Err(MetricsError::UndefinedGroup(_))));

        let only_hh = group_accuracy(&[P], &[P], &[HH]).unwrap();
        assert!(matches!(only_hh.delta_dsp(), Err(MetricsError::UndefinedGroup(_))));
    }

    #[test]
    fn delta_dsp_examples() {
        assert!((delta_dsp(0.9, 0.8) - 0.1).abs() < 1e-15);
        assert_eq!(delta_dsp(0.7, 0.7), 0.0);
    }

    #[test]
    fn report_keeps_empty_groups_as_null() {
        use TripletGroup::*;
        let meta = ReportMeta {
            dataset: "toy".into(),
            seed: 1,
            k_policy: "mean".into(),
            k_value: Some(2.0),
            model: "dd-sgcn".into(),
            epochs: 3,
            mu: 0.01,
            eta: 0.001,
            f1_variant: F1Variant::Binary,
        };
        let r = EvalReport::build(meta, &[P, N, P], &[P, N, N], &[HH, HT, HH], Some((&[0.9, 0.1, 0.6], &[0.8, 0.1, 0.5]))).unwrap();
        assert_eq!(r.acc_tt, None);
        assert_eq!(r.count_tt, 0);
        assert_eq!(r.acc_hh, Some(0.5));
        assert_eq!(r.delta_dsp, Some(0.5));
        let json = serde_json::to_value(&r).unwrap();
        assert!(json.get("acc_tt").unwrap().is_null());
        assert!(json.get("K_policy").is_some());
    }

    fn signs(n: usize) -> impl Strategy<Value = Vec<Sign>> {
        prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { P } else { N }), n)
    }

    fn groups(n: usize) -> impl Strategy<Value = Vec<TripletGroup>> {
        prop::collection::vec(prop::sample::select(TripletGroup::ALL.to_vec()), n)
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(
            scores in prop::collection::vec(prop::sample::select(vec![0.0, 0.1, 0.25, 0.5, 0.9, 1.0]), 2..40),
            seed_labels in signs(40),
        ) {
            let labels = &seed_labels[..scores.len()];
            prop_assume!(labels.iter().any(|s| s.is_positive()) && labels.iter().any(|s| !s.is_positive()));
            let a = auc(&scores, labels).unwrap();
            prop_assert!((a - brute_auc(&scores, labels)).abs() < 1e-12);
        }

        #[test]
        fn auc_monotone_invariant(
            scores in prop::collection::vec(-3.0f64..3.0, 2..30),
            seed_labels in signs(30),
        ) {
            let labels = &seed_labels[..scores.len()];
            prop_assume!(labels.iter().any(|s| s.is_positive()) && labels.iter().any(|s| !s.is_positive()));
            let t: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 1.0).collect();
            prop_assert_eq!(auc(&scores, labels).unwrap(), auc(&t, labels).unwrap());
        }

        #[test]
        fn metrics_permutation_invariant(
            preds in signs(25),
            labels in signs(25),
            scores in prop::collection::vec(0.0f64..1.0, 25),
            rot in 0usize..25,
        ) {
            let mut p2 = preds.clone();
            let mut l2 = labels.clone();
            let mut s2 = scores.clone();
            p2.rotate_left(rot);
            l2.rotate_left(rot);
            s2.rotate_left(rot);
            prop_assert_eq!(f1(&preds, &labels).unwrap(), f1(&p2, &l2).unwrap());
            if let Ok(a) = auc(&scores, &labels) {
                prop_assert!((a - auc(&s2, &l2).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn accuracy_is_weighted_group_mean(preds in signs(30), labels in signs(30), gs in groups(30)) {
            let ga = group_accuracy(&preds, &labels, &gs).unwrap();
            prop_assert_eq!(ga.total(), 30);
            let weighted: f64 = TripletGroup::ALL
                .iter()
                .filter_map(|&g| ga.accuracy(g).map(|a| a * ga.get(g).count as f64))
                .sum::<f64>() / 30.0;
            prop_assert!((weighted - accuracy(&preds, &labels).unwrap()).abs() < 1e-12);
            if let (Some(ht), Some(tt)) = (ga.accuracy(TripletGroup::HT), ga.accuracy(TripletGroup::TT)) {
                let (nh, nt) = (ga.get(TripletGroup::HT).count as f64, ga.get(TripletGroup::TT).count as f64);
                prop_assert!((ga.dot_t().accuracy().unwrap() - (nh * ht + nt * tt) / (nh + nt)).abs() < 1e-12);
            }
        }

        #[test]
        fn delta_dsp_symmetric(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            prop_assert_eq!(delta_dsp(a, b), delta_dsp(b, a));
            prop_assert_eq!(delta_dsp(a, b) == 0.0, a == b);
        }
    }
}
