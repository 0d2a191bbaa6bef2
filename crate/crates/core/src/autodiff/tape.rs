//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every primitive appends a node holding its forward value and enough
//! context to apply its local gradient rule. Nodes are appended in
//! evaluation order, so the tape is already topologically sorted and
//! [`Tape::backward`] is a single reverse sweep.

use std::sync::Arc;

use super::matrix::{gemm, Matrix};
use super::{EngineError, ParamId, ParamStore, Segments};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    SegmentMean(Var, Arc<Segments>),
    GatherRows(Var, Arc<Vec<usize>>),
    SumRows(Var),
    RowSquaredNorm(Var),
    SquaredL2(Var),
    Sum(Var),
    Mean(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Arc<Vec<usize>>,
        probs: Matrix,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of [`Tape::backward`]: the adjoint of every node reachable from
/// the loss that depends on a parameter.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients of parameter leaves. A parameter registered more than once
    /// appears once per registration.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.params
            .iter()
            .filter_map(|&(id, node)| self.grads[node].as_ref().map(|g| (id, g)))
    }

    /// Total gradient for `id`, or `None` if the loss does not reach it.
    pub fn wrt(&self, id: ParamId) -> Option<Matrix> {
        let mut out: Option<Matrix> = None;
        for (pid, g) in self.param_grads() {
            if pid == id {
                match &mut out {
                    Some(acc) => acc.add_scaled(1.0, g),
                    None => out = Some(g.clone()),
                }
            }
        }
        out
    }
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> EngineError {
    EngineError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn accumulate(slot: &mut Option<Matrix>, contribution: Matrix) {
    match slot {
        Some(g) => g.add_scaled(1.0, &contribution),
        None => *slot = Some(contribution),
    }
}

fn accumulate_with(slot: &mut Option<Matrix>, rows: usize, cols: usize, f: impl FnOnce(&mut Matrix)) {
    let g = slot.get_or_insert_with(|| Matrix::zeros(rows, cols));
    f(g);
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> Option<f64> {
        self.nodes[v.0].value.as_scalar()
    }

    fn push(&mut self, op: &'static str, value: Matrix, node_op: Op, needs_grad: bool) -> Result<Var, EngineError> {
        if !value.is_finite() {
            return Err(EngineError::NonFinite { op });
        }
        self.nodes.push(Node {
            value,
            op: node_op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Result<Var, EngineError> {
        self.push("constant", value, Op::Constant, false)
    }

    /// Registers the current value of a parameter as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = store.value(id).clone();
        self.nodes.push(Node {
            value,
            op: Op::Param(id),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(shape_err("matmul", va, vb));
        }
        let mut out = Matrix::zeros(va.rows(), vb.cols());
        gemm(1.0, va, false, vb, false, 0.0, &mut out);
        let ng = self.ng(a) || self.ng(b);
        self.push("matmul", out, Op::MatMul(a, b), ng)
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, node: Op) -> Result<Var, EngineError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(op, va, vb));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Matrix::from_vec(va.rows(), va.cols(), data).map_err(|_| EngineError::NonFinite { op })?;
        let ng = self.ng(a) || self.ng(b);
        self.push(op, out, node, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(&mut self, op: &'static str, a: Var, row: Var, f: impl Fn(f64, f64) -> f64, node: Op) -> Result<Var, EngineError> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(shape_err(op, va, vr));
        }
        let mut out = va.clone();
        let r = vr.data();
        let cols = out.cols();
        for chunk in out.data_mut().chunks_mut(cols.max(1)) {
            for (x, &y) in chunk.iter_mut().zip(r) {
                *x = f(*x, y);
            }
        }
        let ng = self.ng(a) || self.ng(row);
        self.push(op, out, node, ng)
    }

    /// Adds a 1×c row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, EngineError> {
        self.row_broadcast("add_row", a, row, |x, y| x + y, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` element-wise by a 1×c row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var, EngineError> {
        self.row_broadcast("mul_row", a, row, |x, y| x * y, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, EngineError> {
        let out = self.value(a).map(|x| c * x);
        let ng = self.ng(a);
        self.push("scale", out, Op::Scale(a, c), ng)
    }

    /// Concatenates blocks along the feature axis: row `i` of the result is
    /// `parts[0][i] ‖ parts[1][i] ‖ …`.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, EngineError> {
        let first = parts.first().ok_or(EngineError::Empty { op: "concat_cols" })?;
        let rows = self.value(*first).rows();
        for p in parts {
            if self.value(*p).rows() != rows {
                return Err(shape_err("concat_cols", self.value(*first), self.value(*p)));
            }
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let dst = out.row_mut(r);
            let mut off = 0;
            for p in parts {
                let src = self.nodes[p.0].value.row(r);
                dst[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let ng = parts.iter().any(|p| self.ng(*p));
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, EngineError> {
        let out = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push("tanh", out, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, EngineError> {
        let out = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        let ng = self.ng(a);
        self.push("sigmoid", out, Op::Sigmoid(a), ng)
    }

    /// Hinge `max(0, x)` element-wise.
    pub fn relu(&mut self, a: Var) -> Result<Var, EngineError> {
        let out = self.value(a).map(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push("relu", out, Op::Relu(a), ng)
    }

    /// Row `g` of the result is the mean of the rows of `a` listed in group
    /// `g`; an empty group yields a zero row.
    pub fn segment_mean(&mut self, a: Var, segments: &Arc<Segments>) -> Result<Var, EngineError> {
        let va = self.value(a);
        if let Some(max) = segments.max_index() {
            if max >= va.rows() {
                return Err(EngineError::ShapeMismatch {
                    op: "segment_mean",
                    left: va.shape(),
                    right: (max + 1, segments.len()),
                });
            }
        }
        let cols = va.cols();
        let mut out = Matrix::zeros(segments.len(), cols);
        for g in 0..segments.len() {
            let members = segments.members(g);
            if members.is_empty() {
                continue;
            }
            let dst = out.row_mut(g);
            for &j in members {
                for (d, s) in dst.iter_mut().zip(va.row(j)) {
                    *d += s;
                }
            }
            let inv = 1.0 / members.len() as f64;
            dst.iter_mut().for_each(|d| *d *= inv);
        }
        let ng = self.ng(a);
        self.push("segment_mean", out, Op::SegmentMean(a, Arc::clone(segments)), ng)
    }

    /// Row `i` of the result is row `index[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: &Arc<Vec<usize>>) -> Result<Var, EngineError> {
        let va = self.value(a);
        let mut out = Matrix::zeros(index.len(), va.cols());
        for (i, &j) in index.iter().enumerate() {
            if j >= va.rows() {
                return Err(EngineError::ShapeMismatch {
                    op: "gather_rows",
                    left: va.shape(),
                    right: (j + 1, 1),
                });
            }
            out.row_mut(i).copy_from_slice(va.row(j));
        }
        let ng = self.ng(a);
        self.push("gather_rows", out, Op::GatherRows(a, Arc::clone(index)), ng)
    }

    /// Column sums as a 1×c row.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var, EngineError> {
        let va = self.value(a);
        let mut out = Matrix::zeros(1, va.cols());
        for r in 0..va.rows() {
            for (d, s) in out.data_mut().iter_mut().zip(va.row(r)) {
                *d += s;
            }
        }
        let ng = self.ng(a);
        self.push("sum_rows", out, Op::SumRows(a), ng)
    }

    /// Per-row squared Euclidean norm as an n×1 column.
    pub fn row_squared_norm(&mut self, a: Var) -> Result<Var, EngineError> {
        let va = self.value(a);
        let data = (0..va.rows()).map(|r| va.row(r).iter().map(|x| x * x).sum()).collect();
        let out = Matrix::from_vec(va.rows(), 1, data).map_err(|_| EngineError::NonFinite { op: "row_squared_norm" })?;
        let ng = self.ng(a);
        self.push("row_squared_norm", out, Op::RowSquaredNorm(a), ng)
    }

    /// Sum of squares of all entries, as a 1×1 value.
    pub fn squared_l2(&mut self, a: Var) -> Result<Var, EngineError> {
        let out = Matrix::scalar(self.value(a).squared_norm());
        let ng = self.ng(a);
        self.push("squared_l2", out, Op::SquaredL2(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, EngineError> {
        let out = Matrix::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push("sum", out, Op::Sum(a), ng)
    }

    /// Mean over all entries; errors on an empty input.
    pub fn mean(&mut self, a: Var) -> Result<Var, EngineError> {
        let va = self.value(a);
        let n = va.data().len();
        if n == 0 {
            return Err(EngineError::Empty { op: "mean" });
        }
        let out = Matrix::scalar(va.sum() / n as f64);
        let ng = self.ng(a);
        self.push("mean", out, Op::Mean(a), ng)
    }

    /// Mean negative log-likelihood of `labels[i]` under `softmax(logits[i])`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &Arc<Vec<usize>>) -> Result<Var, EngineError> {
        let vl = self.value(logits);
        if vl.rows() != labels.len() {
            return Err(EngineError::ShapeMismatch {
                op: "softmax_cross_entropy",
                left: vl.shape(),
                right: (labels.len(), 1),
            });
        }
        if vl.rows() == 0 {
            return Err(EngineError::Empty {
                op: "softmax_cross_entropy",
            });
        }
        let cols = vl.cols();
        let mut probs = Matrix::zeros(vl.rows(), cols);
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            if label >= cols {
                return Err(EngineError::ShapeMismatch {
                    op: "softmax_cross_entropy",
                    left: vl.shape(),
                    right: (r, label),
                });
            }
            let row = vl.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (p, &x) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (x - max).exp();
                z += *p;
            }
            probs.row_mut(r).iter_mut().for_each(|p| *p /= z);
            total -= row[label] - max - z.ln();
        }
        let out = Matrix::scalar(total / labels.len() as f64);
        let ng = self.ng(logits);
        self.push(
            "softmax_cross_entropy",
            out,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: Arc::clone(labels),
                probs,
            },
            ng,
        )
    }

    /// Propagates d`loss`/d(node) back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients, EngineError> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(EngineError::NotScalar { shape });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));
        let mut params = Vec::new();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.apply_rule(&node.op, &node.value, &g, &mut grads);
            if let Op::Param(id) = node.op {
                params.push((id, i));
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, params })
    }

    fn apply_rule(&self, op: &Op, out: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let ng = |v: Var| self.nodes[v.0].needs_grad;
        match op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if ng(*a) {
                    accumulate_with(&mut grads[a.0], va.rows(), va.cols(), |acc| {
                        gemm(1.0, g, false, vb, true, 1.0, acc)
                    });
                }
                if ng(*b) {
                    accumulate_with(&mut grads[b.0], vb.rows(), vb.cols(), |acc| {
                        gemm(1.0, va, true, g, false, 1.0, acc)
                    });
                }
            }
            Op::Add(a, b) => {
                if ng(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if ng(*b) {
                    accumulate(&mut grads[b.0], g.clone());
                }
            }
            Op::Sub(a, b) => {
                if ng(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if ng(*b) {
                    accumulate(&mut grads[b.0], g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if ng(*a) {
                    let vb = val(*b);
                    accumulate_with(&mut grads[a.0], g.rows(), g.cols(), |acc| {
                        for ((d, x), y) in acc.data_mut().iter_mut().zip(g.data()).zip(vb.data()) {
                            *d += x * y;
                        }
                    });
                }
                if ng(*b) {
                    let va = val(*a);
                    accumulate_with(&mut grads[b.0], g.rows(), g.cols(), |acc| {
                        for ((d, x), y) in acc.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                            *d += x * y;
                        }
                    });
                }
            }
            Op::AddRow(a, row) => {
                if ng(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if ng(*row) {
                    accumulate_with(&mut grads[row.0], 1, g.cols(), |acc| {
                        for r in 0..g.rows() {
                            for (d, x) in acc.data_mut().iter_mut().zip(g.row(r)) {
                                *d += x;
                            }
                        }
                    });
                }
            }
            Op::MulRow(a, row) => {
                let (va, vr) = (val(*a), val(*row));
                if ng(*a) {
                    accumulate_with(&mut grads[a.0], g.rows(), g.cols(), |acc| {
                        for r in 0..g.rows() {
                            let gr = g.row(r);
                            for ((d, x), y) in acc.row_mut(r).iter_mut().zip(gr).zip(vr.data()) {
                                *d += x * y;
                            }
                        }
                    });
                }
                if ng(*row) {
                    accumulate_with(&mut grads[row.0], 1, g.cols(), |acc| {
                        for r in 0..g.rows() {
                            for ((d, x), y) in acc.data_mut().iter_mut().zip(g.row(r)).zip(va.row(r)) {
                                *d += x * y;
                            }
                        }
                    });
                }
            }
            Op::Scale(a, c) => {
                if ng(*a) {
                    let c = *c;
                    accumulate(&mut grads[a.0], g.map(|x| c * x));
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let cols = val(*p).cols();
                    if ng(*p) {
                        accumulate_with(&mut grads[p.0], g.rows(), cols, |acc| {
                            for r in 0..g.rows() {
                                for (d, x) in acc.row_mut(r).iter_mut().zip(&g.row(r)[off..off + cols]) {
                                    *d += x;
                                }
                            }
                        });
                    }
                    off += cols;
                }
            }
            Op::Tanh(a) => {
                if ng(*a) {
                    accumulate_with(&mut grads[a.0], g.rows(), g.cols(), |acc| {
                        for ((d, x), y) in acc.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                            *d += x * (1.0 - y * y);
                        }
                    });
                }
            }
            Op::Sigmoid(a) => {
                if ng(*a) {
                    accumulate_with(&mut grads[a.0], g.rows(), g.cols(), |acc| {
                        for ((d, x), y) in acc.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                            *d += x * y * (1.0 - y);
                        }
                    });
                }
            }
            Op::Relu(a) => {
                if ng(*a) {
                    let va = val(*a);
                    accumulate_with(&mut grads[a.0], g.rows(), g.cols(), |acc| {
                        for ((d, x), y) in acc.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                            if *y > 0.0 {
                                *d += x;
                            }
                        }
                    });
                }
            }
            Op::SegmentMean(a, seg) => {
                if ng(*a) {
                    let va = val(*a);
                    accumulate_with(&mut grads[a.0], va.rows(), va.cols(), |acc| {
                        for grp in 0..seg.len() {
                            let members = seg.members(grp);
                            if members.is_empty() {
                                continue;
                            }
                            let inv = 1.0 / members.len() as f64;
                            let gr = g.row(grp);
                            for &j in members {
                                for (d, x) in acc.row_mut(j).iter_mut().zip(gr) {
                                    *d += inv * x;
                                }
                            }
                        }
                    });
                }
            }
            Op::GatherRows(a, index) => {
                if ng(*a) {
                    let va = val(*a);
                    accumulate_with(&mut grads[a.0], va.rows(), va.cols(), |acc| {
                        for (i, &j) in index.iter().enumerate() {
                            for (d, x) in acc.row_mut(j).iter_mut().zip(g.row(i)) {
                                *d += x;
                            }
                        }
                    });
                }
            }
            Op::SumRows(a) => {
                if ng(*a) {
                    let va = val(*a);
                    accumulate_with(&mut grads[a.0], va.rows(), va.cols(), |acc| {
                        for r in 0..va.rows() {
                            for (d, x) in acc.row_mut(r).iter_mut().zip(g.data()) {
                                *d += x;
                            }
                        }
                    });
                }
            }
            Op::RowSquaredNorm(a) => {
                if ng(*a) {
                    let va = val(*a);
                    accumulate_with(&mut grads[a.0], va.rows(), va.cols(), |acc| {
                        for r in 0..va.rows() {
                            let s = 2.0 * g.get(r, 0);
                            for (d, x) in acc.row_mut(r).iter_mut().zip(va.row(r)) {
                                *d += s * x;
                            }
                        }
                    });
                }
            }
            Op::SquaredL2(a) => {
                if ng(*a) {
                    let s = 2.0 * g.data()[0];
                    let va = val(*a);
                    accumulate_with(&mut grads[a.0], va.rows(), va.cols(), |acc| acc.add_scaled(s, va));
                }
            }
            Op::Sum(a) => {
                if ng(*a) {
                    let va = val(*a);
                    let s = g.data()[0];
                    accumulate_with(&mut grads[a.0], va.rows(), va.cols(), |acc| {
                        acc.data_mut().iter_mut().for_each(|d| *d += s)
                    });
                }
            }
            Op::Mean(a) => {
                if ng(*a) {
                    let va = val(*a);
                    let s = g.data()[0] / va.data().len() as f64;
                    accumulate_with(&mut grads[a.0], va.rows(), va.cols(), |acc| {
                        acc.data_mut().iter_mut().for_each(|d| *d += s)
                    });
                }
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                if ng(*logits) {
                    let s = g.data()[0] / labels.len() as f64;
                    accumulate_with(&mut grads[logits.0], probs.rows(), probs.cols(), |acc| {
                        for (r, &label) in labels.iter().enumerate() {
                            for (c, (d, p)) in acc.row_mut(r).iter_mut().zip(probs.row(r)).enumerate() {
                                let target = if c == label { 1.0 } else { 0.0 };
                                *d += s * (p - target);
                            }
                        }
                    });
                }
            }
        }
    }
}
