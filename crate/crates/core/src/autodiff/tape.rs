//! Reverse-mode tape over 2-D tensors.
//!
//! Operations are appended in execution order, so inputs always precede
//! their consumers. [`Tape::backward`] walks the nodes once in reverse and
//! adds each leaf's gradient into the [`Tensor`] it was read from.

use std::sync::Arc;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::CounterStream;
use crate::sparse::SparseAdjacency;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf(Option<Tensor>),
    MatMul(Var, Var),
    Spmm(Arc<SparseAdjacency>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, Arc<Matrix>),
    Relu(Var),
    LeakyRelu(Var, f64),
    Elu(Var, f64),
    Sigmoid(Var),
    LogSigmoid(Var),
    Exp(Var),
    Log(Var),
    ClampMin(Var, f64),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    Sum(Var),
    RowsMean(Var, Vec<usize>),
    PickMean(Var, Vec<(usize, usize)>),
    BceWithLogits(Var, Arc<Matrix>, Vec<usize>),
    Dropout(Var, Vec<bool>, f64),
    EdgeScores(Arc<SparseAdjacency>, Var, Var),
    EdgeSoftmax(Arc<SparseAdjacency>, Var),
    EdgeAggregate(Arc<SparseAdjacency>, Var, Var),
}

struct Node {
    value: Arc<Matrix>,
    op: Op,
    requires_grad: bool,
}

/// Single-threaded recording of one forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn finite(op: &'static str, m: Matrix) -> Result<Matrix> {
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::NonFinite { op })
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x)` without overflow for large `|x|`.
#[inline]
fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

fn softmax_row(src: &[f64], dst: &mut [f64]) {
    let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = (s - max).exp();
        z += *d;
    }
    for d in dst.iter_mut() {
        *d /= z;
    }
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

    pub fn value_arc(&self, v: Var) -> Arc<Matrix> {
        Arc::clone(&self.nodes[v.0].value)
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Reads a tensor onto the tape. Gradients flow back into it when it is
    /// trainable.
    pub fn param(&mut self, t: &Tensor) -> Var {
        let requires_grad = t.requires_grad();
        self.nodes.push(Node {
            value: t.value(),
            op: Op::Leaf(requires_grad.then(|| t.clone())),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Reads a tensor's current value with gradients blocked. Used to hold
    /// one model fixed while another is trained against it.
    pub fn frozen(&mut self, t: &Tensor) -> Var {
        self.constant_arc(t.value())
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf(None), false)
    }

    pub fn constant_arc(&mut self, m: Arc<Matrix>) -> Var {
        self.nodes.push(Node {
            value: m,
            op: Op::Leaf(None),
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Same value as `v`, cut off from the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value_arc(v);
        self.constant_arc(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(finite("matmul", out)?, Op::MatMul(a, b), rg))
    }

    pub fn spmm(&mut self, adj: &Arc<SparseAdjacency>, d: Var) -> Result<Var> {
        let out = adj.spmm(self.value(d))?;
        let rg = self.rg(d);
        Ok(self.push(finite("spmm", out)?, Op::Spmm(Arc::clone(adj), d), rg))
    }

    fn binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        let (va, vb) = (self.value(a), self.value(b));
        va.check_same_shape(vb, op)?;
        finite(op, va.zip_map(vb, f))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Adds a `1 x n` row to every row of an `m x n` input.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(Error::shape(
                "add_row",
                format!("1x{}", va.cols()),
                format!("{}x{}", vr.rows(), vr.cols()),
            ));
        }
        let r = vr.row(0);
        let out = Matrix::from_fn(va.rows(), va.cols(), |i, j| va.get(i, j) + r[j]);
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(finite("add_row", out)?, Op::AddRow(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = finite("scale", self.value(a).map(|x| x * c))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Scale(a, c), rg))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = finite("add_scalar", self.value(a).map(|x| x + c))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::AddScalar(a), rg))
    }

    /// Elementwise product with a constant matrix.
    pub fn mul_const(&mut self, a: Var, factor: Arc<Matrix>) -> Result<Var> {
        let va = self.value(a);
        va.check_same_shape(&factor, "mul_const")?;
        let out = finite("mul_const", va.zip_map(&factor, |x, y| x * y))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::MulConst(a, factor), rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        Ok(self.push(out, Op::Relu(a), rg))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.rg(a);
        Ok(self.push(out, Op::LeakyRelu(a, slope), rg))
    }

    pub fn elu(&mut self, a: Var, alpha: f64) -> Result<Var> {
        let out = self
            .value(a)
            .map(|x| if x > 0.0 { x } else { alpha * x.exp_m1() });
        let rg = self.rg(a);
        Ok(self.push(out, Op::Elu(a, alpha), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Sigmoid(a), rg))
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = finite("log_sigmoid", self.value(a).map(log_sigmoid))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::LogSigmoid(a), rg))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = finite("exp", self.value(a).map(f64::exp))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Exp(a), rg))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if let Some(&bad) = va.data().iter().find(|&&x| x <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                msg: format!("non-positive input {bad}"),
            });
        }
        let out = va.map(f64::ln);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Log(a), rg))
    }

    /// `max(x, lo)` elementwise. The gradient passes where `x > lo`.
    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(lo));
        let rg = self.rg(a);
        Ok(self.push(finite("clamp_min", out)?, Op::ClampMin(a, lo), rg))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if !va.is_finite() {
            return Err(Error::NonFinite { op: "softmax_rows" });
        }
        let mut out = Matrix::zeros(va.rows(), va.cols());
        for i in 0..va.rows() {
            softmax_row(va.row(i), out.row_mut(i));
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::SoftmaxRows(a), rg))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if !va.is_finite() {
            return Err(Error::NonFinite { op: "log_softmax_rows" });
        }
        let mut out = Matrix::zeros(va.rows(), va.cols());
        for i in 0..va.rows() {
            let row = va.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            for (o, &x) in out.row_mut(i).iter_mut().zip(row) {
                *o = x - lse;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::LogSoftmaxRows(a), rg))
    }

    /// Horizontal concatenation `[a ‖ b ‖ ...]`.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| Error::InvalidArgument("concat_cols of nothing".into()))?;
        if let Some(&bad) = parts.iter().find(|&&p| self.value(p).rows() != rows) {
            return Err(Error::shape("concat_cols", rows, self.value(bad).rows()));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            let dst = out.row_mut(i);
            for &p in parts {
                let src = self.nodes[p.0].value.row(i);
                dst[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        Ok(self.push(finite("sum", Matrix::scalar(s))?, Op::Sum(a), rg))
    }

    /// Mean over every entry.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let rows: Vec<usize> = (0..self.value(a).rows()).collect();
        self.rows_mean(a, rows)
    }

    /// Mean over every entry of the rows selected by `mask`.
    pub fn masked_mean(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        if mask.len() != self.value(a).rows() {
            return Err(Error::shape("masked_mean", self.value(a).rows(), mask.len()));
        }
        let rows: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        self.rows_mean(a, rows)
    }

    fn rows_mean(&mut self, a: Var, rows: Vec<usize>) -> Result<Var> {
        let va = self.value(a);
        if rows.is_empty() || va.cols() == 0 {
            return Err(Error::InvalidArgument("mean over an empty selection".into()));
        }
        let total: f64 = rows.iter().flat_map(|&i| va.row(i)).sum();
        let out = Matrix::scalar(total / (rows.len() * va.cols()) as f64);
        let rg = self.rg(a);
        Ok(self.push(finite("mean", out)?, Op::RowsMean(a, rows), rg))
    }

    /// Mean of the entries at `picks` (`(row, col)` pairs).
    pub fn pick_mean(&mut self, a: Var, picks: Vec<(usize, usize)>) -> Result<Var> {
        let va = self.value(a);
        if picks.is_empty() {
            return Err(Error::InvalidArgument("pick_mean over an empty selection".into()));
        }
        if let Some(&(r, c)) = picks.iter().find(|&&(r, c)| r >= va.rows() || c >= va.cols()) {
            return Err(Error::shape(
                "pick_mean",
                format!("index inside {:?}", va.shape()),
                format!("({r}, {c})"),
            ));
        }
        let total: f64 = picks.iter().map(|&(r, c)| va.get(r, c)).sum();
        let out = Matrix::scalar(total / picks.len() as f64);
        let rg = self.rg(a);
        Ok(self.push(finite("pick_mean", out)?, Op::PickMean(a, picks), rg))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against 0/1 `targets`
    /// over the listed rows and all columns.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Arc<Matrix>, rows: Vec<usize>) -> Result<Var> {
        let z = self.value(logits);
        z.check_same_shape(&targets, "bce_with_logits")?;
        if rows.is_empty() || z.cols() == 0 {
            return Err(Error::InvalidArgument("bce over an empty selection".into()));
        }
        let mut total = 0.0;
        for &i in &rows {
            for (&x, &y) in z.row(i).iter().zip(targets.row(i)) {
                total += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
            }
        }
        let out = Matrix::scalar(total / (rows.len() * z.cols()) as f64);
        let rg = self.rg(logits);
        Ok(self.push(finite("bce_with_logits", out)?, Op::BceWithLogits(logits, targets, rows), rg))
    }

    /// Inverted dropout. In training mode each entry is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`; the mask is a
    /// pure function of `stream`.
    pub fn dropout(&mut self, a: Var, p: f64, training: bool, stream: CounterStream) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout probability {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let scale = 1.0 / (1.0 - p);
        let rg = self.rg(a);
        let va = self.value(a);
        let mut out = va.clone();
        if rg {
            let keep: Vec<bool> = (0..va.len()).map(|k| stream.uniform(k as u64) >= p).collect();
            for (o, &k) in out.data_mut().iter_mut().zip(&keep) {
                *o = if k { *o * scale } else { 0.0 };
            }
            Ok(self.push(out, Op::Dropout(a, keep, scale), true))
        } else {
            // Zero entries stay zero whatever the mask says, so only the
            // non-zero positions need a draw.
            for (k, o) in out.data_mut().iter_mut().enumerate() {
                if *o != 0.0 {
                    *o = if stream.uniform(k as u64) >= p { *o * scale } else { 0.0 };
                }
            }
            Ok(self.push(out, Op::Dropout(a, Vec::new(), scale), false))
        }
    }

    /// Per-edge attention logits `src[i] + dst[j]` for every stored entry
    /// `(i, j)` of `adj`, as an `nnz x 1` column.
    pub fn edge_scores(&mut self, adj: &Arc<SparseAdjacency>, src: Var, dst: Var) -> Result<Var> {
        let n = adj.num_nodes();
        let (vs, vd) = (self.value(src), self.value(dst));
        if vs.shape() != (n, 1) || vd.shape() != (n, 1) {
            return Err(Error::shape(
                "edge_scores",
                format!("{n}x1"),
                format!("{:?} and {:?}", vs.shape(), vd.shape()),
            ));
        }
        let mut out = Vec::with_capacity(adj.nnz());
        for i in 0..n {
            for (j, _) in adj.row(i) {
                out.push(vs.data()[i] + vd.data()[j]);
            }
        }
        let out = Matrix::new(adj.nnz(), 1, out)?;
        let rg = self.rg(src) || self.rg(dst);
        Ok(self.push(finite("edge_scores", out)?, Op::EdgeScores(Arc::clone(adj), src, dst), rg))
    }

    /// Softmax of edge values within each row of `adj`.
    pub fn edge_softmax(&mut self, adj: &Arc<SparseAdjacency>, scores: Var) -> Result<Var> {
        let vs = self.value(scores);
        if vs.shape() != (adj.nnz(), 1) {
            return Err(Error::shape("edge_softmax", format!("{}x1", adj.nnz()), format!("{:?}", vs.shape())));
        }
        let mut out = Matrix::zeros(adj.nnz(), 1);
        for i in 0..adj.num_nodes() {
            let r = adj.row_range(i);
            if r.is_empty() {
                return Err(Error::Domain {
                    op: "edge_softmax",
                    msg: format!("node {i} has an empty neighbourhood"),
                });
            }
            softmax_row(&vs.data()[r.clone()], &mut out.data_mut()[r]);
        }
        let rg = self.rg(scores);
        Ok(self.push(finite("edge_softmax", out)?, Op::EdgeSoftmax(Arc::clone(adj), scores), rg))
    }

    /// `out[i] = Σ_j w_ij · h[j]` with per-edge weights `w` (an `nnz x 1`
    /// column aligned with the entries of `adj`).
    pub fn edge_aggregate(&mut self, adj: &Arc<SparseAdjacency>, weights: Var, h: Var) -> Result<Var> {
        let (vw, vh) = (self.value(weights), self.value(h));
        if vw.shape() != (adj.nnz(), 1) || vh.rows() != adj.num_nodes() {
            return Err(Error::shape(
                "edge_aggregate",
                format!("{}x1 weights, {} rows", adj.nnz(), adj.num_nodes()),
                format!("{:?}, {:?}", vw.shape(), vh.shape()),
            ));
        }
        let f = vh.cols();
        let mut out = Matrix::zeros(adj.num_nodes(), f);
        for i in 0..adj.num_nodes() {
            let dst = out.row_mut(i);
            for p in adj.row_range(i) {
                let w = vw.data()[p];
                for (o, &x) in dst.iter_mut().zip(vh.row(adj.col_idx()[p])) {
                    *o += w * x;
                }
            }
        }
        let rg = self.rg(weights) || self.rg(h);
        Ok(self.push(finite("edge_aggregate", out)?, Op::EdgeAggregate(Arc::clone(adj), weights, h), rg))
    }

    /// Accumulates `d loss / d tensor` into every trainable tensor reachable
    /// from `loss`. Repeated calls add up.
    pub fn backward(&self, loss: Var) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                "1x1 loss",
                format!("{:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.backward_node(node, g, &mut grads)?;
        }
        Ok(())
    }

    fn backward_node(&self, node: &Node, g: Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let mut acc = |v: Var, d: Matrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&d),
                slot @ None => *slot = Some(d),
            }
        };
        let val = |v: Var| -> &Matrix { &self.nodes[v.0].value };

        match &node.op {
            Op::Leaf(param) => {
                if let Some(t) = param {
                    t.accumulate_grad(&g);
                }
            }
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.matmul_nt(val(*b))?);
                }
                if self.rg(*b) {
                    acc(*b, val(*a).matmul_tn(&g)?);
                }
            }
            Op::Spmm(adj, d) => acc(*d, adj.spmm_transpose(&g)?),
            Op::Add(a, b) => {
                if self.rg(*b) {
                    acc(*b, g.clone());
                }
                acc(*a, g);
            }
            Op::Sub(a, b) => {
                if self.rg(*b) {
                    acc(*b, g.map(|x| -x));
                }
                acc(*a, g);
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.zip_map(val(*b), |x, y| x * y));
                }
                if self.rg(*b) {
                    acc(*b, g.zip_map(val(*a), |x, y| x * y));
                }
            }
            Op::AddRow(a, row) => {
                if self.rg(*row) {
                    let mut d = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, &x) in d.data_mut().iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    acc(*row, d);
                }
                acc(*a, g);
            }
            Op::Scale(a, c) => acc(*a, g.map(|x| x * c)),
            Op::AddScalar(a) => acc(*a, g),
            Op::MulConst(a, factor) => acc(*a, g.zip_map(factor, |x, y| x * y)),
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), |d, x| if x > 0.0 { d } else { 0.0 })),
            Op::LeakyRelu(a, slope) => {
                acc(*a, g.zip_map(val(*a), |d, x| if x > 0.0 { d } else { slope * d }))
            }
            Op::Elu(a, alpha) => {
                acc(*a, g.zip_map(val(*a), |d, x| if x > 0.0 { d } else { d * alpha * x.exp() }))
            }
            Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |d, s| d * s * (1.0 - s))),
            Op::LogSigmoid(a) => acc(*a, g.zip_map(val(*a), |d, x| d * sigmoid(-x))),
            Op::Exp(a) => acc(*a, g.zip_map(&node.value, |d, e| d * e)),
            Op::Log(a) => acc(*a, g.zip_map(val(*a), |d, x| d / x)),
            Op::ClampMin(a, lo) => acc(*a, g.zip_map(val(*a), |d, x| if x > *lo { d } else { 0.0 })),
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(a, b)| a * b).sum();
                    for ((o, &gi), &yi) in d.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                        *o = yi * (gi - dot);
                    }
                }
                acc(*a, d);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let gsum: f64 = g.row(i).iter().sum();
                    for ((o, &gi), &yi) in d.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                        *o = gi - yi.exp() * gsum;
                    }
                }
                acc(*a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if self.rg(p) {
                        let d = Matrix::from_fn(g.rows(), w, |i, j| g.get(i, off + j));
                        acc(p, d);
                    }
                    off += w;
                }
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                acc(*a, Matrix::filled(r, c, g.data()[0]));
            }
            Op::RowsMean(a, rows) => {
                let (r, c) = val(*a).shape();
                let share = g.data()[0] / (rows.len() * c) as f64;
                let mut d = Matrix::zeros(r, c);
                for &i in rows {
                    d.row_mut(i).iter_mut().for_each(|x| *x += share);
                }
                acc(*a, d);
            }
            Op::PickMean(a, picks) => {
                let (r, c) = val(*a).shape();
                let share = g.data()[0] / picks.len() as f64;
                let mut d = Matrix::zeros(r, c);
                for &(i, j) in picks {
                    d.set(i, j, d.get(i, j) + share);
                }
                acc(*a, d);
            }
            Op::BceWithLogits(z, targets, rows) => {
                let vz = val(*z);
                let share = g.data()[0] / (rows.len() * vz.cols()) as f64;
                let mut d = Matrix::zeros(vz.rows(), vz.cols());
                for &i in rows {
                    for ((o, &x), &y) in d.row_mut(i).iter_mut().zip(vz.row(i)).zip(targets.row(i)) {
                        *o += share * (sigmoid(x) - y);
                    }
                }
                acc(*z, d);
            }
            Op::Dropout(a, keep, scale) => {
                let mut d = g;
                for (o, &k) in d.data_mut().iter_mut().zip(keep) {
                    *o = if k { *o * scale } else { 0.0 };
                }
                acc(*a, d);
            }
            Op::EdgeScores(adj, src, dst) => {
                let n = adj.num_nodes();
                let mut ds = Matrix::zeros(n, 1);
                let mut dd = Matrix::zeros(n, 1);
                for i in 0..n {
                    for p in adj.row_range(i) {
                        let j = adj.col_idx()[p];
                        ds.data_mut()[i] += g.data()[p];
                        dd.data_mut()[j] += g.data()[p];
                    }
                }
                acc(*src, ds);
                acc(*dst, dd);
            }
            Op::EdgeSoftmax(adj, scores) => {
                let y = &node.value;
                let mut d = Matrix::zeros(adj.nnz(), 1);
                for i in 0..adj.num_nodes() {
                    let r = adj.row_range(i);
                    let dot: f64 = r.clone().map(|p| g.data()[p] * y.data()[p]).sum();
                    for p in r {
                        d.data_mut()[p] = y.data()[p] * (g.data()[p] - dot);
                    }
                }
                acc(*scores, d);
            }
            Op::EdgeAggregate(adj, weights, h) => {
                let (vw, vh) = (val(*weights), val(*h));
                if self.rg(*weights) {
                    let mut dw = Matrix::zeros(adj.nnz(), 1);
                    for i in 0..adj.num_nodes() {
                        for p in adj.row_range(i) {
                            let j = adj.col_idx()[p];
                            dw.data_mut()[p] = g.row(i).iter().zip(vh.row(j)).map(|(a, b)| a * b).sum();
                        }
                    }
                    acc(*weights, dw);
                }
                if self.rg(*h) {
                    let mut dh = Matrix::zeros(vh.rows(), vh.cols());
                    for i in 0..adj.num_nodes() {
                        for p in adj.row_range(i) {
                            let j = adj.col_idx()[p];
                            let w = vw.data()[p];
                            for (o, &x) in dh.row_mut(j).iter_mut().zip(g.row(i)) {
                                *o += w * x;
                            }
                        }
                    }
                    acc(*h, dh);
                }
            }
        }
        Ok(())
    }
}
