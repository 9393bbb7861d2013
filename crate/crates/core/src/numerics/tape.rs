use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{gemm, View, ViewMut};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::geometry::{giou_and_grad, BoxCoords};
use crate::math;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow { x: Var, row: Var },
    Gelu(Var),
    Sigmoid(Var),
    Abs(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Softmax { x: Var, outer: usize, len: usize, inner: usize },
    Attention { qkv: Var, heads: usize, probs: Vec<f64> },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows { x: Var, index: Vec<usize> },
    Reshape(Var),
    Mean { x: Var, outer: usize, len: usize, inner: usize },
    Sum(Var),
    CrossEntropy { logits: Var, classes: Vec<usize>, probs: Vec<f64> },
    BceWithLogits { logits: Var, targets: Vec<f64>, weights: Vec<f64> },
    GiouLoss { boxes: Var, weights: Vec<f64>, grads: Vec<[f64; 4]> },
    WeightedL1 { x: Var, target: Vec<f64>, row_weights: Vec<f64> },
    L1Distance { a: Var, b: Var },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Linear record of executed operations for reverse accumulation.
///
/// Nodes are appended in execution order, so the node order is already a
/// topological order and [`Tape::backward`] simply walks it in reverse.
/// In checked mode every op output is scanned for NaN/Inf.
pub struct Tape {
    nodes: Vec<Node>,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one scalar output with respect to every recorded node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    visited: usize,
}

impl Gradients {
    /// Gradient of the output w.r.t. `var`, or `None` when `var` does not
    /// influence the output through differentiable nodes.
    pub fn get(&self, var: Var) -> Option<Tensor> {
        self.grads[var.0]
            .as_ref()
            .map(|g| Tensor::from_parts(self.shapes[var.0].clone(), g.clone()))
    }

    /// Like [`get`](Self::get) but returns zeros for unreached nodes.
    pub fn get_or_zero(&self, var: Var) -> Tensor {
        self.get(var).unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }

    /// Number of nodes whose backward rule ran.
    pub fn visited(&self) -> usize {
        self.visited
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape { op, lhs: a.shape().to_vec(), rhs: b.shape().to_vec() }
}

fn gelu_fwd(x: f64) -> f64 {
    0.5 * x * (1.0 + math::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + math::erf(x * core::f64::consts::FRAC_1_SQRT_2));
    let pdf = math::exp(-0.5 * x * x) / math::sqrt(2.0 * core::f64::consts::PI);
    cdf + x * pdf
}

fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::Index { index: axis, extent: shape.len() });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), checked: false }
    }

    /// Tape that rejects non-finite op outputs.
    pub fn checked() -> Self {
        Self { nodes: Vec::new(), checked: true }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Constant input; gradients never flow into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    /// Copy of `x` that blocks gradient flow.
    pub fn detach(&mut self, x: Var) -> Var {
        let v = self.value(x).clone();
        self.constant(v)
    }

    fn push_raw(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if self.checked && !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        Ok(self.push_raw(value, op, needs_grad))
    }

    fn scalar_out(&mut self, name: &'static str, v: f64, op: Op, inputs: &[Var]) -> Result<Var> {
        self.push(name, Tensor::scalar(v), op, inputs)
    }

    // ---- linear algebra -------------------------------------------------

    /// `a [m x k] * b [k x p]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a [m x k] * b^T` where `b` is `[p x k]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let vb = View::dense(tb.data(), tb.shape()[0], tb.shape()[1]);
        let vb = if trans_b { vb.t() } else { vb };
        if vb.rows != k {
            return Err(shape_err("matmul", ta, tb));
        }
        let p = vb.cols;
        let mut out = vec![0.0; m * p];
        gemm(1.0, View::dense(ta.data(), m, k), vb, 0.0, ViewMut::dense(&mut out, m, p));
        self.push("matmul", Tensor::from_parts(vec![m, p], out), Op::MatMul { a, b, trans_b }, &[a, b])
    }

    /// `x W + b` with `x [m x k]`, `W [k x p]`, `b [p]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    // ---- elementwise ----------------------------------------------------

    fn zip_op(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push(name, out, op, &[a, b])
    }

    fn map_op(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let t = self.value(x);
        let out = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|v| f(*v)).collect());
        self.push(name, out, op, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.map_op("scale", x, |v| v * factor, Op::Scale(x, factor))
    }

    /// Adds a length-`cols` row vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(row));
        let c = tx.cols();
        if tr.len() != c {
            return Err(shape_err("add_row", tx, tr));
        }
        let r = tr.data();
        let data = tx.data().chunks(c).flat_map(|xs| xs.iter().zip(r).map(|(a, b)| a + b)).collect();
        let out = Tensor::from_parts(tx.shape().to_vec(), data);
        self.push("add_row", out, Op::AddRow { x, row }, &[x, row])
    }

    /// Exact (erf) GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.map_op("gelu", x, gelu_fwd, Op::Gelu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map_op("sigmoid", x, math::sigmoid, Op::Sigmoid(x))
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.map_op("abs", x, math::abs, Op::Abs(x))
    }

    // ---- normalisation ----------------------------------------------------

    /// Layer normalisation over the last axis followed by `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let tx = self.value(x);
        let c = tx.cols();
        for p in [gain, bias] {
            if self.value(p).len() != c {
                return Err(shape_err("layer_norm", tx, self.value(p)));
            }
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let rows = tx.rows();
        let mut xhat = vec![0.0; tx.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; tx.len()];
        for r in 0..rows {
            let xs = tx.row(r);
            let mean = xs.iter().sum::<f64>() / c as f64;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / math::sqrt(var + eps);
            rstd[r] = inv;
            for j in 0..c {
                let h = (xs[j] - mean) * inv;
                xhat[r * c + j] = h;
                out[r * c + j] = h * g[j] + b[j];
            }
        }
        let out = Tensor::from_parts(tx.shape().to_vec(), out);
        self.push("layer_norm", out, Op::LayerNorm { x, gain, bias, xhat, rstd }, &[x, gain, bias])
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let tx = self.value(x);
        let (outer, len, inner) = axis_split(tx.shape(), axis)?;
        let src = tx.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * len * inner + k * inner + i;
                let max = (0..len).map(|k| src[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..len {
                    let e = math::exp(src[at(k)] - max);
                    out[at(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    out[at(k)] /= total;
                }
            }
        }
        let out = Tensor::from_parts(tx.shape().to_vec(), out);
        self.push("softmax", out, Op::Softmax { x, outer, len, inner }, &[x])
    }

    // ---- attention --------------------------------------------------------

    /// Multi-head scaled dot-product self-attention.
    ///
    /// `qkv` is `[L x 3d]` laid out as `[Q | K | V]`, each split into
    /// `heads` contiguous column blocks. Returns `[L x d]` with the head
    /// outputs concatenated in head order. No masking.
    pub fn attention(&mut self, qkv: Var, heads: usize) -> Result<Var> {
        let t = self.value(qkv);
        if t.shape().len() != 2 || t.cols() % 3 != 0 || heads == 0 || (t.cols() / 3) % heads != 0 {
            return Err(Error::InvalidShape {
                shape: t.shape().to_vec(),
                reason: "attention expects [L, 3d] with d divisible by heads",
            });
        }
        let (l, w) = (t.shape()[0], t.cols());
        let d = w / 3;
        let dh = d / heads;
        let scale = 1.0 / math::sqrt(dh as f64);
        let src = t.data();
        let mut probs = vec![0.0; heads * l * l];
        let mut out = vec![0.0; l * d];
        for h in 0..heads {
            let q = View::columns(src, l, w, h * dh, dh);
            let k = View::columns(src, l, w, d + h * dh, dh);
            let v = View::columns(src, l, w, 2 * d + h * dh, dh);
            let p = &mut probs[h * l * l..(h + 1) * l * l];
            gemm(scale, q, k.t(), 0.0, ViewMut::dense(p, l, l));
            for row in p.chunks_mut(l) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for s in row.iter_mut() {
                    *s = math::exp(*s - max);
                    total += *s;
                }
                for s in row.iter_mut() {
                    *s /= total;
                }
            }
            gemm(1.0, View::dense(p, l, l), v, 0.0, ViewMut::columns(&mut out, l, d, h * dh, dh));
        }
        let out = Tensor::from_parts(vec![l, d], out);
        self.push("attention", out, Op::Attention { qkv, heads, probs }, &[qkv])
    }

    /// Attention probabilities recorded by an [`attention`](Self::attention)
    /// node, `[heads x L x L]` flattened.
    pub fn attention_probs(&self, var: Var) -> Option<&[f64]> {
        match &self.nodes[var.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    // ---- structural -------------------------------------------------------

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(*parts.first().ok_or(Error::InvalidShape {
            shape: vec![],
            reason: "concat of nothing",
        })?);
        let c = first.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            if t.cols() != c {
                return Err(shape_err("concat_rows", first, t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::from_parts(vec![rows, c], data);
        self.push("concat_rows", out, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Concatenates matrices with equal row counts horizontally.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(*parts.first().ok_or(Error::InvalidShape {
            shape: vec![],
            reason: "concat of nothing",
        })?);
        let r = first.rows();
        let mut cols = 0;
        for p in parts {
            let t = self.value(*p);
            if t.rows() != r {
                return Err(shape_err("concat_cols", first, t));
            }
            cols += t.cols();
        }
        let mut data = Vec::with_capacity(r * cols);
        for row in 0..r {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(row));
            }
        }
        let out = Tensor::from_parts(vec![r, cols], data);
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Rows of `x` (as a matrix) at `index`, in that order; repeats allowed.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let (rows, c) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index {
            if i >= rows {
                return Err(Error::Index { index: i, extent: rows });
            }
            data.extend_from_slice(t.row(i));
        }
        if index.is_empty() {
            return Err(Error::InvalidShape { shape: vec![0, c], reason: "empty gather" });
        }
        let out = Tensor::from_parts(vec![index.len(), c], data);
        self.push("gather_rows", out, Op::GatherRows { x, index: index.to_vec() }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape)?;
        self.push("reshape", out, Op::Reshape(x), &[x])
    }

    // ---- reductions ---------------------------------------------------------

    /// Mean along `axis`, keeping that axis with extent 1.
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        let (outer, len, inner) = axis_split(t.shape(), axis)?;
        let src = t.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..len {
                let base = o * len * inner + k * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        for v in &mut out {
            *v /= len as f64;
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = 1;
        let out = Tensor::from_parts(shape, out);
        self.push("mean", out, Op::Mean { x, outer, len, inner }, &[x])
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.scalar_out("sum", s, Op::Sum(x), &[x])
    }

    // ---- losses -------------------------------------------------------------

    /// Sum over rows of `-log softmax(logits[r])[classes[r]]`, via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, classes: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (rows, k) = (t.rows(), t.cols());
        if classes.len() != rows {
            return Err(Error::Shape { op: "cross_entropy", lhs: t.shape().to_vec(), rhs: vec![classes.len()] });
        }
        let mut probs = vec![0.0; rows * k];
        let mut loss = 0.0;
        for (r, &class) in classes.iter().enumerate() {
            if class >= k {
                return Err(Error::Index { index: class, extent: k });
            }
            let z = t.row(r);
            let (arg, max) = z.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |best, (j, v)| {
                if v > best.1 {
                    (j, v)
                } else {
                    best
                }
            });
            // log-sum-exp minus the max term, via ln_1p for small tails
            let tail: f64 = z.iter().enumerate().filter(|(j, _)| *j != arg).map(|(_, v)| math::exp(v - max)).sum();
            let log_total = math::ln_1p(tail);
            let lse = max + log_total;
            loss += (max - z[class]) + log_total;
            for j in 0..k {
                probs[r * k + j] = math::exp(z[j] - lse);
            }
        }
        let op = Op::CrossEntropy { logits, classes: classes.to_vec(), probs };
        self.scalar_out("cross_entropy", loss, op, &[logits])
    }

    /// `sum_i w_i * BCE(sigmoid(z_i), t_i)` in the stable softplus form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], weights: &[f64]) -> Result<Var> {
        let t = self.value(logits);
        if targets.len() != t.len() || weights.len() != t.len() {
            return Err(Error::Shape { op: "bce_with_logits", lhs: t.shape().to_vec(), rhs: vec![targets.len()] });
        }
        let loss = t
            .data()
            .iter()
            .zip(targets)
            .zip(weights)
            .map(|((z, y), w)| w * (math::softplus(*z) - y * z))
            .sum();
        let op = Op::BceWithLogits { logits, targets: targets.to_vec(), weights: weights.to_vec() };
        self.scalar_out("bce_with_logits", loss, op, &[logits])
    }

    /// `sum_i w_i * (1 - GIoU(boxes[i], targets[i]))` for `boxes [m x 4]` in
    /// `(cx, cy, w, h)` form. Zero-weight rows are skipped entirely.
    pub fn giou_loss(&mut self, boxes: Var, targets: &[BoxCoords], weights: &[f64]) -> Result<Var> {
        let t = self.value(boxes);
        if t.cols() != 4 || t.rows() != targets.len() || weights.len() != targets.len() {
            return Err(Error::Shape { op: "giou_loss", lhs: t.shape().to_vec(), rhs: vec![targets.len(), 4] });
        }
        let mut grads = vec![[0.0; 4]; targets.len()];
        let mut loss = 0.0;
        for (i, (target, &w)) in targets.iter().zip(weights).enumerate() {
            if w == 0.0 {
                continue;
            }
            let r = t.row(i);
            let (g, dg) = giou_and_grad([r[0], r[1], r[2], r[3]], *target);
            loss += w * (1.0 - g);
            grads[i] = dg.map(|v| -w * v);
        }
        self.scalar_out("giou_loss", loss, Op::GiouLoss { boxes, weights: weights.to_vec(), grads }, &[boxes])
    }

    /// `sum_r row_weights[r] * sum_c |x[r, c] - target[r, c]|`.
    pub fn weighted_l1(&mut self, x: Var, target: &[f64], row_weights: &[f64]) -> Result<Var> {
        let t = self.value(x);
        if target.len() != t.len() || row_weights.len() != t.rows() {
            return Err(Error::Shape { op: "weighted_l1", lhs: t.shape().to_vec(), rhs: vec![target.len()] });
        }
        let c = t.cols();
        let mut loss = 0.0;
        for (r, &w) in row_weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let s: f64 = (0..c).map(|j| math::abs(t.data()[r * c + j] - target[r * c + j])).sum();
            loss += w * s;
        }
        let op = Op::WeightedL1 { x, target: target.to_vec(), row_weights: row_weights.to_vec() };
        self.scalar_out("weighted_l1", loss, op, &[x])
    }

    /// Mean elementwise absolute difference.
    pub fn l1_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("l1_distance", ta, tb));
        }
        let s: f64 = ta.data().iter().zip(tb.data()).map(|(x, y)| math::abs(x - y)).sum();
        let v = s / ta.len() as f64;
        self.scalar_out("l1_distance", v, Op::L1Distance { a, b }, &[a, b])
    }

    // ---- reverse pass -------------------------------------------------------

    /// Reverse accumulation from a one-element output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::InvalidShape { shape: out.shape().to_vec(), reason: "backward needs a scalar output" });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[output.0] = Some(vec![1.0]);
        let mut visited = 0;
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.needs_grad {
                visited += 1;
                self.backprop(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes, visited })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn backprop(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let (br, bc) = (tb.shape()[0], tb.shape()[1]);
                let p = if *trans_b { br } else { bc };
                let gv = View::dense(g, m, p);
                let vb = View::dense(tb.data(), br, bc);
                if let Some(da) = self.acc(grads, *a) {
                    // dA = G * B^T  (or G * B when b was transposed)
                    let rhs = if *trans_b { vb } else { vb.t() };
                    gemm(1.0, gv, rhs, 1.0, ViewMut::dense(da, m, k));
                }
                if let Some(db) = self.acc(grads, *b) {
                    let va = View::dense(ta.data(), m, k);
                    if *trans_b {
                        gemm(1.0, gv.t(), va, 1.0, ViewMut::dense(db, br, bc));
                    } else {
                        gemm(1.0, va.t(), gv, 1.0, ViewMut::dense(db, br, bc));
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = self.acc(grads, v) {
                        d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = self.acc(grads, *a) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
                if let Some(d) = self.acc(grads, *b) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d -= g);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(d) = self.acc(grads, *a) {
                    for i in 0..d.len() {
                        d[i] += g[i] * vb[i];
                    }
                }
                if let Some(d) = self.acc(grads, *b) {
                    for i in 0..d.len() {
                        d[i] += g[i] * va[i];
                    }
                }
            }
            Op::Scale(x, f) => {
                if let Some(d) = self.acc(grads, *x) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g * f);
                }
            }
            Op::AddRow { x, row } => {
                if let Some(d) = self.acc(grads, *x) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
                if let Some(d) = self.acc(grads, *row) {
                    let c = d.len();
                    for chunk in g.chunks(c) {
                        d.iter_mut().zip(chunk).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Gelu(x) => {
                let xs = self.value(*x).data();
                if let Some(d) = self.acc(grads, *x) {
                    for i in 0..d.len() {
                        d[i] += g[i] * gelu_grad(xs[i]);
                    }
                }
            }
            Op::Sigmoid(x) => {
                let ys = node.value.data();
                if let Some(d) = self.acc(grads, *x) {
                    for i in 0..d.len() {
                        d[i] += g[i] * ys[i] * (1.0 - ys[i]);
                    }
                }
            }
            Op::Abs(x) => {
                let xs = self.value(*x).data();
                if let Some(d) = self.acc(grads, *x) {
                    for i in 0..d.len() {
                        d[i] += g[i] * sign(xs[i]);
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let c = node.value.cols();
                let gn = self.value(*gain).data();
                if let Some(d) = self.acc(grads, *gain) {
                    for (gr, hr) in g.chunks(c).zip(xhat.chunks(c)) {
                        for j in 0..c {
                            d[j] += gr[j] * hr[j];
                        }
                    }
                }
                if let Some(d) = self.acc(grads, *bias) {
                    for gr in g.chunks(c) {
                        d.iter_mut().zip(gr).for_each(|(d, g)| *d += g);
                    }
                }
                if let Some(d) = self.acc(grads, *x) {
                    for (r, (gr, hr)) in g.chunks(c).zip(xhat.chunks(c)).enumerate() {
                        let mut mean_dh = 0.0;
                        let mut mean_dhh = 0.0;
                        for j in 0..c {
                            let dh = gr[j] * gn[j];
                            mean_dh += dh;
                            mean_dhh += dh * hr[j];
                        }
                        mean_dh /= c as f64;
                        mean_dhh /= c as f64;
                        for j in 0..c {
                            let dh = gr[j] * gn[j];
                            d[r * c + j] += rstd[r] * (dh - mean_dh - hr[j] * mean_dhh);
                        }
                    }
                }
            }
            Op::Softmax { x, outer, len, inner } => {
                let ys = node.value.data();
                if let Some(d) = self.acc(grads, *x) {
                    for o in 0..*outer {
                        for i in 0..*inner {
                            let at = |k: usize| o * len * inner + k * inner + i;
                            let dot: f64 = (0..*len).map(|k| g[at(k)] * ys[at(k)]).sum();
                            for k in 0..*len {
                                d[at(k)] += ys[at(k)] * (g[at(k)] - dot);
                            }
                        }
                    }
                }
            }
            Op::Attention { qkv, heads, probs } => {
                let t = self.value(*qkv);
                let (l, w) = (t.shape()[0], t.cols());
                let d = w / 3;
                let dh = d / heads;
                let scale = 1.0 / math::sqrt(dh as f64);
                let src = t.data();
                let Some(dqkv) = self.acc(grads, *qkv) else { return };
                let mut dp = vec![0.0; l * l];
                for h in 0..*heads {
                    let p = &probs[h * l * l..(h + 1) * l * l];
                    let go = View::columns(g, l, d, h * dh, dh);
                    let q = View::columns(src, l, w, h * dh, dh);
                    let k = View::columns(src, l, w, d + h * dh, dh);
                    let v = View::columns(src, l, w, 2 * d + h * dh, dh);
                    // dV = P^T dO
                    gemm(1.0, View::dense(p, l, l).t(), go, 1.0, ViewMut::columns(dqkv, l, w, 2 * d + h * dh, dh));
                    // dP = dO V^T, then dS = P * (dP - rowsum(dP * P))
                    gemm(1.0, go, v.t(), 0.0, ViewMut::dense(&mut dp, l, l));
                    for (drow, prow) in dp.chunks_mut(l).zip(p.chunks(l)) {
                        let dot: f64 = drow.iter().zip(prow).map(|(a, b)| a * b).sum();
                        for (dv, pv) in drow.iter_mut().zip(prow) {
                            *dv = pv * (*dv - dot);
                        }
                    }
                    let ds = View::dense(&dp, l, l);
                    gemm(scale, ds, k, 1.0, ViewMut::columns(dqkv, l, w, h * dh, dh));
                    gemm(scale, ds.t(), q, 1.0, ViewMut::columns(dqkv, l, w, d + h * dh, dh));
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if let Some(d) = self.acc(grads, *p) {
                        d.iter_mut().zip(&g[offset..offset + len]).for_each(|(d, g)| *d += g);
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let c = self.value(*p).cols();
                    if let Some(d) = self.acc(grads, *p) {
                        for (r, drow) in d.chunks_mut(c).enumerate() {
                            let grow = &g[r * total + offset..r * total + offset + c];
                            drow.iter_mut().zip(grow).for_each(|(d, g)| *d += g);
                        }
                    }
                    offset += c;
                }
            }
            Op::GatherRows { x, index } => {
                let c = node.value.cols();
                if let Some(d) = self.acc(grads, *x) {
                    for (k, &i) in index.iter().enumerate() {
                        let src = &g[k * c..(k + 1) * c];
                        d[i * c..(i + 1) * c].iter_mut().zip(src).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(d) = self.acc(grads, *x) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
            }
            Op::Mean { x, outer, len, inner } => {
                if let Some(d) = self.acc(grads, *x) {
                    let f = 1.0 / *len as f64;
                    for o in 0..*outer {
                        for k in 0..*len {
                            for i in 0..*inner {
                                d[o * len * inner + k * inner + i] += g[o * inner + i] * f;
                            }
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(d) = self.acc(grads, *x) {
                    d.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::CrossEntropy { logits, classes, probs } => {
                let k = self.value(*logits).cols();
                if let Some(d) = self.acc(grads, *logits) {
                    for (r, &class) in classes.iter().enumerate() {
                        for j in 0..k {
                            let onehot = if j == class { 1.0 } else { 0.0 };
                            d[r * k + j] += g[0] * (probs[r * k + j] - onehot);
                        }
                    }
                }
            }
            Op::BceWithLogits { logits, targets, weights } => {
                let zs = self.value(*logits).data();
                if let Some(d) = self.acc(grads, *logits) {
                    for i in 0..d.len() {
                        d[i] += g[0] * weights[i] * (math::sigmoid(zs[i]) - targets[i]);
                    }
                }
            }
            Op::GiouLoss { boxes, weights, grads: box_grads } => {
                if let Some(d) = self.acc(grads, *boxes) {
                    for (i, bg) in box_grads.iter().enumerate() {
                        if weights[i] == 0.0 {
                            continue;
                        }
                        for j in 0..4 {
                            d[i * 4 + j] += g[0] * bg[j];
                        }
                    }
                }
            }
            Op::WeightedL1 { x, target, row_weights } => {
                let xs = self.value(*x).data();
                let c = self.value(*x).cols();
                if let Some(d) = self.acc(grads, *x) {
                    for (r, &w) in row_weights.iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        for j in 0..c {
                            let i = r * c + j;
                            d[i] += g[0] * w * sign(xs[i] - target[i]);
                        }
                    }
                }
            }
            Op::L1Distance { a, b } => {
                let (xa, xb) = (self.value(*a).data(), self.value(*b).data());
                let f = g[0] / xa.len() as f64;
                if let Some(d) = self.acc(grads, *a) {
                    for i in 0..d.len() {
                        d[i] += f * sign(xa[i] - xb[i]);
                    }
                }
                if let Some(d) = self.acc(grads, *b) {
                    for i in 0..d.len() {
                        d[i] -= f * sign(xa[i] - xb[i]);
                    }
                }
            }
        }
    }
}
