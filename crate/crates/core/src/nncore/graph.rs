//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] records every primitive applied during one forward pass.
//! Leaves are either trainable parameters or constants; gradients are only
//! propagated along paths that start at a trainable leaf, so constants
//! (frozen embedding offsets, teacher targets) never receive updates.

use super::tensor::{Real, Tensor};
use super::NnError;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Batch layout for fused multi-head attention over `[batch*seq × hidden]`
/// activations.
#[derive(Clone, Debug)]
pub struct AttentionLayout {
    pub batch: usize,
    pub seq: usize,
    pub heads: usize,
    /// `true` marks a real (non-padding) position, row-major `[batch × seq]`.
    pub mask: Vec<bool>,
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    MatMul(Var, Var),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    Attention { q: Var, k: Var, v: Var, layout: AttentionLayout, probs: Vec<T> },
    GatherRows { table: Var, rows: Vec<usize> },
    ConcatRows(Var, Var),
    Scale(Var, T),
    Sum(Var),
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<T> },
    SoftCrossEntropy { logits: Var, targets: Vec<T>, probs: Vec<T>, inv_temp: T },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    trainable_leaf: bool,
}

/// Layer-norm variance floor, added inside the square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> NnError {
    NnError::Shape { op, left: left.to_vec(), right: right.to_vec() }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<T>, op: Op<T>, rg: bool) -> Result<Var, NnError> {
        if !value.all_finite() {
            return Err(NnError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op, requires_grad: rg, trainable_leaf: false });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Result<Var, NnError> {
        let v = self.push("param", t, Op::Leaf, true)?;
        self.nodes[v.0].trainable_leaf = true;
        Ok(v)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Result<Var, NnError> {
        self.push("constant", t, Op::Leaf, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("add", out, Op::Add(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("mul", out, Op::Mul(a, b), rg)
    }

    /// Adds a `[d]` bias to every row of an `[n × d]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, NnError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let (rows, cols) = tx.as_matrix();
        if tb.numel() != cols || tx.shape().len() != 2 {
            return Err(shape_err("add_bias", tx.shape(), tb.shape()));
        }
        let mut data = tx.data().to_vec();
        for r in 0..rows {
            for (o, &b) in data[r * cols..(r + 1) * cols].iter_mut().zip(tb.data()) {
                *o = *o + b;
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(bias);
        self.push("add_bias", out, Op::AddBias(x, bias), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let out = super::tensor::matmul_values(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", out, Op::MatMul(a, b), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Result<Var, NnError> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| gelu(v)).collect();
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x);
        self.push("gelu", out, Op::Gelu(x), rg)
    }

    /// Normalizes each row to zero mean and unit variance, then applies
    /// `gamma * xhat + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, NnError> {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let (rows, cols) = tx.as_matrix();
        if tg.numel() != cols || tb.numel() != cols {
            return Err(shape_err("layer_norm", tx.shape(), tg.shape()));
        }
        let n = T::of_f64(cols as f64);
        let eps = T::of_f64(LAYER_NORM_EPS);
        let mut xhat = Vec::with_capacity(tx.numel());
        let mut inv_std = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(tx.numel());
        for r in 0..rows {
            let row = tx.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for (c, &v) in row.iter().enumerate() {
                let h = (v - mean) * inv;
                xhat.push(h);
                data.push(h * tg.data()[c] + tb.data()[c]);
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push("layer_norm", out, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, rg)
    }

    /// Multi-head `softmax(QKᵀ/√d)V` over `[batch*seq × hidden]` inputs.
    /// Padding keys are excluded from the softmax.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, layout: AttentionLayout) -> Result<Var, NnError> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        if tq.shape() != tk.shape() || tq.shape() != tv.shape() {
            return Err(shape_err("attention", tq.shape(), tk.shape()));
        }
        let (rows, hidden) = tq.as_matrix();
        let AttentionLayout { batch, seq, heads, .. } = layout;
        if rows != batch * seq || layout.mask.len() != rows || heads == 0 || hidden % heads != 0 {
            return Err(shape_err("attention", tq.shape(), &[batch, seq, heads]));
        }
        let d = hidden / heads;
        let scale = T::of_f64(1.0 / (d as f64).sqrt());
        let mut probs = vec![T::zero(); batch * heads * seq * seq];
        let mut out = vec![T::zero(); rows * hidden];
        let (qd, kd, vd) = (tq.data(), tk.data(), tv.data());
        let mut scores = vec![T::zero(); seq];
        for b in 0..batch {
            let mask = &layout.mask[b * seq..(b + 1) * seq];
            for h in 0..heads {
                let off = h * d;
                for i in 0..seq {
                    let qi = &qd[(b * seq + i) * hidden + off..][..d];
                    let mut max = T::neg_infinity();
                    for j in 0..seq {
                        if mask[j] {
                            let kj = &kd[(b * seq + j) * hidden + off..][..d];
                            let s = dot(qi, kj) * scale;
                            scores[j] = s;
                            if s > max {
                                max = s;
                            }
                        }
                    }
                    let p = &mut probs[((b * heads + h) * seq + i) * seq..][..seq];
                    let mut total = T::zero();
                    for j in 0..seq {
                        if mask[j] {
                            let e = (scores[j] - max).exp();
                            p[j] = e;
                            total = total + e;
                        }
                    }
                    if total > T::zero() {
                        for pj in p.iter_mut() {
                            *pj = *pj / total;
                        }
                    }
                    let oi = &mut out[(b * seq + i) * hidden + off..][..d];
                    for j in 0..seq {
                        if p[j] != T::zero() {
                            let vj = &vd[(b * seq + j) * hidden + off..][..d];
                            for (o, &vv) in oi.iter_mut().zip(vj) {
                                *o = *o + p[j] * vv;
                            }
                        }
                    }
                }
            }
        }
        let out = Tensor::new(tq.shape().to_vec(), out)?;
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        self.push("attention", out, Op::Attention { q, k, v, layout, probs }, rg)
    }

    /// Selects rows of a 2-D tensor (embedding lookup, CLS pooling).
    pub fn gather_rows(&mut self, table: Var, rows: Vec<usize>) -> Result<Var, NnError> {
        let tt = self.value(table);
        if tt.shape().len() != 2 {
            return Err(shape_err("gather_rows", tt.shape(), &[rows.len()]));
        }
        let (n, cols) = tt.as_matrix();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in &rows {
            if r >= n {
                return Err(NnError::IndexOutOfRange { index: r, bound: n });
            }
            data.extend_from_slice(tt.row(r));
        }
        let out = Tensor::new(vec![rows.len(), cols], data)?;
        let rg = self.rg(table);
        self.push("gather_rows", out, Op::GatherRows { table, rows }, rg)
    }

    /// Stacks the rows of `b` under the rows of `a`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (ra, ca) = ta.as_matrix();
        let (rb, cb) = tb.as_matrix();
        if ca != cb || ta.shape().len() != 2 || tb.shape().len() != 2 {
            return Err(shape_err("concat_rows", ta.shape(), tb.shape()));
        }
        let mut data = ta.data().to_vec();
        data.extend_from_slice(tb.data());
        let out = Tensor::new(vec![ra + rb, ca], data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("concat_rows", out, Op::ConcatRows(a, b), rg)
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var, NnError> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| v * factor).collect();
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x);
        self.push("scale", out, Op::Scale(x, factor), rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, NnError> {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push("sum", out, Op::Sum(x), rg)
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, NnError> {
        let tl = self.value(logits);
        let (batch, k) = tl.as_matrix();
        if labels.len() != batch || tl.shape().len() != 2 {
            return Err(shape_err("cross_entropy", tl.shape(), &[labels.len()]));
        }
        let mut probs = Vec::with_capacity(batch * k);
        let mut total = T::zero();
        for (b, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(NnError::IndexOutOfRange { index: y, bound: k });
            }
            let row = tl.row(b);
            let lse = log_sum_exp(row);
            total = total + (lse - row[y]);
            probs.extend(row.iter().map(|&z| (z - lse).exp()));
        }
        let out = Tensor::scalar(total / T::of_f64(batch as f64));
        let rg = self.rg(logits);
        self.push("cross_entropy", out, Op::CrossEntropy { logits, labels: labels.to_vec(), probs }, rg)
    }

    /// Mean over the batch of `-Σ_k q_k log softmax(logits · inv_temp)_k`.
    /// `targets` is row-major `[batch × K]`.
    pub fn soft_cross_entropy(&mut self, logits: Var, targets: &[T], inv_temp: T) -> Result<Var, NnError> {
        let tl = self.value(logits);
        let (batch, k) = tl.as_matrix();
        if targets.len() != batch * k || tl.shape().len() != 2 {
            return Err(shape_err("soft_cross_entropy", tl.shape(), &[targets.len()]));
        }
        let mut probs = Vec::with_capacity(batch * k);
        let mut total = T::zero();
        let mut scaled = vec![T::zero(); k];
        for b in 0..batch {
            for (s, &z) in scaled.iter_mut().zip(tl.row(b)) {
                *s = z * inv_temp;
            }
            let lse = log_sum_exp(&scaled);
            let q = &targets[b * k..(b + 1) * k];
            let mut acc = T::zero();
            for (&qk, &zk) in q.iter().zip(&scaled) {
                acc = acc + qk * (zk - lse);
            }
            total = total + -acc;
            probs.extend(scaled.iter().map(|&z| (z - lse).exp()));
        }
        let out = Tensor::scalar(total / T::of_f64(batch as f64));
        let rg = self.rg(logits);
        self.push(
            "soft_cross_entropy",
            out,
            Op::SoftCrossEntropy { logits, targets: targets.to_vec(), probs, inv_temp },
            rg,
        )
    }

    /// Propagates `d loss / d node` back to every trainable leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, NnError> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(NnError::NotScalar(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lt.shape(), T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
        }

        let mut out: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.trainable_leaf {
                let g = grads[idx].take().unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                if !g.all_finite() {
                    return Err(NnError::NonFinite { op: "backward" });
                }
                out[idx] = Some(g);
            }
        }
        Ok(Gradients { grads: out })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let d = g.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
                    self.accumulate(grads, *a, tensor_like(ta, d));
                }
                if self.rg(*b) {
                    let d = g.data().iter().zip(ta.data()).map(|(&x, &y)| x * y).collect();
                    self.accumulate(grads, *b, tensor_like(tb, d));
                }
            }
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                if self.rg(*bias) {
                    let (rows, cols) = g.as_matrix();
                    let mut gb = vec![T::zero(); cols];
                    for r in 0..rows {
                        for (acc, &v) in gb.iter_mut().zip(g.row(r)) {
                            *acc = *acc + v;
                        }
                    }
                    self.accumulate(grads, *bias, tensor_like(self.value(*bias), gb));
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                if self.rg(*a) {
                    // dA = dC · Bᵀ
                    let mut ga = vec![T::zero(); m * k];
                    T::gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        g.data(),
                        n as isize,
                        1,
                        tb.data(),
                        1,
                        n as isize,
                        T::zero(),
                        &mut ga,
                        k as isize,
                        1,
                    );
                    self.accumulate(grads, *a, tensor_like(ta, ga));
                }
                if self.rg(*b) {
                    // dB = Aᵀ · dC
                    let mut gb = vec![T::zero(); k * n];
                    T::gemm(
                        k,
                        m,
                        n,
                        T::one(),
                        ta.data(),
                        1,
                        k as isize,
                        g.data(),
                        n as isize,
                        1,
                        T::zero(),
                        &mut gb,
                        n as isize,
                        1,
                    );
                    self.accumulate(grads, *b, tensor_like(tb, gb));
                }
            }
            Op::Gelu(x) => {
                let tx = self.value(*x);
                let d = g.data().iter().zip(tx.data()).map(|(&gv, &xv)| gv * gelu_grad(xv)).collect();
                self.accumulate(grads, *x, tensor_like(tx, d));
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let tx = self.value(*x);
                let tg = self.value(*gamma);
                let (rows, cols) = tx.as_matrix();
                let n = T::of_f64(cols as f64);
                let mut ggamma = vec![T::zero(); cols];
                let mut gbeta = vec![T::zero(); cols];
                let mut gx = vec![T::zero(); rows * cols];
                let mut dxhat = vec![T::zero(); cols];
                for r in 0..rows {
                    let gr = g.row(r);
                    let xh = &xhat[r * cols..(r + 1) * cols];
                    let mut sum_d = T::zero();
                    let mut sum_dx = T::zero();
                    for c in 0..cols {
                        ggamma[c] = ggamma[c] + gr[c] * xh[c];
                        gbeta[c] = gbeta[c] + gr[c];
                        dxhat[c] = gr[c] * tg.data()[c];
                        sum_d = sum_d + dxhat[c];
                        sum_dx = sum_dx + dxhat[c] * xh[c];
                    }
                    let coef = inv_std[r] / n;
                    for c in 0..cols {
                        gx[r * cols + c] = coef * (n * dxhat[c] - sum_d - xh[c] * sum_dx);
                    }
                }
                self.accumulate(grads, *x, tensor_like(tx, gx));
                self.accumulate(grads, *gamma, tensor_like(tg, ggamma));
                self.accumulate(grads, *beta, tensor_like(self.value(*beta), gbeta));
            }
            Op::Attention { q, k, v, layout, probs } => {
                let (tq, tk, tv) = (self.value(*q), self.value(*k), self.value(*v));
                let (rows, hidden) = tq.as_matrix();
                let (batch, seq, heads) = (layout.batch, layout.seq, layout.heads);
                let d = hidden / heads;
                let scale = T::of_f64(1.0 / (d as f64).sqrt());
                let mut gq = vec![T::zero(); rows * hidden];
                let mut gk = vec![T::zero(); rows * hidden];
                let mut gv = vec![T::zero(); rows * hidden];
                let mut dp = vec![T::zero(); seq];
                let (qd, kd, vd, gd) = (tq.data(), tk.data(), tv.data(), g.data());
                for b in 0..batch {
                    for h in 0..heads {
                        let off = h * d;
                        for i in 0..seq {
                            let p = &probs[((b * heads + h) * seq + i) * seq..][..seq];
                            let go = &gd[(b * seq + i) * hidden + off..][..d];
                            let mut weighted = T::zero();
                            for j in 0..seq {
                                if p[j] == T::zero() {
                                    dp[j] = T::zero();
                                    continue;
                                }
                                let base = (b * seq + j) * hidden + off;
                                dp[j] = dot(go, &vd[base..base + d]);
                                weighted = weighted + p[j] * dp[j];
                                for (t, &gov) in go.iter().enumerate() {
                                    gv[base + t] = gv[base + t] + p[j] * gov;
                                }
                            }
                            let qbase = (b * seq + i) * hidden + off;
                            for j in 0..seq {
                                if p[j] == T::zero() {
                                    continue;
                                }
                                let ds = p[j] * (dp[j] - weighted) * scale;
                                let kbase = (b * seq + j) * hidden + off;
                                for t in 0..d {
                                    gq[qbase + t] = gq[qbase + t] + ds * kd[kbase + t];
                                    gk[kbase + t] = gk[kbase + t] + ds * qd[qbase + t];
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *q, tensor_like(tq, gq));
                self.accumulate(grads, *k, tensor_like(tk, gk));
                self.accumulate(grads, *v, tensor_like(tv, gv));
            }
            Op::GatherRows { table, rows } => {
                let tt = self.value(*table);
                let (_, cols) = tt.as_matrix();
                let mut gt = vec![T::zero(); tt.numel()];
                for (i, &r) in rows.iter().enumerate() {
                    for (acc, &v) in gt[r * cols..(r + 1) * cols].iter_mut().zip(g.row(i)) {
                        *acc = *acc + v;
                    }
                }
                self.accumulate(grads, *table, tensor_like(tt, gt));
            }
            Op::ConcatRows(a, b) => {
                let ta = self.value(*a);
                let split = ta.numel();
                self.accumulate(grads, *a, tensor_like(ta, g.data()[..split].to_vec()));
                let tb = self.value(*b);
                self.accumulate(grads, *b, tensor_like(tb, g.data()[split..].to_vec()));
            }
            Op::Scale(x, factor) => {
                let d = g.data().iter().map(|&v| v * *factor).collect();
                self.accumulate(grads, *x, tensor_like(self.value(*x), d));
            }
            Op::Sum(x) => {
                let tx = self.value(*x);
                self.accumulate(grads, *x, Tensor::full(tx.shape(), g.data()[0]));
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let tl = self.value(*logits);
                let (batch, k) = tl.as_matrix();
                let coef = g.data()[0] / T::of_f64(batch as f64);
                let mut gl = probs.clone();
                for (b, &y) in labels.iter().enumerate() {
                    gl[b * k + y] = gl[b * k + y] - T::one();
                }
                for v in gl.iter_mut() {
                    *v = *v * coef;
                }
                self.accumulate(grads, *logits, tensor_like(tl, gl));
            }
            Op::SoftCrossEntropy { logits, targets, probs, inv_temp } => {
                let tl = self.value(*logits);
                let (batch, k) = tl.as_matrix();
                let coef = g.data()[0] * *inv_temp / T::of_f64(batch as f64);
                let mut gl = vec![T::zero(); batch * k];
                for b in 0..batch {
                    let q = &targets[b * k..(b + 1) * k];
                    let mass: T = q.iter().copied().sum();
                    for c in 0..k {
                        gl[b * k + c] = coef * (probs[b * k + c] * mass - q[c]);
                    }
                }
                self.accumulate(grads, *logits, tensor_like(tl, gl));
            }
        }
    }
}

/// Gradients of trainable leaves after [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a trainable leaf; `None` for constants and interior nodes.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn tensor_like<T: Real>(like: &Tensor<T>, data: Vec<T>) -> Tensor<T> {
    Tensor::new(like.shape().to_vec(), data).expect("gradient shape follows its node")
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn log_sum_exp<T: Real>(z: &[T]) -> T {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let s: T = z.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<T: Real>(x: T) -> T {
    let c = T::of_f64(GELU_C);
    let a = T::of_f64(GELU_A);
    let half = T::of_f64(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::of_f64(GELU_C);
    let a = T::of_f64(GELU_A);
    let half = T::of_f64(0.5);
    let three = T::of_f64(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + three * a * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_of_param_has_all_ones_gradient() {
        let mut g = Graph::new();
        let p = g.param(t(&[2, 3], &[1., -2., 3., 0.5, 0.25, 9.])).unwrap();
        let s = g.sum(p).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let mut g = Graph::new();
        let p = g.param(t(&[3], &[1., 2., 3.])).unwrap();
        let unused = g.param(t(&[2], &[4., 5.])).unwrap();
        let s = g.sum(p).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(unused).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let p = g.param(t(&[2], &[1., 2.])).unwrap();
        let c = g.constant(t(&[2], &[3., 4.])).unwrap();
        let y = g.mul(p, c).unwrap();
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::new();
        let p = g.param(t(&[2], &[1., 2.])).unwrap();
        assert!(matches!(g.backward(p), Err(NnError::NotScalar(_))));
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 4], &[3.0; 4])).unwrap();
        let gamma = g.constant(t(&[4], &[1.0; 4])).unwrap();
        let beta = g.constant(t(&[4], &[0.0; 4])).unwrap();
        let y = g.layer_norm(x, gamma, beta).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attention_with_single_real_position_returns_its_value() {
        let mut g = Graph::new();
        let q = g.constant(t(&[3, 2], &[0.3, -1.0, 2.0, 0.1, 0.7, 0.7])).unwrap();
        let k = g.constant(t(&[3, 2], &[1.0, 0.0, 5.0, 5.0, -3.0, 2.0])).unwrap();
        let v = g.constant(t(&[3, 2], &[0.25, -0.5, 9.0, 9.0, 7.0, 7.0])).unwrap();
        let layout = AttentionLayout { batch: 1, seq: 3, heads: 1, mask: vec![true, false, false] };
        let out = g.attention(q, k, v, layout).unwrap();
        for r in 0..3 {
            assert_eq!(g.value(out).row(r), &[0.25, -0.5]);
        }
    }

    #[test]
    fn matmul_shape_mismatch_is_structural_error() {
        let mut g = Graph::<f32>::new();
        let a = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = g.constant(Tensor::zeros(&[4, 2])).unwrap();
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
    }

    #[test]
    fn non_finite_values_are_rejected_immediately() {
        let mut g = Graph::<f64>::new();
        assert!(matches!(g.constant(t(&[2], &[1.0, f64::NAN])), Err(NnError::NonFinite { .. })));
    }

    #[test]
    fn uniform_logits_cross_entropy_is_log_k() {
        for k in [2usize, 3] {
            let mut g = Graph::<f64>::new();
            let z = g.constant(Tensor::zeros(&[4, k])).unwrap();
            let l = g.cross_entropy(z, &[0, 1, 0, 1]).unwrap();
            assert!((g.value(l).data()[0] - (k as f64).ln()).abs() < 1e-12);
        }
    }
}
