//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value and
//! the handles of its inputs. [`Graph::backward`] walks the tape in reverse and
//! accumulates gradients for every node that depends on a trainable leaf.
//! Operations treat tensors as row-major matrices whose column count is the
//! last axis.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Index value that makes [`Graph::gather`] emit a zero.
pub const GATHER_ZERO: usize = usize::MAX;

const LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Gelu(Var),
    Silu(Var),
    LayerNorm(Var, Vec<f64>),
    Softmax(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather(Var, Vec<usize>),
    Maximum(Var, Var),
    MeanRows(Var),
    LogFloor(Var, f64),
    Sum(Var),
    Dot(Var, Vec<f64>),
    Mse(Var, Vec<f64>),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.ng(v)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        assert_eq!(k, k2, "matmul inner dimension");
        let out = matmul_nn(self.value(a).data(), self.value(b).data(), m, k, n);
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new([m, n], out), Op::MatMul(a, b), ng)
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        assert_eq!(k, k2, "matmul_nt inner dimension");
        let out = matmul_nt(self.value(a).data(), self.value(b).data(), m, k, n);
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new([m, n], out), Op::MatMulNt(a, b), ng)
    }

    fn zip_op(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let ta = self.value(a);
        let tb = self.value(b);
        assert_eq!(ta.len(), tb.len(), "elementwise length mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(shape, data), op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(a, b, |x, y| if x >= y { x } else { y }, Op::Maximum(a, b))
    }

    /// Adds a row vector (length = cols) to every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (_, n) = self.dims(a);
        assert_eq!(self.value(row).len(), n, "add_row width");
        let r = self.value(row).data().to_vec();
        let ta = self.value(a);
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_mut(n) {
            for (x, y) in chunk.iter_mut().zip(&r) {
                *x += y;
            }
        }
        let shape = ta.shape().to_vec();
        let ng = self.ng(a) || self.ng(row);
        self.push(Tensor::new(shape, data), Op::AddRow(a, row), ng)
    }

    /// Multiplies every row elementwise by a row vector.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (_, n) = self.dims(a);
        assert_eq!(self.value(row).len(), n, "mul_row width");
        let r = self.value(row).data().to_vec();
        let ta = self.value(a);
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_mut(n) {
            for (x, y) in chunk.iter_mut().zip(&r) {
                *x *= y;
            }
        }
        let shape = ta.shape().to_vec();
        let ng = self.ng(a) || self.ng(row);
        self.push(Tensor::new(shape, data), Op::MulRow(a, row), ng)
    }

    fn map_op(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let shape = ta.shape().to_vec();
        let ng = self.ng(a);
        self.push(Tensor::new(shape, data), op, ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map_op(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.map_op(a, |x| x + s, Op::AddScalar(a))
    }

    /// Exact (erf) GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.map_op(a, gelu, Op::Gelu(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        self.map_op(a, |x| x * math::sigmoid(x), Op::Silu(a))
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log_floor(&mut self, a: Var, floor: f64) -> Var {
        self.map_op(a, |x| math::ln(if x > floor { x } else { floor }), Op::LogFloor(a, floor))
    }

    /// Row-wise layer normalization without affine terms.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let ta = self.value(a);
        let mut out = vec![0.0; m * n];
        let mut inv = vec![0.0; m];
        for r in 0..m {
            let row = &ta.data()[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / math::sqrt(var + LN_EPS);
            inv[r] = is;
            for (o, x) in out[r * n..(r + 1) * n].iter_mut().zip(row) {
                *o = (x - mean) * is;
            }
        }
        let shape = ta.shape().to_vec();
        let ng = self.ng(a);
        self.push(Tensor::new(shape, out), Op::LayerNorm(a, inv), ng)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let ta = self.value(a);
        let mut out = ta.data().to_vec();
        for r in 0..m {
            softmax_in_place(&mut out[r * n..(r + 1) * n]);
        }
        let shape = ta.shape().to_vec();
        let ng = self.ng(a);
        self.push(Tensor::new(shape, out), Op::Softmax(a), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (m, n) = self.dims(a);
        assert!(start + len <= n, "slice_cols out of range");
        let ta = self.value(a);
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&ta.data()[r * n + start..r * n + start + len]);
        }
        let ng = self.ng(a);
        self.push(Tensor::new([m, len], out), Op::SliceCols(a, start), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let m = self.dims(parts[0]).0;
        let widths: Vec<usize> = parts.iter().map(|&p| self.dims(p).1).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                let t = self.value(p);
                assert_eq!(t.rows(), m, "concat_cols row mismatch");
                out.extend_from_slice(&t.data()[r * w..(r + 1) * w]);
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Tensor::new([m, total], out), Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let n = self.dims(parts[0]).1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (m, w) = self.dims(p);
            assert_eq!(w, n, "concat_rows column mismatch");
            rows += m;
            out.extend_from_slice(self.value(p).data());
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Tensor::new([rows, n], out), Op::ConcatRows(parts.to_vec()), ng)
    }

    /// `out[i] = a[idx[i]]`, or zero where `idx[i] == GATHER_ZERO`.
    pub fn gather(&mut self, a: Var, idx: Vec<usize>, shape: impl Into<Vec<usize>>) -> Var {
        let ta = self.value(a);
        let src = ta.data();
        let data = idx
            .iter()
            .map(|&i| if i == GATHER_ZERO { 0.0 } else { src[i] })
            .collect();
        let ng = self.ng(a);
        self.push(Tensor::new(shape, data), Op::Gather(a, idx), ng)
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Var {
        let t = self.value(a).clone().reshaped(shape);
        let ng = self.ng(a);
        self.push(t, Op::Reshape(a), ng)
    }

    /// Column means: `[m, n] -> [1, n]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let ta = self.value(a);
        let mut out = vec![0.0; n];
        for r in 0..m {
            for (o, x) in out.iter_mut().zip(&ta.data()[r * n..(r + 1) * n]) {
                *o += x;
            }
        }
        for o in &mut out {
            *o /= m as f64;
        }
        let ng = self.ng(a);
        self.push(Tensor::new([1, n], out), Op::MeanRows(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    /// `sum_i w_i * a_i` against constant weights.
    pub fn dot_const(&mut self, a: Var, weights: Vec<f64>) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.len(), weights.len(), "dot_const length");
        let s = ta.data().iter().zip(&weights).map(|(x, w)| x * w).sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Dot(a, weights), ng)
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, a: Var, target: Vec<f64>) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.len(), target.len(), "mse length");
        let n = target.len() as f64;
        let s = ta.data().iter().zip(&target).map(|(x, t)| (x - t) * (x - t)).sum::<f64>() / n;
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Mse(a, target), ng)
    }

    /// Backpropagates from a scalar node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, contrib: impl FnOnce(&mut [f64])) {
        if !self.ng(v) {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(vec![0.0; self.nodes[v.0].value.len()]);
        }
        contrib(slot.as_mut().unwrap());
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                if self.ng(*a) {
                    let da = matmul_nt(g, self.value(*b).data(), m, n, k);
                    self.accumulate(grads, *a, |acc| add_into(acc, &da));
                }
                if self.ng(*b) {
                    let db = matmul_tn(self.value(*a).data(), g, m, k, n);
                    self.accumulate(grads, *b, |acc| add_into(acc, &db));
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).0;
                if self.ng(*a) {
                    let da = matmul_nn(g, self.value(*b).data(), m, n, k);
                    self.accumulate(grads, *a, |acc| add_into(acc, &da));
                }
                if self.ng(*b) {
                    let db = matmul_tn(g, self.value(*a).data(), m, n, k);
                    self.accumulate(grads, *b, |acc| add_into(acc, &db));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |acc| add_into(acc, g));
                self.accumulate(grads, *b, |acc| add_into(acc, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |acc| add_into(acc, g));
                self.accumulate(grads, *b, |acc| {
                    for (x, y) in acc.iter_mut().zip(g) {
                        *x -= y;
                    }
                });
            }
            Op::Mul(a, b) => {
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                self.accumulate(grads, *a, |acc| {
                    for ((x, gy), w) in acc.iter_mut().zip(g).zip(vb) {
                        *x += gy * w;
                    }
                });
                self.accumulate(grads, *b, |acc| {
                    for ((x, gy), w) in acc.iter_mut().zip(g).zip(va) {
                        *x += gy * w;
                    }
                });
            }
            Op::Maximum(a, b) => {
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                self.accumulate(grads, *a, |acc| {
                    for j in 0..acc.len() {
                        if va[j] >= vb[j] {
                            acc[j] += g[j];
                        }
                    }
                });
                self.accumulate(grads, *b, |acc| {
                    for j in 0..acc.len() {
                        if va[j] < vb[j] {
                            acc[j] += g[j];
                        }
                    }
                });
            }
            Op::AddRow(a, row) => {
                let n = out.cols();
                self.accumulate(grads, *a, |acc| add_into(acc, g));
                self.accumulate(grads, *row, |acc| {
                    for chunk in g.chunks(n) {
                        add_into(acc, chunk);
                    }
                });
            }
            Op::MulRow(a, row) => {
                let n = out.cols();
                let va = self.value(*a).data();
                let vr = self.value(*row).data();
                self.accumulate(grads, *a, |acc| {
                    for (j, x) in acc.iter_mut().enumerate() {
                        *x += g[j] * vr[j % n];
                    }
                });
                self.accumulate(grads, *row, |acc| {
                    for (j, gy) in g.iter().enumerate() {
                        acc[j % n] += gy * va[j];
                    }
                });
            }
            Op::Scale(a, s) => {
                self.accumulate(grads, *a, |acc| {
                    for (x, gy) in acc.iter_mut().zip(g) {
                        *x += gy * s;
                    }
                });
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                self.accumulate(grads, *a, |acc| add_into(acc, g));
            }
            Op::Gelu(a) => {
                let va = self.value(*a).data();
                self.accumulate(grads, *a, |acc| {
                    for ((x, gy), &v) in acc.iter_mut().zip(g).zip(va) {
                        *x += gy * gelu_grad(v);
                    }
                });
            }
            Op::Silu(a) => {
                let va = self.value(*a).data();
                self.accumulate(grads, *a, |acc| {
                    for ((x, gy), &v) in acc.iter_mut().zip(g).zip(va) {
                        let s = math::sigmoid(v);
                        *x += gy * s * (1.0 + v * (1.0 - s));
                    }
                });
            }
            Op::LogFloor(a, floor) => {
                let va = self.value(*a).data();
                self.accumulate(grads, *a, |acc| {
                    for ((x, gy), &v) in acc.iter_mut().zip(g).zip(va) {
                        if v > *floor {
                            *x += gy / v;
                        }
                    }
                });
            }
            Op::LayerNorm(a, inv) => {
                let n = out.cols();
                let y = out.data();
                self.accumulate(grads, *a, |acc| {
                    for (r, is) in inv.iter().enumerate() {
                        let gr = &g[r * n..(r + 1) * n];
                        let yr = &y[r * n..(r + 1) * n];
                        let mg = gr.iter().sum::<f64>() / n as f64;
                        let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for j in 0..n {
                            acc[r * n + j] += is * (gr[j] - mg - yr[j] * mgy);
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let n = out.cols();
                let y = out.data();
                self.accumulate(grads, *a, |acc| {
                    for r in 0..y.len() / n {
                        let gr = &g[r * n..(r + 1) * n];
                        let yr = &y[r * n..(r + 1) * n];
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            acc[r * n + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::SliceCols(a, start) => {
                let n = self.dims(*a).1;
                let len = out.cols();
                self.accumulate(grads, *a, |acc| {
                    for (r, chunk) in g.chunks(len).enumerate() {
                        add_into(&mut acc[r * n + start..r * n + start + len], chunk);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.dims(p).1;
                    self.accumulate(grads, p, |acc| {
                        for (r, chunk) in acc.chunks_mut(w).enumerate() {
                            add_into(chunk, &g[r * total + offset..r * total + offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.accumulate(grads, p, |acc| add_into(acc, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::Gather(a, idx) => {
                self.accumulate(grads, *a, |acc| {
                    for (&j, gy) in idx.iter().zip(g) {
                        if j != GATHER_ZERO {
                            acc[j] += gy;
                        }
                    }
                });
            }
            Op::MeanRows(a) => {
                let (m, n) = self.dims(*a);
                self.accumulate(grads, *a, |acc| {
                    for r in 0..m {
                        for j in 0..n {
                            acc[r * n + j] += g[j] / m as f64;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                self.accumulate(grads, *a, |acc| {
                    for x in acc.iter_mut() {
                        *x += g[0];
                    }
                });
            }
            Op::Dot(a, w) => {
                self.accumulate(grads, *a, |acc| {
                    for (x, wi) in acc.iter_mut().zip(w) {
                        *x += g[0] * wi;
                    }
                });
            }
            Op::Mse(a, target) => {
                let va = self.value(*a).data();
                let scale = 2.0 * g[0] / target.len() as f64;
                self.accumulate(grads, *a, |acc| {
                    for ((x, v), t) in acc.iter_mut().zip(va).zip(target) {
                        *x += scale * (v - t);
                    }
                });
            }
        }
    }
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (x, y) in acc.iter_mut().zip(g) {
        *x += y;
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + math::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + math::erf(x * core::f64::consts::FRAC_1_SQRT_2));
    let pdf = math::exp(-0.5 * x * x) / math::sqrt(2.0 * math::PI);
    cdf + x * pdf
}

/// Numerically stable softmax over a slice.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = math::exp(*v - max);
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rand_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Checks d(root)/d(leaf) against central differences for a graph builder.
    fn check(build: impl Fn(&mut Graph, &[Var]) -> Var, shapes: &[&[usize]]) {
        let mut rng = crate::rng::seeded(11);
        let inputs: Vec<Tensor> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
        let mut g = Graph::new();
        let leaves: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let root = build(&mut g, &leaves);
        let grads = g.backward(root);
        let eval = |inputs: &[Tensor]| {
            let mut g = Graph::new();
            let leaves: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
            let root = build(&mut g, &leaves);
            g.value(root).data()[0]
        };
        let h = 1e-6;
        for (li, leaf) in leaves.iter().enumerate() {
            let analytic = grads.get(*leaf).expect("leaf gradient");
            for j in 0..inputs[li].len() {
                let mut plus = inputs.clone();
                plus[li].data_mut()[j] += h;
                let mut minus = inputs.clone();
                minus[li].data_mut()[j] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let err = (analytic[j] - numeric).abs() / numeric.abs().max(analytic[j].abs()).max(1e-6);
                assert!(err < 1e-5, "leaf {li} elem {j}: analytic {} numeric {}", analytic[j], numeric);
            }
        }
    }

    #[test]
    fn matmul_and_softmax_grads() {
        check(
            |g, v| {
                let c = g.matmul(v[0], v[1]);
                let s = g.softmax(c);
                g.dot_const(s, (0..12).map(|i| i as f64 * 0.1).collect())
            },
            &[&[3, 2], &[2, 4]],
        );
    }

    #[test]
    fn matmul_nt_layernorm_gelu_grads() {
        check(
            |g, v| {
                let c = g.matmul_nt(v[0], v[1]);
                let n = g.layer_norm(c);
                let e = g.gelu(n);
                let s = g.silu(e);
                g.mse(s, alloc::vec![0.3; 6])
            },
            &[&[2, 4], &[3, 4]],
        );
    }

    #[test]
    fn row_ops_slice_concat_gather_grads() {
        check(
            |g, v| {
                let a = g.add_row(v[0], v[1]);
                let b = g.mul_row(a, v[1]);
                let l = g.slice_cols(b, 1, 2);
                let r = g.slice_cols(b, 0, 1);
                let c = g.concat_cols(&[r, l]);
                let d = g.concat_rows(&[c, c]);
                let e = g.gather(d, alloc::vec![0, GATHER_ZERO, 5, 7, 7, 2], [2, 3]);
                let m = g.mean_rows(e);
                let s = g.scale(m, 1.7);
                let t = g.add_scalar(s, 0.2);
                let u = g.mul(t, t);
                g.sum(u)
            },
            &[&[3, 3], &[3]],
        );
    }

    #[test]
    fn maximum_and_log_floor_grads() {
        check(
            |g, v| {
                let m = g.maximum(v[0], v[1]);
                let sm = g.softmax(m);
                let l = g.log_floor(sm, 1e-8);
                let w = g.sub(l, v[0]);
                g.dot_const(w, alloc::vec![0.5, -0.25, 1.0, 2.0])
            },
            &[&[2, 2], &[2, 2]],
        );
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::filled([2, 2], 1.0));
        let p = g.param(Tensor::filled([2, 2], 2.0));
        let m = g.mul(c, p);
        let s = g.sum(m);
        let grads = g.backward(s);
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap(), &[1.0; 4]);
    }
}
