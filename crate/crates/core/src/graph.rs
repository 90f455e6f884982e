//! Reverse-mode differentiation over a recorded tape of tensor operations.
//!
//! A [`Graph`] is built fresh for every forward pass. Each operation appends a
//! node holding its output value and enough context to propagate gradients.
//! [`Graph::backward`] walks the tape in reverse and returns the gradient of
//! every parameter leaf that the loss depends on.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::param::{Gradients, ParamKey, Parameter};
use crate::tensor::Tensor;
use crate::train::top1;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => libm::tanh(x),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the forward output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Row-wise softmax of a matrix, computed after subtracting each row's
/// maximum.
pub fn softmax(logits: &Tensor) -> Tensor {
    let cols = logits.cols();
    let mut out = Vec::with_capacity(logits.len());
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|v| libm::exp(v - max)));
        let total: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|v| *v /= total);
    }
    Tensor::new(vec![logits.rows(), cols], out).expect("same shape")
}

/// How a batch-norm node normalizes its input.
#[derive(Debug, Clone)]
pub enum Normalization<'a> {
    /// Normalize with the statistics of the current batch.
    Batch { eps: f64 },
    /// Normalize with fixed (running) statistics.
    Fixed {
        mean: &'a [f64],
        var: &'a [f64],
        eps: f64,
    },
}

/// Per-column batch mean and biased variance.
pub type BatchStats = (Vec<f64>, Vec<f64>);

/// Per-lane terms of a batched TOP1 loss. Columns index the logits row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Top1Lane {
    pub row: usize,
    pub target: usize,
    pub negatives: Vec<usize>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamKey),
    Affine {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    EmbeddingBag {
        table: Var,
        bags: Vec<Vec<usize>>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    Unary(Var, Activation),
    Softmax(Var),
    Concat(Vec<Var>),
    Pairwise {
        input: Var,
        fields: usize,
        dim: usize,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        normalized: Tensor,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Top1 {
        logits: Var,
        lanes: Vec<Top1Lane>,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Rc<Tensor>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, left: &Tensor, right: &Tensor) -> Error {
    Error::Shape {
        op,
        left: left.shape().to_vec(),
        right: right.shape().to_vec(),
    }
}

fn is_matrix(t: &Tensor) -> bool {
    t.shape().len() == 2
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.push_shared(Rc::new(value), op)
    }

    fn push_shared(&mut self, value: Rc<Tensor>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Records a constant input. No gradient flows out of it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records a parameter leaf. The tape shares the parameter's storage.
    pub fn param(&mut self, p: &Parameter) -> Var {
        self.push_shared(p.shared_value(), Op::Param(p.key()))
    }

    /// `out[b,o] = Σ_i input[b,i]·weight[i,o] + bias[o]`.
    pub fn affine(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let x = self.value(input);
        let w = self.value(weight);
        if !is_matrix(x) || !is_matrix(w) || x.cols() != w.rows() {
            return Err(shape_err("affine", x, w));
        }
        let (rows, inner, out_cols) = (x.rows(), x.cols(), w.cols());
        let mut out = vec![0.0; rows * out_cols];
        if let Some(b) = bias {
            let b = self.value(b);
            if b.shape() != [out_cols] {
                return Err(shape_err("affine bias", w, b));
            }
            for r in 0..rows {
                out[r * out_cols..(r + 1) * out_cols].copy_from_slice(b.data());
            }
        }
        matmul_into(x.data(), w.data(), &mut out, rows, inner, out_cols);
        let value = Tensor::new(vec![rows, out_cols], out)?;
        Ok(self.push(
            value,
            Op::Affine {
                input,
                weight,
                bias,
            },
        ))
    }

    /// Mean of the table rows named by each bag; one output row per bag.
    /// An empty bag produces a zero row.
    pub fn embedding_bag(&mut self, table: Var, bags: Vec<Vec<usize>>) -> Result<Var> {
        let t = self.value(table);
        if !is_matrix(t) {
            return Err(Error::Shape {
                op: "embedding_bag",
                left: t.shape().to_vec(),
                right: vec![],
            });
        }
        let (n, dim) = (t.rows(), t.cols());
        let mut out = vec![0.0; bags.len() * dim];
        for (b, bag) in bags.iter().enumerate() {
            if bag.is_empty() {
                continue;
            }
            let scale = 1.0 / bag.len() as f64;
            let dst = &mut out[b * dim..(b + 1) * dim];
            for &idx in bag {
                if idx >= n {
                    return Err(Error::Vocabulary {
                        index: idx,
                        size: n,
                    });
                }
                for (d, s) in dst.iter_mut().zip(t.row(idx)) {
                    *d += s * scale;
                }
            }
        }
        let value = Tensor::new(vec![bags.len(), dim], out)?;
        Ok(self.push(value, Op::EmbeddingBag { table, bags }))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err(name, x, y));
        }
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(p, q)| f(*p, *q))
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("add", a, b, |p, q| p + q)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("sub", a, b, |p, q| p - q)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary("mul", a, b, |p, q| p * q)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Elementwise product with a constant tensor (dropout masks).
    pub fn mul_const(&mut self, a: Var, factor: Tensor) -> Result<Var> {
        let x = self.value(a);
        if x.shape() != factor.shape() {
            return Err(shape_err("mul_const", x, &factor));
        }
        let data = x
            .data()
            .iter()
            .zip(factor.data())
            .map(|(p, q)| p * q)
            .collect();
        let v = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(v, Op::MulConst(a, factor)))
    }

    pub fn elementwise(&mut self, kind: Activation, a: Var) -> Var {
        let x = self.value(a);
        let data = x.data().iter().map(|v| kind.apply(*v)).collect();
        let v = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(v, Op::Unary(a, kind))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.elementwise(Activation::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.elementwise(Activation::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.elementwise(Activation::Relu, a)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if !is_matrix(x) || x.cols() == 0 {
            return Err(Error::Rank(x.shape().to_vec()));
        }
        let v = softmax(x);
        Ok(self.push(v, Op::Softmax(a)))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(p) => self.value(*p).rows(),
            None => return Err(Error::EmptyInput("concat")),
        };
        let mut total = 0;
        for p in parts {
            let t = self.value(*p);
            if !is_matrix(t) || t.rows() != rows {
                return Err(shape_err("concat", self.value(parts[0]), t));
            }
            total += t.cols();
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.value(*p).row(r));
            }
        }
        let v = Tensor::new(vec![rows, total], out)?;
        Ok(self.push(v, Op::Concat(parts.to_vec())))
    }

    /// Inner products of every field pair `f < g`, where the input row holds
    /// `fields` consecutive embeddings of width `dim`.
    pub fn pairwise_inner(&mut self, input: Var, fields: usize, dim: usize) -> Result<Var> {
        let x = self.value(input);
        if !is_matrix(x) || x.cols() != fields * dim {
            return Err(Error::Shape {
                op: "pairwise_inner",
                left: x.shape().to_vec(),
                right: vec![fields, dim],
            });
        }
        let pairs = fields * fields.saturating_sub(1) / 2;
        let rows = x.rows();
        let mut out = Vec::with_capacity(rows * pairs);
        for r in 0..rows {
            let row = x.row(r);
            for f in 0..fields {
                let ef = &row[f * dim..(f + 1) * dim];
                for g in f + 1..fields {
                    let eg = &row[g * dim..(g + 1) * dim];
                    out.push(ef.iter().zip(eg).map(|(a, b)| a * b).sum());
                }
            }
        }
        let v = Tensor::new(vec![rows, pairs], out)?;
        Ok(self.push(v, Op::Pairwise { input, fields, dim }))
    }

    /// Batch normalization node. Returns the output together with the batch
    /// mean and biased variance when normalizing with batch statistics.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        norm: Normalization<'_>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let x = self.value(input);
        let (rows, cols) = (x.rows(), x.cols());
        let (g, b) = (self.value(gamma), self.value(beta));
        if !is_matrix(x) || g.shape() != [cols] || b.shape() != [cols] {
            return Err(shape_err("batch_norm", x, g));
        }
        let (mean, var, eps, batch_stats) = match norm {
            Normalization::Batch { eps } => {
                if rows < 2 {
                    return Err(Error::DegenerateBatch(rows));
                }
                let mut mean = vec![0.0; cols];
                for r in 0..rows {
                    for (m, v) in mean.iter_mut().zip(x.row(r)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                let mut var = vec![0.0; cols];
                for r in 0..rows {
                    for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= rows as f64);
                (mean, var, eps, true)
            }
            Normalization::Fixed { mean, var, eps } => {
                if mean.len() != cols || var.len() != cols {
                    return Err(Error::Shape {
                        op: "batch_norm stats",
                        left: vec![cols],
                        right: vec![mean.len()],
                    });
                }
                (mean.to_vec(), var.to_vec(), eps, false)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + eps)).collect();
        let mut normalized = Vec::with_capacity(rows * cols);
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let xh = (x.get(r, c) - mean[c]) * inv_std[c];
                normalized.push(xh);
                out.push(g.data()[c] * xh + b.data()[c]);
            }
        }
        let normalized = Tensor::new(vec![rows, cols], normalized)?;
        let v = Tensor::new(vec![rows, cols], out)?;
        let node = self.push(
            v,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
                batch_stats,
            },
        );
        Ok((node, batch_stats.then_some((mean, var))))
    }

    /// Mean TOP1 loss over `lanes`, reading scores from the `logits` matrix.
    pub fn top1(&mut self, logits: Var, lanes: Vec<Top1Lane>) -> Result<Var> {
        if lanes.is_empty() {
            return Err(Error::UndefinedLoss);
        }
        let l = self.value(logits);
        let mut total = 0.0;
        for lane in &lanes {
            if lane.negatives.is_empty() {
                return Err(Error::UndefinedLoss);
            }
            if lane.row >= l.rows() {
                return Err(Error::Shape {
                    op: "top1",
                    left: l.shape().to_vec(),
                    right: vec![lane.row],
                });
            }
            let row = l.row(lane.row);
            for &c in lane.negatives.iter().chain(core::iter::once(&lane.target)) {
                if c >= row.len() {
                    return Err(Error::Vocabulary {
                        index: c,
                        size: row.len(),
                    });
                }
            }
            let negs: Vec<f64> = lane.negatives.iter().map(|&c| row[c]).collect();
            total += top1::top1_loss(row[lane.target], &negs)?;
        }
        let v = Tensor::scalar(total / lanes.len() as f64);
        Ok(self.push(v, Op::Top1 { logits, lanes }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Propagates d(loss)/d(node) back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 || lv.shape().iter().any(|&d| d != 1) {
            return Err(Error::Rank(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(key) => out.add(*key, dy),
                Op::Affine {
                    input,
                    weight,
                    bias,
                } => {
                    let x = self.value(*input);
                    let w = self.value(*weight);
                    let (rows, inner, cols) = (x.rows(), x.cols(), w.cols());
                    // dX = dY · Wᵀ
                    let mut dx = vec![0.0; rows * inner];
                    for r in 0..rows {
                        let dyr = dy.row(r);
                        for i in 0..inner {
                            let wr = &w.data()[i * cols..(i + 1) * cols];
                            dx[r * inner + i] = wr.iter().zip(dyr).map(|(a, b)| a * b).sum();
                        }
                    }
                    // dW = Xᵀ · dY
                    let mut dw = vec![0.0; inner * cols];
                    for r in 0..rows {
                        let dyr = dy.row(r);
                        for (i, &xv) in x.row(r).iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            for (d, g) in dw[i * cols..(i + 1) * cols].iter_mut().zip(dyr) {
                                *d += xv * g;
                            }
                        }
                    }
                    if let Some(b) = bias {
                        let mut db = vec![0.0; cols];
                        for r in 0..rows {
                            for (d, g) in db.iter_mut().zip(dy.row(r)) {
                                *d += g;
                            }
                        }
                        accumulate(&mut grads, *b, Tensor::vector(db));
                    }
                    accumulate(&mut grads, *input, Tensor::new(vec![rows, inner], dx)?);
                    accumulate(&mut grads, *weight, Tensor::new(vec![inner, cols], dw)?);
                }
                Op::EmbeddingBag { table, bags } => {
                    let t = self.value(*table);
                    let dim = t.cols();
                    let mut dt = Tensor::zeros(t.shape());
                    for (b, bag) in bags.iter().enumerate() {
                        if bag.is_empty() {
                            continue;
                        }
                        let scale = 1.0 / bag.len() as f64;
                        for &i in bag {
                            let row = &mut dt.data_mut()[i * dim..(i + 1) * dim];
                            for (d, g) in row.iter_mut().zip(dy.row(b)) {
                                *d += g * scale;
                            }
                        }
                    }
                    accumulate(&mut grads, *table, dt);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, dy.clone());
                    accumulate(&mut grads, *a, dy);
                }
                Op::Sub(a, b) => {
                    let neg = map(&dy, |v| -v);
                    accumulate(&mut grads, *b, neg);
                    accumulate(&mut grads, *a, dy);
                }
                Op::Mul(a, b) => {
                    let da = zip_map(&dy, self.value(*b), |g, y| g * y);
                    let db = zip_map(&dy, self.value(*a), |g, x| g * x);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MulConst(a, factor) => {
                    accumulate(&mut grads, *a, zip_map(&dy, factor, |g, f| g * f));
                }
                Op::Unary(a, kind) => {
                    let x = self.value(*a);
                    let y = &node.value;
                    let data = dy
                        .data()
                        .iter()
                        .zip(x.data().iter().zip(y.data()))
                        .map(|(g, (xv, yv))| g * kind.derivative(*xv, *yv))
                        .collect();
                    accumulate(&mut grads, *a, Tensor::new(x.shape().to_vec(), data)?);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut dx = Tensor::zeros(y.shape());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), dy.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((d, p), q) in dx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *d = p * (q - dot);
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::Concat(parts) => {
                    let rows = dy.rows();
                    let mut offset = 0;
                    for p in parts {
                        let cols = self.value(*p).cols();
                        let mut part = Vec::with_capacity(rows * cols);
                        for r in 0..rows {
                            part.extend_from_slice(&dy.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        accumulate(&mut grads, *p, Tensor::new(vec![rows, cols], part)?);
                    }
                }
                Op::Pairwise { input, fields, dim } => {
                    let x = self.value(*input);
                    let (fields, dim) = (*fields, *dim);
                    let mut dx = Tensor::zeros(x.shape());
                    for r in 0..x.rows() {
                        let row = x.row(r);
                        let grow = dy.row(r);
                        let drow = dx.row_mut(r);
                        let mut k = 0;
                        for f in 0..fields {
                            for g in f + 1..fields {
                                let gp = grow[k];
                                k += 1;
                                if gp == 0.0 {
                                    continue;
                                }
                                for d in 0..dim {
                                    drow[f * dim + d] += gp * row[g * dim + d];
                                    drow[g * dim + d] += gp * row[f * dim + d];
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Op::BatchNorm {
                    input,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                    batch_stats,
                } => {
                    let g = self.value(*gamma);
                    let (rows, cols) = (normalized.rows(), normalized.cols());
                    let mut dgamma = vec![0.0; cols];
                    let mut dbeta = vec![0.0; cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            let gv = dy.get(r, c);
                            dgamma[c] += gv * normalized.get(r, c);
                            dbeta[c] += gv;
                        }
                    }
                    let mut dx = vec![0.0; rows * cols];
                    let n = rows as f64;
                    for c in 0..cols {
                        let gc = g.data()[c];
                        for r in 0..rows {
                            let dxhat = dy.get(r, c) * gc;
                            dx[r * cols + c] = if *batch_stats {
                                // dxhat sums are gamma-scaled dbeta/dgamma.
                                inv_std[c] / n
                                    * (n * dxhat
                                        - gc * dbeta[c]
                                        - normalized.get(r, c) * gc * dgamma[c])
                            } else {
                                dxhat * inv_std[c]
                            };
                        }
                    }
                    accumulate(&mut grads, *input, Tensor::new(vec![rows, cols], dx)?);
                    accumulate(&mut grads, *gamma, Tensor::vector(dgamma));
                    accumulate(&mut grads, *beta, Tensor::vector(dbeta));
                }
                Op::Top1 { logits, lanes } => {
                    let l = self.value(*logits);
                    let upstream = dy.item() / lanes.len() as f64;
                    let mut dl = Tensor::zeros(l.shape());
                    for lane in lanes {
                        let row = l.row(lane.row);
                        let negs: Vec<f64> = lane.negatives.iter().map(|&c| row[c]).collect();
                        let (dpos, dnegs) = top1::top1_grad(row[lane.target], &negs)?;
                        let drow = dl.row_mut(lane.row);
                        drow[lane.target] += upstream * dpos;
                        for (&c, dn) in lane.negatives.iter().zip(dnegs) {
                            drow[c] += upstream * dn;
                        }
                    }
                    accumulate(&mut grads, *logits, dl);
                }
                Op::Sum(a) => {
                    let x = self.value(*a);
                    accumulate(&mut grads, *a, Tensor::filled(x.shape(), dy.item()));
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = t.data().iter().map(|v| f(*v)).collect();
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| f(*x, *y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// `out += a · b` for row-major `a: rows×inner`, `b: inner×cols`.
fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], rows: usize, inner: usize, cols: usize) {
    for r in 0..rows {
        let dst = &mut out[r * cols..(r + 1) * cols];
        for i in 0..inner {
            let av = a[r * inner + i];
            if av == 0.0 {
                continue;
            }
            for (d, bv) in dst.iter_mut().zip(&b[i * cols..(i + 1) * cols]) {
                *d += av * bv;
            }
        }
    }
}
