//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Nodes are appended
//! in evaluation order, so node ids are already a topological order and the
//! backward pass is a single reverse sweep. Tapes are cheap to build and are
//! rebuilt for every forward pass.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulTransposed(Var, Var),
    Add(Var, Var),
    Hadamard(Var, Var),
    Relu(Var),
    MaskedSoftmax(Var, Matrix),
    MeanPoolRows(Var),
    Mse(Var, Matrix),
    Sum(Var),
    Scale(Var, f64),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A constant input: no gradient is accumulated for it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// A trainable input: gradients flow to it.
    pub fn parameter(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, true)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    /// `a · bᵀ`
    pub fn matmul_transposed(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_transposed(self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMulTransposed(a, b), value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_with(self.value(b), "add", |x, y| x + y)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_with(self.value(b), "hadamard", |x, y| x * y)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Hadamard(a, b), value, rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.needs(a);
        self.push(Op::Relu(a), value, rg)
    }

    /// Row-wise softmax restricted to entries where `mask` is 1.
    ///
    /// Masked-out entries are exactly zero; a row whose mask is all zero yields
    /// an all-zero row. Masked input entries are never read, so they may hold
    /// any value including infinities.
    pub fn masked_softmax(&mut self, a: Var, mask: &Matrix) -> Result<Var> {
        let value = masked_softmax(self.value(a), mask)?;
        let rg = self.needs(a);
        Ok(self.push(Op::MaskedSoftmax(a, mask.clone()), value, rg))
    }

    /// Mean over rows: n×c → 1×c.
    pub fn mean_pool_rows(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.rows() == 0 {
            return Err(Error::Contract("mean_pool_rows of an empty matrix".into()));
        }
        let mut out = Matrix::zeros(1, m.cols());
        for r in 0..m.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(m.row(r)) {
                *o += v;
            }
        }
        let inv = 1.0 / m.rows() as f64;
        out.data_mut().iter_mut().for_each(|v| *v *= inv);
        let rg = self.needs(a);
        Ok(self.push(Op::MeanPoolRows(a), out, rg))
    }

    /// Mean squared error against a constant target; 1×1 result.
    pub fn mse(&mut self, pred: Var, target: &Matrix) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::dim("mse", p.shape(), target.shape()));
        }
        if p.is_empty() {
            return Err(Error::Contract("mse of an empty matrix".into()));
        }
        let loss = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / p.len() as f64;
        let rg = self.needs(pred);
        Ok(self.push(Op::Mse(pred, target.clone()), Matrix::scalar(loss), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.needs(a);
        self.push(Op::Sum(a), Matrix::scalar(s), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.needs(a);
        self.push(Op::Scale(a, factor), value, rg)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(a).clone().reshape(rows, cols)?;
        let rg = self.needs(a);
        Ok(self.push(Op::Reshape(a), value, rg))
    }

    /// Accumulates d`loss`/d`node` for every node that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if loss_value.shape() != (1, 1) {
            let (r, c) = loss_value.shape();
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {r}x{c}"
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    // leaves keep their gradient for the caller
                    grads[id] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let da = g.matmul_transposed(self.value(*b))?;
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs(*b) {
                        let db = self.value(*a).transposed_matmul(&g)?;
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::MatMulTransposed(a, b) => {
                    // out = A·Bᵀ: dA = G·B, dB = Gᵀ·A
                    if self.needs(*a) {
                        let da = g.matmul(self.value(*b))?;
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs(*b) {
                        let db = g.transposed_matmul(self.value(*a))?;
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Hadamard(a, b) => {
                    if self.needs(*a) {
                        let da = g.zip_with(self.value(*b), "hadamard", |x, y| x * y)?;
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs(*b) {
                        let db = g.zip_with(self.value(*a), "hadamard", |x, y| x * y)?;
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Relu(a) => {
                    let da = g.zip_with(self.value(*a), "relu", |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                    accumulate(&mut grads, *a, da);
                }
                Op::MaskedSoftmax(a, mask) => {
                    let y = &node.value;
                    let mut da = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let inner: f64 = yr.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                        for c in 0..y.cols() {
                            if mask.get(r, c) != 0.0 {
                                da.set(r, c, yr[c] * (gr[c] - inner));
                            }
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::MeanPoolRows(a) => {
                    let rows = self.value(*a).rows();
                    let inv = 1.0 / rows as f64;
                    let mut da = Matrix::zeros(rows, g.cols());
                    for r in 0..rows {
                        for c in 0..g.cols() {
                            da.set(r, c, g.get(0, c) * inv);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Mse(pred, target) => {
                    let p = self.value(*pred);
                    let k = 2.0 * g.get(0, 0) / p.len() as f64;
                    let dp = p.zip_with(target, "mse", |a, b| k * (a - b))?;
                    accumulate(&mut grads, *pred, dp);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::Scale(a, factor) => {
                    let f = *factor;
                    accumulate(&mut grads, *a, g.map(|v| v * f));
                }
                Op::Reshape(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, g.reshape(r, c)?);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, delta: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

/// Gradients of one backward pass, retained for leaf nodes.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for a leaf; `None` if the leaf is constant or unreachable from the loss.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for a leaf, zeros when it did not influence the loss.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

/// Eager masked row softmax, see [`Tape::masked_softmax`].
pub fn masked_softmax(a: &Matrix, mask: &Matrix) -> Result<Matrix> {
    if a.shape() != mask.shape() {
        return Err(Error::dim("masked_softmax", a.shape(), mask.shape()));
    }
    let mut out = Matrix::zeros(a.rows(), a.cols());
    for r in 0..a.rows() {
        let row = a.row(r);
        let m = mask.row(r);
        let max = row
            .iter()
            .zip(m)
            .filter(|(_, &mv)| mv != 0.0)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut total = 0.0;
        for c in 0..a.cols() {
            if m[c] != 0.0 {
                let e = (row[c] - max).exp();
                out.set(r, c, e);
                total += e;
            }
        }
        for c in 0..a.cols() {
            if m[c] != 0.0 {
                out.set(r, c, out.get(r, c) / total);
            }
        }
    }
    Ok(out)
}

/// Central finite-difference gradient of `f` with respect to every entry of `x`.
///
/// Shared by the gradient-check tests; lives here so integration tests can use it.
pub fn finite_difference(x: &Matrix, step: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut probe = x.clone();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = f(&probe);
        probe.data_mut()[i] = orig - step;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / (2.0 * step);
    }
    out
}

/// Largest elementwise relative error `|a-n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix, floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
