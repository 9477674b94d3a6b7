//! Taped reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] records every operation in evaluation order. Calling
//! [`Graph::backward`] on a `1x1` node walks the tape in reverse and
//! accumulates `d loss / d value` into the gradient slot of every
//! [`Parameter`](super::Parameter) that the loss depends on.
//!
//! A graph is built per forward pass and then discarded.

use std::collections::HashMap;

use rand::Rng;

use super::matrix::{self, Matrix};
use super::param::{ParamId, ParamStore};
use crate::error::{Result, TaasError};

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulConst(Var, Matrix),
    AddConst(Var),
    Scale(Var, f64),
    Relu(Var),
    Softplus(Var),
    Exp(Var),
    Ln(Var, f64),
    Softmax(Var, Option<Vec<bool>>),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Matrix,
        inv_std: Vec<f64>,
    },
    Gather(Var, Vec<usize>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    SumAll(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Matrix,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a `1x1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.get(0, 0)
    }

    fn push(&mut self, value: Matrix, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Param(_) => true,
            Op::Input => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf; no gradient flows into it.
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input, &[])
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id), &[]);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = matrix::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = matrix::matmul_bt(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMulBT(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        let rs = self.shape(row);
        if rs != (1, ca) {
            return Err(TaasError::dims("add_row", (ra, ca), rs));
        }
        let mut out = self.value(a).clone();
        let bias = self.value(row).data().to_vec();
        for r in 0..ra {
            for (o, b) in out.row_mut(r).iter_mut().zip(&bias) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row), &[a, row]))
    }

    /// Elementwise product with a constant matrix.
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Result<Var> {
        let out = self.value(a).zip_map(&c, "mul_const", |x, y| x * y)?;
        Ok(self.push(out, Op::MulConst(a, c), &[a]))
    }

    /// Elementwise sum with a constant matrix.
    pub fn add_const(&mut self, a: Var, c: &Matrix) -> Result<Var> {
        let out = self.value(a).zip_map(c, "add_const", |x, y| x + y)?;
        Ok(self.push(out, Op::AddConst(a), &[a]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a), &[a])
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        self.push(out, Op::Softplus(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a), &[a])
    }

    /// `ln(x + floor)`.
    pub fn ln(&mut self, a: Var, floor: f64) -> Var {
        let out = self.value(a).map(|x| (x + floor).ln());
        self.push(out, Op::Ln(a, floor), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = matrix::softmax_rows(self.value(a));
        self.push(out, Op::Softmax(a, None), &[a])
    }

    /// Row softmax restricted to entries where `keep` (row-major, same shape
    /// as `a`) is true. Excluded entries are exactly zero. Every row must keep
    /// at least one entry.
    pub fn softmax_masked(&mut self, a: Var, keep: Vec<bool>) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if keep.len() != rows * cols {
            return Err(TaasError::dims("softmax_masked", (rows, cols), (1, keep.len())));
        }
        let mut out = self.value(a).clone();
        for r in 0..rows {
            if !matrix::softmax_in_place(out.row_mut(r), Some(&keep[r * cols..(r + 1) * cols])) {
                return Err(TaasError::EmptySequence);
            }
        }
        Ok(self.push(out, Op::Softmax(a, Some(keep)), &[a]))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if self.shape(gain) != (1, cols) || self.shape(bias) != (1, cols) {
            return Err(TaasError::dims("layer_norm", (rows, cols), self.shape(gain)));
        }
        let mut normed = self.value(x).clone();
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            inv_std.push(matrix::normalize_row(normed.row_mut(r), eps).1);
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut out = normed.clone();
        for r in 0..rows {
            for ((o, gv), bv) in out.row_mut(r).iter_mut().zip(g).zip(b) {
                *o = *o * gv + bv;
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
            &[x, gain, bias],
        ))
    }

    /// Selects rows of `table` by index (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let mut out = Matrix::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            if id >= t.rows() {
                return Err(TaasError::Contract(format!(
                    "row index {id} out of range for table with {} rows",
                    t.rows()
                )));
            }
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        Ok(self.push(out, Op::Gather(table, ids.to_vec()), &[table]))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(a).slice_cols(start, len)?;
        Ok(self.push(out, Op::SliceCols(a, start), &[a]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.shape(p).0)
            .ok_or_else(|| TaasError::Contract("concat of zero parts".into()))?;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            if m.rows() != rows {
                return Err(TaasError::dims("concat_cols", (rows, offset), m.shape()));
            }
            for r in 0..rows {
                out.row_mut(r)[offset..offset + m.cols()].copy_from_slice(m.row(r));
            }
            offset += m.cols();
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(a).slice_rows(start, len)?;
        Ok(self.push(out, Op::SliceRows(a, start), &[a]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts
            .first()
            .map(|&p| self.shape(p).1)
            .ok_or_else(|| TaasError::Contract("concat of zero parts".into()))?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            if m.cols() != cols {
                return Err(TaasError::dims("concat_rows", (rows, cols), m.shape()));
            }
            data.extend_from_slice(m.data());
            rows += m.rows();
        }
        let out = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Column means: `rows x cols -> 1 x cols`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut out = Matrix::zeros(1, m.cols());
        let scale = 1.0 / m.rows() as f64;
        for r in 0..m.rows() {
            for (o, v) in out.row_mut(0).iter_mut().zip(m.row(r)) {
                *o += v * scale;
            }
        }
        self.push(out, Op::MeanRows(a), &[a])
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::filled(1, 1, s), Op::SumAll(a), &[a])
    }

    /// Summed token-level cross-entropy `-Σ ln softmax(logits_r)[target_r]`
    /// over rows whose target is `Some`.
    pub fn cross_entropy_sum(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let l = self.value(logits);
        if targets.len() != l.rows() {
            return Err(TaasError::dims("cross_entropy", l.shape(), (targets.len(), 1)));
        }
        let probs = matrix::softmax_rows(l);
        let mut total = 0.0;
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                if t >= l.cols() {
                    return Err(TaasError::Contract(format!("target id {t} out of range for {} classes", l.cols())));
                }
                // log-sum-exp form keeps the value exact for saturated rows.
                let row = l.row(r);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total += lse - row[t];
            }
        }
        Ok(self.push(
            Matrix::filled(1, 1, total),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Inverted dropout. Identity when `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if rate <= 0.0 {
            return Ok(a);
        }
        let (rows, cols) = self.shape(a);
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..rows * cols)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        self.mul_const(a, Matrix::from_vec(rows, cols, mask)?)
    }

    /// Post-softmax matrices together with their masks, in tape order.
    pub fn softmax_outputs(&self) -> impl Iterator<Item = (&Matrix, Option<&[bool]>)> {
        self.nodes.iter().filter_map(|n| match &n.op {
            Op::Softmax(_, mask) => Some((&n.value, mask.as_deref())),
            _ => None,
        })
    }

    /// Accumulates `d loss / d value` into the gradient of every parameter
    /// reachable from `loss`. Gradients add onto whatever the store already
    /// holds, so several graphs can contribute to one optimizer step.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            let (r, c) = self.shape(loss);
            return Err(TaasError::Contract(format!("backward needs a scalar loss, got a {r}x{c} node")));
        }
        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    store.get_mut(*id).gradient.add_scaled(&gout, 1.0)?;
                }
                Op::MatMul(a, b) => {
                    if self.wants(*a) {
                        let ga = matrix::matmul_bt(&gout, self.value(*b))?;
                        self.acc(&mut grads, *a, ga)?;
                    }
                    if self.wants(*b) {
                        let gb = matrix::matmul_at(self.value(*a), &gout)?;
                        self.acc(&mut grads, *b, gb)?;
                    }
                }
                Op::MatMulBT(a, b) => {
                    if self.wants(*a) {
                        let ga = matrix::matmul(&gout, self.value(*b))?;
                        self.acc(&mut grads, *a, ga)?;
                    }
                    if self.wants(*b) {
                        let gb = matrix::matmul_at(&gout, self.value(*a))?;
                        self.acc(&mut grads, *b, gb)?;
                    }
                }
                Op::Transpose(a) => self.acc(&mut grads, *a, gout.transpose())?,
                Op::Add(a, b) => {
                    if self.wants(*b) {
                        self.acc(&mut grads, *b, gout.clone())?;
                    }
                    self.acc(&mut grads, *a, gout)?;
                }
                Op::Sub(a, b) => {
                    if self.wants(*b) {
                        self.acc(&mut grads, *b, gout.map(|g| -g))?;
                    }
                    self.acc(&mut grads, *a, gout)?;
                }
                Op::Mul(a, b) => {
                    if self.wants(*a) {
                        let ga = gout.zip_map(self.value(*b), "mul", |g, y| g * y)?;
                        self.acc(&mut grads, *a, ga)?;
                    }
                    if self.wants(*b) {
                        let gb = gout.zip_map(self.value(*a), "mul", |g, x| g * x)?;
                        self.acc(&mut grads, *b, gb)?;
                    }
                }
                Op::AddRow(a, row) => {
                    if self.wants(*row) {
                        let mut gr = Matrix::zeros(1, gout.cols());
                        for r in 0..gout.rows() {
                            for (o, g) in gr.row_mut(0).iter_mut().zip(gout.row(r)) {
                                *o += g;
                            }
                        }
                        self.acc(&mut grads, *row, gr)?;
                    }
                    self.acc(&mut grads, *a, gout)?;
                }
                Op::MulConst(a, c) => {
                    let ga = gout.zip_map(c, "mul_const", |g, y| g * y)?;
                    self.acc(&mut grads, *a, ga)?;
                }
                Op::AddConst(a) => self.acc(&mut grads, *a, gout)?,
                Op::Scale(a, s) => self.acc(&mut grads, *a, gout.map(|g| g * s))?,
                Op::Relu(a) => {
                    let ga = gout.zip_map(self.value(*a), "relu", |g, x| if x > 0.0 { g } else { 0.0 })?;
                    self.acc(&mut grads, *a, ga)?;
                }
                Op::Softplus(a) => {
                    let ga = gout.zip_map(self.value(*a), "softplus", |g, x| g * sigmoid(x))?;
                    self.acc(&mut grads, *a, ga)?;
                }
                Op::Exp(a) => {
                    let ga = gout.zip_map(&node.value, "exp", |g, y| g * y)?;
                    self.acc(&mut grads, *a, ga)?;
                }
                Op::Ln(a, floor) => {
                    let ga = gout.zip_map(self.value(*a), "ln", |g, x| g / (x + floor))?;
                    self.acc(&mut grads, *a, ga)?;
                }
                Op::Softmax(a, _) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = gout.row(r);
                        let inner = matrix::dot(yr, gr);
                        for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = yv * (gv - inner);
                        }
                    }
                    self.acc(&mut grads, *a, ga)?;
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normed,
                    inv_std,
                } => {
                    let (rows, cols) = normed.shape();
                    let g = self.value(*gain).data();
                    if self.wants(*gain) || self.wants(*bias) {
                        let mut gg = Matrix::zeros(1, cols);
                        let mut gb = Matrix::zeros(1, cols);
                        for r in 0..rows {
                            for c in 0..cols {
                                let go = gout.get(r, c);
                                gg.row_mut(0)[c] += go * normed.get(r, c);
                                gb.row_mut(0)[c] += go;
                            }
                        }
                        self.acc(&mut grads, *gain, gg)?;
                        self.acc(&mut grads, *bias, gb)?;
                    }
                    if self.wants(*x) {
                        let n = cols as f64;
                        let mut gx = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            let xhat = normed.row(r);
                            let dxhat: Vec<f64> = gout.row(r).iter().zip(g).map(|(go, gv)| go * gv).collect();
                            let sum_d: f64 = dxhat.iter().sum();
                            let sum_dx: f64 = matrix::dot(&dxhat, xhat);
                            let k = inv_std[r] / n;
                            for c in 0..cols {
                                gx.row_mut(r)[c] = k * (n * dxhat[c] - sum_d - xhat[c] * sum_dx);
                            }
                        }
                        self.acc(&mut grads, *x, gx)?;
                    }
                }
                Op::Gather(table, ids) => {
                    let (rows, cols) = self.shape(*table);
                    let mut gt = Matrix::zeros(rows, cols);
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, g) in gt.row_mut(id).iter_mut().zip(gout.row(r)) {
                            *o += g;
                        }
                    }
                    self.acc(&mut grads, *table, gt)?;
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        ga.row_mut(r)[*start..*start + gout.cols()].copy_from_slice(gout.row(r));
                    }
                    self.acc(&mut grads, *a, ga)?;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        if self.wants(p) {
                            self.acc(&mut grads, p, gout.slice_cols(offset, w)?)?;
                        }
                        offset += w;
                    }
                }
                Op::SliceRows(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    ga.data_mut()[start * cols..start * cols + gout.len()].copy_from_slice(gout.data());
                    self.acc(&mut grads, *a, ga)?;
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let h = self.shape(p).0;
                        if self.wants(p) {
                            self.acc(&mut grads, p, gout.slice_rows(offset, h)?)?;
                        }
                        offset += h;
                    }
                }
                Op::MeanRows(a) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    let scale = 1.0 / rows as f64;
                    for r in 0..rows {
                        for (o, g) in ga.row_mut(r).iter_mut().zip(gout.row(0)) {
                            *o = g * scale;
                        }
                    }
                    self.acc(&mut grads, *a, ga)?;
                }
                Op::SumAll(a) => {
                    let (rows, cols) = self.shape(*a);
                    self.acc(&mut grads, *a, Matrix::filled(rows, cols, gout.get(0, 0)))?;
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let scale = gout.get(0, 0);
                    let mut gl = Matrix::zeros(probs.rows(), probs.cols());
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = *t {
                            for (o, p) in gl.row_mut(r).iter_mut().zip(probs.row(r)) {
                                *o = p * scale;
                            }
                            gl.row_mut(r)[t] -= scale;
                        }
                    }
                    self.acc(&mut grads, *logits, gl)?;
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn acc(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
        if !self.wants(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_scaled(&g, 1.0)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
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
