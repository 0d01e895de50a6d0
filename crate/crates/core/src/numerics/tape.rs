//! Reverse-mode differentiation over a fixed set of matrix primitives.
//!
//! A [`Tape`] records every primitive applied during a forward pass; each
//! recorded node keeps its value. [`Tape::backward`] walks the nodes in
//! reverse, producing the gradient of a 1×1 loss with respect to every node
//! that was created through [`Tape::param`] (or derived from one).
//!
//! The first non-finite value produced by a primitive is remembered together
//! with the primitive's name, and reported by `backward`.

use super::DenseMatrix;
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulSorted(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddRow(usize, usize),
    MulRow(usize, usize),
    MulCol(usize, usize),
    SoftmaxRows(usize),
    Sigmoid(usize),
    Silu(usize),
    LayerNorm { x: usize, inv_std: Vec<f64> },
    GatherRows(usize, Vec<usize>),
    ScatterRows(usize, Vec<usize>),
    Reshape(usize),
    SliceCols(usize, usize),
    Mean(usize),
    Sum(usize),
    SoftmaxCrossEntropy { logits: usize, targets: Vec<usize>, probs: DenseMatrix },
    BinaryCrossEntropy { probs: usize, targets: DenseMatrix },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulSorted(..) => "matmul_sorted",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::MulCol(..) => "mul_col",
            Op::SoftmaxRows(..) => "softmax_rows",
            Op::Sigmoid(..) => "sigmoid",
            Op::Silu(..) => "silu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::GatherRows(..) => "gather_rows",
            Op::ScatterRows(..) => "scatter_rows",
            Op::Reshape(..) => "reshape",
            Op::SliceCols(..) => "slice_cols",
            Op::Mean(..) => "mean",
            Op::Sum(..) => "sum",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::BinaryCrossEntropy { .. } => "binary_cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
    needs_grad: bool,
}

/// Lower clamp applied to probabilities before taking logs in
/// [`Tape::binary_cross_entropy`].
pub const PROB_CLAMP: f64 = 1e-7;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<DenseMatrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Grads {
    /// Gradient with respect to `v`; zeros when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> DenseMatrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> DenseMatrix {
        let (r, c) = self.shapes[v.0];
        self.grads[v.0].take().unwrap_or_else(|| DenseMatrix::zeros(r, c))
    }

    pub fn collect(&mut self, vars: &[Var]) -> Vec<DenseMatrix> {
        vars.iter().map(|&v| self.take(v)).collect()
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<(usize, &'static str)>,
}

fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
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

    fn push(&mut self, value: DenseMatrix, op: Op, needs_grad: bool) -> Var {
        let idx = self.nodes.len();
        if self.fault.is_none() && !value.is_finite() {
            self.fault = Some((idx, op.name()));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Var(idx)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Input that does not receive a gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// First non-finite value seen so far, as a numeric fault.
    pub fn check(&self) -> Result<()> {
        match self.fault {
            None => Ok(()),
            Some((idx, op)) => Err(Error::numeric(op, format!("non-finite value at tape node {idx}"))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a.0, b.0), g)
    }

    /// Matrix product whose inner sums are taken over sorted summands, so the
    /// result does not depend on the order of the inner index. Used where the
    /// inner index runs over graph nodes.
    pub fn matmul_sorted(&mut self, a: Var, b: Var) -> Var {
        let (am, bm) = (self.value(a), self.value(b));
        assert_eq!(am.cols(), bm.rows(), "matmul_sorted shape mismatch");
        let (n, k, m) = (am.rows(), am.cols(), bm.cols());
        let mut out = vec![0.0; n * m];
        let mut buf = vec![0.0; k];
        for i in 0..n {
            for j in 0..m {
                for (p, slot) in buf.iter_mut().enumerate() {
                    *slot = am.get(i, p) * bm.get(p, j);
                }
                out[i * m + j] = sorted_sum(&mut buf);
            }
        }
        let g = self.needs(a) || self.needs(b);
        self.push(DenseMatrix::from_raw(n, m, out), Op::MatMulSorted(a.0, b.0), g)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let g = self.needs(a);
        self.push(v, Op::Transpose(a.0), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).add(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a.0, b.0), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).sub(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a.0, b.0), g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a.0, b.0), g)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).scale(c);
        let g = self.needs(a);
        self.push(v, Op::Scale(a.0, c), g)
    }

    /// `a + 𝟙·row` for a `1×d` row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (am, rm) = (self.value(a), self.value(row));
        assert_eq!((1, am.cols()), rm.shape(), "add_row shape mismatch");
        let mut v = am.clone();
        let r = rm.row(0).to_vec();
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r) {
                *x += b;
            }
        }
        let g = self.needs(a) || self.needs(row);
        self.push(v, Op::AddRow(a.0, row.0), g)
    }

    /// Scales every row of `a` elementwise by a `1×d` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (am, rm) = (self.value(a), self.value(row));
        assert_eq!((1, am.cols()), rm.shape(), "mul_row shape mismatch");
        let mut v = am.clone();
        let r = rm.row(0).to_vec();
        for i in 0..v.rows() {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r) {
                *x *= b;
            }
        }
        let g = self.needs(a) || self.needs(row);
        self.push(v, Op::MulRow(a.0, row.0), g)
    }

    /// Scales row `i` of `a` by `col[i]` for an `n×1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (am, cm) = (self.value(a), self.value(col));
        assert_eq!((am.rows(), 1), cm.shape(), "mul_col shape mismatch");
        let mut v = am.clone();
        for i in 0..v.rows() {
            let s = cm.get(i, 0);
            v.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        let g = self.needs(a) || self.needs(col);
        self.push(v, Op::MulCol(a.0, col.0), g)
    }

    /// Row-wise softmax. The normaliser is a sorted sum, so permuting the
    /// columns permutes the output exactly.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        let g = self.needs(a);
        self.push(v, Op::SoftmaxRows(a.0), g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let g = self.needs(a);
        self.push(v, Op::Sigmoid(a.0), g)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * sigmoid(x));
        let g = self.needs(a);
        self.push(v, Op::Silu(a.0), g)
    }

    /// Per-row standardisation without affine parameters.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let am = self.value(a);
        let (n, d) = am.shape();
        let mut out = am.clone();
        let mut inv_std = Vec::with_capacity(n);
        for i in 0..n {
            let row = out.row_mut(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * inv);
            inv_std.push(inv);
        }
        let g = self.needs(a);
        self.push(out, Op::LayerNorm { x: a.0, inv_std }, g)
    }

    /// `out[r] = a[idx[r]]`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let v = self.value(a).select_rows(idx);
        let g = self.needs(a);
        self.push(v, Op::GatherRows(a.0, idx.to_vec()), g)
    }

    /// `out[idx[r]] += a[r]` into a zero matrix with `rows` rows.
    pub fn scatter_rows(&mut self, a: Var, idx: &[usize], rows: usize) -> Var {
        let am = self.value(a);
        assert_eq!(am.rows(), idx.len(), "scatter_rows index length mismatch");
        let mut v = DenseMatrix::zeros(rows, am.cols());
        for (r, &t) in idx.iter().enumerate() {
            for (o, x) in v.row_mut(t).iter_mut().zip(am.row(r)) {
                *o += x;
            }
        }
        let g = self.needs(a);
        self.push(v, Op::ScatterRows(a.0, idx.to_vec()), g)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let am = self.value(a);
        assert_eq!(am.len(), rows * cols, "reshape size mismatch");
        let v = DenseMatrix::from_raw(rows, cols, am.data().to_vec());
        let g = self.needs(a);
        self.push(v, Op::Reshape(a.0), g)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice_cols(start, len);
        let g = self.needs(a);
        self.push(v, Op::SliceCols(a.0, start), g)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let am = self.value(a);
        let v = DenseMatrix::from_raw(1, 1, vec![am.sum() / am.len().max(1) as f64]);
        let g = self.needs(a);
        self.push(v, Op::Mean(a.0), g)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = DenseMatrix::from_raw(1, 1, vec![self.value(a).sum()]);
        let g = self.needs(a);
        self.push(v, Op::Sum(a.0), g)
    }

    /// Mean over rows of `-log softmax(logits)[target]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let lm = self.value(logits);
        assert_eq!(lm.rows(), targets.len(), "cross-entropy target count mismatch");
        let probs = softmax_rows(lm);
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = lm.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
        }
        let loss = total / targets.len().max(1) as f64;
        let g = self.needs(logits);
        self.push(
            DenseMatrix::from_raw(1, 1, vec![loss]),
            Op::SoftmaxCrossEntropy { logits: logits.0, targets: targets.to_vec(), probs },
            g,
        )
    }

    /// Mean binary cross-entropy of probabilities against 0/1 targets, with
    /// probabilities clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
    pub fn binary_cross_entropy(&mut self, probs: Var, targets: &DenseMatrix) -> Var {
        let pm = self.value(probs);
        assert_eq!(pm.shape(), targets.shape(), "binary cross-entropy shape mismatch");
        let total: f64 = pm
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&p, &y)| {
                let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        let loss = total / pm.len().max(1) as f64;
        let g = self.needs(probs);
        self.push(
            DenseMatrix::from_raw(1, 1, vec![loss]),
            Op::BinaryCrossEntropy { probs: probs.0, targets: targets.clone() },
            g,
        )
    }

    /// Gradients of the 1×1 node `loss` with respect to every differentiable node.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        self.check()?;
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));

        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let acc = |target: usize, delta: DenseMatrix, grads: &mut Vec<Option<DenseMatrix>>| {
                if !self.nodes[target].needs_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(existing) => existing.add_assign(&delta),
                    slot @ None => *slot = Some(delta),
                }
            };
            let val = |i: usize| &self.nodes[i].value;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) | Op::MatMulSorted(a, b) => {
                    if self.nodes[*a].needs_grad {
                        acc(*a, g.matmul_nt(val(*b)), &mut grads);
                    }
                    if self.nodes[*b].needs_grad {
                        acc(*b, val(*a).matmul_tn(&g), &mut grads);
                    }
                }
                Op::Transpose(a) => acc(*a, g.transpose(), &mut grads),
                Op::Add(a, b) => {
                    acc(*b, g.clone(), &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*b, g.scale(-1.0), &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::Mul(a, b) => {
                    acc(*a, g.zip_map(val(*b), |x, y| x * y), &mut grads);
                    acc(*b, g.zip_map(val(*a), |x, y| x * y), &mut grads);
                }
                Op::Scale(a, c) => acc(*a, g.scale(*c), &mut grads),
                Op::AddRow(a, row) => {
                    let s = g.col_sums();
                    acc(*row, DenseMatrix::from_raw(1, s.len(), s), &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::MulRow(a, row) => {
                    let r = val(*row).row(0);
                    let am = val(*a);
                    let mut da = g.clone();
                    let mut dr = vec![0.0; r.len()];
                    for i in 0..g.rows() {
                        for c in 0..r.len() {
                            dr[c] += g.get(i, c) * am.get(i, c);
                        }
                        for (x, s) in da.row_mut(i).iter_mut().zip(r) {
                            *x *= s;
                        }
                    }
                    acc(*row, DenseMatrix::from_raw(1, dr.len(), dr), &mut grads);
                    acc(*a, da, &mut grads);
                }
                Op::MulCol(a, col) => {
                    let cm = val(*col);
                    let am = val(*a);
                    let mut da = g.clone();
                    let mut dc = vec![0.0; cm.rows()];
                    for i in 0..g.rows() {
                        dc[i] = g.row(i).iter().zip(am.row(i)).map(|(x, y)| x * y).sum();
                        let s = cm.get(i, 0);
                        da.row_mut(i).iter_mut().for_each(|x| *x *= s);
                    }
                    acc(*col, DenseMatrix::from_raw(dc.len(), 1, dc), &mut grads);
                    acc(*a, da, &mut grads);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut dx = g.clone();
                    for i in 0..y.rows() {
                        let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(a, b)| a * b).sum();
                        for (d, (gi, yi)) in dx.row_mut(i).iter_mut().zip(g.row(i).iter().zip(y.row(i))) {
                            *d = yi * (gi - dot);
                        }
                    }
                    acc(*a, dx, &mut grads);
                }
                Op::Sigmoid(a) => {
                    acc(*a, g.zip_map(&node.value, |gi, y| gi * y * (1.0 - y)), &mut grads);
                }
                Op::Silu(a) => {
                    let dx = g.zip_map(val(*a), |gi, x| {
                        let s = sigmoid(x);
                        gi * (s + x * s * (1.0 - s))
                    });
                    acc(*a, dx, &mut grads);
                }
                Op::LayerNorm { x, inv_std } => {
                    let y = &node.value;
                    let d = y.cols() as f64;
                    let mut dx = g.clone();
                    for i in 0..y.rows() {
                        let gr = g.row(i);
                        let yr = y.row(i);
                        let mean_g = gr.iter().sum::<f64>() / d;
                        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / d;
                        for (o, (gi, yi)) in dx.row_mut(i).iter_mut().zip(gr.iter().zip(yr)) {
                            *o = inv_std[i] * (gi - mean_g - yi * mean_gy);
                        }
                    }
                    acc(*x, dx, &mut grads);
                }
                Op::GatherRows(a, idx_list) => {
                    let mut dx = DenseMatrix::zeros(val(*a).rows(), g.cols());
                    for (r, &t) in idx_list.iter().enumerate() {
                        for (o, x) in dx.row_mut(t).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(*a, dx, &mut grads);
                }
                Op::ScatterRows(a, idx_list) => acc(*a, g.select_rows(idx_list), &mut grads),
                Op::Reshape(a) => {
                    let (r, c) = val(*a).shape();
                    acc(*a, DenseMatrix::from_raw(r, c, g.into_vec()), &mut grads);
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = val(*a).shape();
                    let mut dx = DenseMatrix::zeros(r, c);
                    let len = g.cols();
                    for i in 0..r {
                        dx.row_mut(i)[*start..*start + len].copy_from_slice(g.row(i));
                    }
                    acc(*a, dx, &mut grads);
                }
                Op::Mean(a) => {
                    let (r, c) = val(*a).shape();
                    let s = g.data()[0] / (r * c).max(1) as f64;
                    acc(*a, DenseMatrix::filled(r, c, s), &mut grads);
                }
                Op::Sum(a) => {
                    let (r, c) = val(*a).shape();
                    acc(*a, DenseMatrix::filled(r, c, g.data()[0]), &mut grads);
                }
                Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                    let s = g.data()[0] / targets.len().max(1) as f64;
                    let mut dx = probs.clone();
                    for (i, &t) in targets.iter().enumerate() {
                        let row = dx.row_mut(i);
                        row[t] -= 1.0;
                        row.iter_mut().for_each(|x| *x *= s);
                    }
                    acc(*logits, dx, &mut grads);
                }
                Op::BinaryCrossEntropy { probs, targets } => {
                    let pm = val(*probs);
                    let s = g.data()[0] / pm.len().max(1) as f64;
                    let dx = pm.zip_map(targets, |p, y| {
                        if p < PROB_CLAMP || p > 1.0 - PROB_CLAMP {
                            0.0
                        } else {
                            s * (-y / p + (1.0 - y) / (1.0 - p))
                        }
                    });
                    acc(*probs, dx, &mut grads);
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Grads { grads, shapes })
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with an order-independent normaliser.
pub fn softmax_rows(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    let mut buf = Vec::with_capacity(m.cols());
    for i in 0..m.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        buf.clear();
        buf.extend(row.iter().map(|x| (x - max).exp()));
        for (x, e) in row.iter_mut().zip(&buf) {
            *x = *e;
        }
        let z = sorted_sum(&mut buf);
        row.iter_mut().for_each(|x| *x /= z);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_value_and_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(DenseMatrix::filled(1, 1, 3.0));
        let y = tape.sum(x);
        assert_eq!(tape.scalar(y), 3.0);
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.wrt(x).data(), &[1.0]);
    }

    #[test]
    fn softmax_cross_entropy_gradient_is_softmax_minus_onehot() {
        let logits = DenseMatrix::from_rows(&[vec![0.3, -1.2, 2.0, 0.1]]).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(logits.clone());
        let loss = tape.softmax_cross_entropy(x, &[2]);
        let grads = tape.backward(loss).unwrap();
        let mut expected = softmax_rows(&logits);
        expected.set(0, 2, expected.get(0, 2) - 1.0);
        assert!(grads.wrt(x).max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn non_scalar_loss_is_a_contract_violation() {
        let mut tape = Tape::new();
        let x = tape.param(DenseMatrix::zeros(2, 2));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn nan_reports_the_primitive() {
        let mut tape = Tape::new();
        let x = tape.param(DenseMatrix::filled(1, 1, f64::MAX));
        let y = tape.scale(x, 10.0);
        let z = tape.sum(y);
        match tape.backward(z) {
            Err(Error::Numeric { op, .. }) => assert_eq!(op, "scale"),
            other => panic!("expected numeric fault, got {other:?}"),
        }
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(DenseMatrix::filled(1, 1, 2.0));
        let p = tape.param(DenseMatrix::filled(1, 1, 5.0));
        let y = tape.mul(c, p);
        let s = tape.sum(y);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.wrt(p).data(), &[2.0]);
        assert_eq!(grads.wrt(c).data(), &[0.0]);
    }

    #[test]
    fn sorted_products_are_order_free() {
        let a = DenseMatrix::from_rows(&[vec![1e16, 1.0, -1e16, 3.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let perm = [3usize, 0, 2, 1];
        let ap = DenseMatrix::from_fn(1, 4, |_, c| a.get(0, perm[c]));
        let mut tape = Tape::new();
        let (x, y, xp) = (tape.constant(a), tape.constant(b.clone()), tape.constant(ap));
        let r1 = tape.matmul_sorted(x, y);
        let r2 = tape.matmul_sorted(xp, y);
        assert_eq!(tape.value(r1), tape.value(r2));
    }
}
