//! Dense reverse-mode automatic differentiation over 2-D `f64` arrays.
//!
//! A [`Tape`] records every operation as it is evaluated. Leaves are pushed
//! with [`Tape::param`] (differentiable) or [`Tape::constant`]; every op
//! returns a [`Var`] handle into the tape. [`Tape::backward`] walks the record
//! in reverse and returns the gradient of a `1 × 1` loss with respect to
//! every node that depends on a parameter. Gradients of reused nodes are
//! summed.
//!
//! Row-major batches are the convention throughout: samples are rows and
//! features are columns, so a dense layer computes `X Wᵀ + b`.
//!
//! Each op checks its output for NaN/∞ and fails with
//! [`Error::NonFinite`](crate::Error::NonFinite) naming the op.

mod adam;
mod sparse;

pub use adam::Adam;
pub use sparse::Csr;

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::matrix::{matmul_into, matmul_nt_into, matmul_tn_into, Matrix};
use crate::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Handle to a node of a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddRow(Var, Var),
    Transpose(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    MeanRows(Var),
    Sum(Var),
    Mse(Var, Var),
    Cosine(Var, Var),
    SpMM(Arc<Csr>, Var),
    SliceRows(Var, usize),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` for nodes that do not depend on any
/// parameter or received no gradient.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, zeros of `shape` when it received none.
    pub fn take_or_zeros(&mut self, v: Var, shape: (usize, usize)) -> Matrix {
        self.grads
            .get_mut(v.0)
            .and_then(|g| g.take())
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

fn check(op: &'static str, m: Matrix) -> Result<Matrix> {
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::NonFinite { op })
    }
}

fn same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
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

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn param(&mut self, value: Matrix) -> Result<Var> {
        let value = check("param", value)?;
        Ok(self.push(value, Op::Leaf, true))
    }

    pub fn constant(&mut self, value: Matrix) -> Result<Var> {
        let value = check("constant", value)?;
        Ok(self.push(value, Op::Leaf, false))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let out = check("matmul", out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `x · wᵀ + b` with `w` of shape `out × in` and `b` a `1 × out` row.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.cols() != wv.cols() {
            return Err(Error::ShapeMismatch {
                op: "linear",
                lhs: xv.shape(),
                rhs: wv.shape(),
            });
        }
        let mut out = Matrix::zeros(xv.rows(), wv.rows());
        matmul_nt_into(xv, wv, &mut out);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != (1, wv.rows()) {
                return Err(Error::ShapeMismatch {
                    op: "linear bias",
                    lhs: (1, wv.rows()),
                    rhs: bv.shape(),
                });
            }
            for i in 0..out.rows() {
                for (o, bj) in out.row_mut(i).iter_mut().zip(bv.as_slice()) {
                    *o += bj;
                }
            }
        }
        let out = check("linear", out)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(out, Op::Linear { x, w, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = check("add", self.value(a).add(self.value(b))?)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = check("sub", self.value(a).sub(self.value(b))?)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "hadamard", |x, y| x * y)?;
        let out = check("hadamard", out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Hadamard(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = check("scale", self.value(a).scale(c))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Scale(a, c), rg))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = check("add_scalar", self.value(a).map(|v| v + c))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::AddScalar(a), rg))
    }

    /// Adds the `1 × cols` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.shape() != (1, av.cols()) {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: av.shape(),
                rhs: bv.shape(),
            });
        }
        let mut out = av.clone();
        for i in 0..out.rows() {
            for (o, bj) in out.row_mut(i).iter_mut().zip(bv.as_slice()) {
                *o += bj;
            }
        }
        let out = check("add_row", out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::AddRow(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = check("tanh", self.value(a).map(math::tanh))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Tanh(a), rg))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { slope * v });
        let out = check("leaky_relu", out)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::LeakyRelu(a, slope), rg))
    }

    /// Column means: `R × C → 1 × C`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.rows() == 0 {
            return Err(Error::DimensionMismatch {
                context: "mean_rows of empty tensor",
                expected: 1,
                actual: 0,
            });
        }
        let mut out = Matrix::zeros(1, av.cols());
        for i in 0..av.rows() {
            for (o, v) in out.as_mut_slice().iter_mut().zip(av.row(i)) {
                *o += v;
            }
        }
        let out = check("mean_rows", out.scale(1.0 / av.rows() as f64))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::MeanRows(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).as_slice().iter().sum();
        let out = check("sum", Matrix::filled(1, 1, s))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Sum(a), rg))
    }

    /// Mean over all elements of `(a − b)²`.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("mse", av, bv)?;
        let n = av.len().max(1) as f64;
        let s: f64 = av
            .as_slice()
            .iter()
            .zip(bv.as_slice())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let out = check("mse", Matrix::filled(1, 1, s / n))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mse(a, b), rg))
    }

    /// Row-wise cosine similarity: `R × C, R × C → R × 1`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("cosine_similarity", av, bv)?;
        let mut out = Matrix::zeros(av.rows(), 1);
        for i in 0..av.rows() {
            let (ra, rb) = (av.row(i), bv.row(i));
            let na = crate::matrix::norm(ra);
            let nb = crate::matrix::norm(rb);
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroVector {
                    op: "cosine_similarity",
                });
            }
            out[(i, 0)] = crate::matrix::dot(ra, rb) / (na * nb);
        }
        let out = check("cosine_similarity", out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Cosine(a, b), rg))
    }

    /// `A · h` for a constant sparse `A`.
    pub fn spmm(&mut self, a: &Arc<Csr>, h: Var) -> Result<Var> {
        let hv = self.value(h);
        if a.cols() != hv.rows() {
            return Err(Error::ShapeMismatch {
                op: "spmm",
                lhs: (a.rows(), a.cols()),
                rhs: hv.shape(),
            });
        }
        let out = check("spmm", a.mul_dense(hv))?;
        let rg = self.rg(h);
        Ok(self.push(out, Op::SpMM(a.clone(), h), rg))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = self.value(a);
        if start > end || end > av.rows() {
            return Err(Error::DimensionMismatch {
                context: "slice_rows",
                expected: av.rows(),
                actual: end,
            });
        }
        let out = av.slice_rows(start, end);
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceRows(a, start), rg))
    }

    /// Reverse pass from a `1 × 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NotScalarLoss {
                rows: lv.rows(),
                cols: lv.cols(),
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(Error::NonFinite { op: "backward" });
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, f: impl FnOnce(&mut Matrix)) {
        if !self.rg(v) {
            return;
        }
        let (r, c) = self.value(v).shape();
        let slot = grads[v.0].get_or_insert_with(|| Matrix::zeros(r, c));
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                // dA = G Bᵀ, dB = Aᵀ G
                self.accumulate(grads, *a, |s| matmul_nt_into(g, bv, s));
                self.accumulate(grads, *b, |s| matmul_tn_into(av, g, s));
            }
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                // dX = G W, dW = Gᵀ X, db = column sums of G
                self.accumulate(grads, *x, |s| matmul_into(g, wv, s));
                self.accumulate(grads, *w, |s| matmul_tn_into(g, xv, s));
                if let Some(b) = b {
                    self.accumulate(grads, *b, |s| add_column_sums(g, s));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |s| s.add_assign_scaled(g, 1.0));
                self.accumulate(grads, *b, |s| s.add_assign_scaled(g, 1.0));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |s| s.add_assign_scaled(g, 1.0));
                self.accumulate(grads, *b, |s| s.add_assign_scaled(g, -1.0));
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |s| zip_accumulate(s, g, bv, |gi, bi| gi * bi));
                self.accumulate(grads, *b, |s| zip_accumulate(s, g, av, |gi, ai| gi * ai));
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, |s| s.add_assign_scaled(g, *c));
            }
            Op::AddScalar(a) => {
                self.accumulate(grads, *a, |s| s.add_assign_scaled(g, 1.0));
            }
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, |s| s.add_assign_scaled(g, 1.0));
                self.accumulate(grads, *b, |s| add_column_sums(g, s));
            }
            Op::Transpose(a) => {
                let gt = g.transpose();
                self.accumulate(grads, *a, |s| s.add_assign_scaled(&gt, 1.0));
            }
            Op::Tanh(a) => {
                let y = &node.value;
                self.accumulate(grads, *a, |s| zip_accumulate(s, g, y, |gi, yi| gi * (1.0 - yi * yi)));
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                let slope = *slope;
                self.accumulate(grads, *a, |s| {
                    zip_accumulate(s, g, x, |gi, xi| if xi > 0.0 { gi } else { slope * gi })
                });
            }
            Op::MeanRows(a) => {
                let rows = self.value(*a).rows();
                let inv = 1.0 / rows as f64;
                self.accumulate(grads, *a, |s| {
                    for i in 0..rows {
                        for (o, gj) in s.row_mut(i).iter_mut().zip(g.as_slice()) {
                            *o += gj * inv;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let g0 = g.as_slice()[0];
                self.accumulate(grads, *a, |s| {
                    for o in s.as_mut_slice() {
                        *o += g0;
                    }
                });
            }
            Op::Mse(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let coef = 2.0 * g.as_slice()[0] / av.len().max(1) as f64;
                self.accumulate(grads, *a, |s| {
                    for ((o, x), y) in s.as_mut_slice().iter_mut().zip(av.as_slice()).zip(bv.as_slice()) {
                        *o += coef * (x - y);
                    }
                });
                self.accumulate(grads, *b, |s| {
                    for ((o, x), y) in s.as_mut_slice().iter_mut().zip(av.as_slice()).zip(bv.as_slice()) {
                        *o -= coef * (x - y);
                    }
                });
            }
            Op::Cosine(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let cos = &node.value;
                // d cos / d a = b / (|a||b|) − cos · a / |a|²
                let grad_side = |s: &mut Matrix, own: &Matrix, other: &Matrix| {
                    for i in 0..own.rows() {
                        let (ro, rt) = (own.row(i), other.row(i));
                        let no = crate::matrix::norm(ro);
                        let nt = crate::matrix::norm(rt);
                        let gi = g[(i, 0)];
                        let c = cos[(i, 0)];
                        for ((o, x), y) in s.row_mut(i).iter_mut().zip(ro).zip(rt) {
                            *o += gi * (y / (no * nt) - c * x / (no * no));
                        }
                    }
                };
                self.accumulate(grads, *a, |s| grad_side(s, av, bv));
                self.accumulate(grads, *b, |s| grad_side(s, bv, av));
            }
            Op::SpMM(csr, h) => {
                self.accumulate(grads, *h, |s| csr.transpose_mul_dense_into(g, s));
            }
            Op::SliceRows(a, start) => {
                let start = *start;
                self.accumulate(grads, *a, |s| {
                    for i in 0..g.rows() {
                        for (o, gv) in s.row_mut(start + i).iter_mut().zip(g.row(i)) {
                            *o += gv;
                        }
                    }
                });
            }
        }
    }
}

fn add_column_sums(g: &Matrix, out: &mut Matrix) {
    for i in 0..g.rows() {
        for (o, v) in out.as_mut_slice().iter_mut().zip(g.row(i)) {
            *o += v;
        }
    }
}

fn zip_accumulate(out: &mut Matrix, g: &Matrix, other: &Matrix, f: impl Fn(f64, f64) -> f64) {
    for ((o, gi), xi) in out.as_mut_slice().iter_mut().zip(g.as_slice()).zip(other.as_slice()) {
        *o += f(*gi, *xi);
    }
}
