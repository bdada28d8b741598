use std::collections::HashMap;
use std::sync::Arc;

use super::linear_map::{BilinearForm, LinearMap};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ScaleBy(Var, Var),
    BroadcastRows(Var),
    SumRows(Var),
    Fill(Var),
    Sum(Var),
    Reshape(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    PadCols(Var, usize),
    Square(Var),
    Sigmoid(Var),
    Swish(Var),
    Bilinear { x: Var, y: Var, form: Arc<BilinearForm> },
    Expand { beta: Var, map: Arc<dyn LinearMap> },
    Contract { w: Var, map: Arc<dyn LinearMap> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::ScaleBy(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::BroadcastRows(a)
            | Op::SumRows(a)
            | Op::Fill(a)
            | Op::Sum(a)
            | Op::Reshape(a)
            | Op::SliceCols(a, _)
            | Op::PadCols(a, _)
            | Op::Square(a)
            | Op::Sigmoid(a)
            | Op::Swish(a) => vec![*a],
            Op::Concat(parts) => parts.clone(),
            Op::Bilinear { x, y, .. } => vec![*x, *y],
            Op::Expand { beta, .. } => vec![*beta],
            Op::Contract { w, .. } => vec![*w],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records tensor operations for reverse-mode differentiation.
///
/// Gradients are computed by [`Tape::grad`], which appends the backward pass
/// to the same tape using the same primitives. The returned gradient handles
/// are ordinary values and can be differentiated again.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
    first_non_finite: Option<usize>,
}

/// Gradients of a scalar with respect to the registered parameters, in
/// registration order.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub names: Vec<String>,
    pub values: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn into_map(self) -> HashMap<String, Tensor> {
        self.names.into_iter().zip(self.values).collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    t.dims2().ok_or_else(|| Error::Shape {
        op,
        lhs: t.shape().to_vec(),
        rhs: vec![],
    })
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

    /// Index of the first node whose value contained NaN or infinity.
    /// Only tracked in debug builds.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.first_non_finite
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        #[cfg(debug_assertions)]
        if self.first_non_finite.is_none() && !value.is_finite() {
            self.first_non_finite = Some(self.nodes.len());
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A leaf value. Any leaf can be differentiated against with [`Tape::grad`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A leaf registered as a named parameter for [`Tape::backward`].
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> Var {
        let v = self.leaf(value);
        self.params.push((name.into(), v));
        v
    }

    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, data).expect("same shape"), op)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| f(*x)).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, data).expect("same shape"), op)
    }

    /// `op(a) op(b)` where `op` optionally transposes.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (ar, ac) = dims2(self.value(a), "matmul")?;
        let (br, bc) = dims2(self.value(b), "matmul")?;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        let (rsa, csa) = if ta { (1, ac) } else { (ac, 1) };
        let (rsb, csb) = if tb { (1, bc) } else { (bc, 1) };
        if m > 0 && n > 0 && k > 0 {
            let (pa, pb) = (self.value(a).data().as_ptr(), self.value(b).data().as_ptr());
            // SAFETY: strides describe the row-major buffers of `a` and `b`
            // (or their transposes), all of which hold the required elements,
            // and `out` is a fresh m x n row-major buffer.
            unsafe {
                matrixmultiply::dgemm(
                    m,
                    k,
                    n,
                    1.0,
                    pa,
                    rsa as isize,
                    csa as isize,
                    pb,
                    rsb as isize,
                    csb as isize,
                    0.0,
                    out.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
        Ok(self.push(
            Tensor::matrix(m, n, out).expect("sized"),
            Op::MatMul { a, b, ta, tb },
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::AddScalar(a), |x| x + c)
    }

    /// `s * x` for a one-element `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::Shape {
                op: "scale_by",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(s).to_vec(),
            });
        }
        let c = self.value(s).item();
        Ok(self.map(x, Op::ScaleBy(x, s), |v| c * v))
    }

    /// Repeats a `1 x m` row `n` times.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let (r, m) = dims2(self.value(a), "broadcast_rows")?;
        if r != 1 {
            return Err(Error::Shape {
                op: "broadcast_rows",
                lhs: self.shape(a).to_vec(),
                rhs: vec![1, m],
            });
        }
        let row = self.value(a).data();
        let mut data = Vec::with_capacity(n * m);
        for _ in 0..n {
            data.extend_from_slice(row);
        }
        Ok(self.push(Tensor::matrix(n, m, data).expect("sized"), Op::BroadcastRows(a)))
    }

    /// Column sums of an `n x m` matrix as a `1 x m` row.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (n, m) = dims2(self.value(a), "sum_rows")?;
        let d = self.value(a).data();
        let mut out = vec![0.0; m];
        for r in 0..n {
            for (o, v) in out.iter_mut().zip(&d[r * m..(r + 1) * m]) {
                *o += v;
            }
        }
        Ok(self.push(Tensor::row(out), Op::SumRows(a)))
    }

    /// `x + row` with the `1 x m` row added to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (n, _) = dims2(self.value(x), "add_row")?;
        let b = self.broadcast_rows(row, n)?;
        self.add(x, b)
    }

    /// Tensor of the given shape filled with the one-element `s`.
    pub fn fill(&mut self, s: Var, shape: &[usize]) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::Shape {
                op: "fill",
                lhs: self.shape(s).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let c = self.value(s).item();
        Ok(self.push(Tensor::full(shape, c), Op::Fill(s)))
    }

    /// Sum of all entries, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let t = self.value(a).clone().with_shape(shape.to_vec());
        Ok(self.push(t, Op::Reshape(a)))
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Shape {
            op: "concat",
            lhs: vec![],
            rhs: vec![],
        })?;
        let (n, _) = dims2(self.value(first), "concat")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = dims2(self.value(p), "concat")?;
            if r != n {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: self.shape(first).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        Ok(self.push(
            Tensor::matrix(n, total, data).expect("sized"),
            Op::Concat(parts.to_vec()),
        ))
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (n, m) = dims2(self.value(a), "slice_cols")?;
        if start + len > m {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: self.shape(a).to_vec(),
                rhs: vec![start, start + len],
            });
        }
        let d = self.value(a).data();
        let mut data = Vec::with_capacity(n * len);
        for r in 0..n {
            data.extend_from_slice(&d[r * m + start..r * m + start + len]);
        }
        Ok(self.push(
            Tensor::matrix(n, len, data).expect("sized"),
            Op::SliceCols(a, start),
        ))
    }

    /// Adds `left` and `right` zero columns.
    pub fn pad_cols(&mut self, a: Var, left: usize, right: usize) -> Result<Var> {
        let (n, m) = dims2(self.value(a), "pad_cols")?;
        let total = left + m + right;
        let d = self.value(a).data();
        let mut data = vec![0.0; n * total];
        for r in 0..n {
            data[r * total + left..r * total + left + m].copy_from_slice(&d[r * m..(r + 1) * m]);
        }
        Ok(self.push(
            Tensor::matrix(n, total, data).expect("sized"),
            Op::PadCols(a, left),
        ))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, Op::Square(a), |x| x * x)
    }

    /// Squared Euclidean norm of all entries, shape `[1]`.
    pub fn l2_norm_sq(&mut self, a: Var) -> Var {
        let s = self.square(a);
        self.sum(s)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    /// `x * sigmoid(x)`.
    pub fn swish(&mut self, a: Var) -> Var {
        self.map(a, Op::Swish(a), |x| x * sigmoid(x))
    }

    /// Row-wise `out[b,k] = sum_ij M[k,i,j] x[b,i] y[b,j]` for a fixed form `M`.
    pub fn bilinear(&mut self, x: Var, y: Var, form: Arc<BilinearForm>) -> Result<Var> {
        let (n, xd) = dims2(self.value(x), "bilinear")?;
        let (ny, yd) = dims2(self.value(y), "bilinear")?;
        if n != ny || xd != form.x_dim || yd != form.y_dim {
            return Err(Error::Shape {
                op: "bilinear",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(y).to_vec(),
            });
        }
        let (xv, yv) = (self.value(x).data(), self.value(y).data());
        let od = form.out_dim;
        let mut out = vec![0.0; n * od];
        for b in 0..n {
            let (xr, yr) = (&xv[b * xd..(b + 1) * xd], &yv[b * yd..(b + 1) * yd]);
            let orow = &mut out[b * od..(b + 1) * od];
            for &(k, i, j, m) in &form.entries {
                orow[k as usize] += m * xr[i as usize] * yr[j as usize];
            }
        }
        Ok(self.push(
            Tensor::matrix(n, od, out).expect("sized"),
            Op::Bilinear { x, y, form },
        ))
    }

    /// Coordinates (any shape with `coords` entries) to a `rows x cols` matrix.
    pub fn expand(&mut self, beta: Var, map: Arc<dyn LinearMap>) -> Result<Var> {
        if self.value(beta).len() != map.coords() {
            return Err(Error::Shape {
                op: "expand",
                lhs: self.shape(beta).to_vec(),
                rhs: vec![map.coords()],
            });
        }
        let (r, c) = map.out_shape();
        let mut out = vec![0.0; r * c];
        map.expand(self.value(beta).data(), &mut out);
        Ok(self.push(
            Tensor::matrix(r, c, out).expect("sized"),
            Op::Expand { beta, map },
        ))
    }

    /// Adjoint of [`Tape::expand`]: `rows x cols` matrix to a `1 x coords` row.
    pub fn contract(&mut self, w: Var, map: Arc<dyn LinearMap>) -> Result<Var> {
        let (r, c) = map.out_shape();
        if self.value(w).len() != r * c {
            return Err(Error::Shape {
                op: "contract",
                lhs: self.shape(w).to_vec(),
                rhs: vec![r, c],
            });
        }
        let mut out = vec![0.0; map.coords()];
        map.contract(self.value(w).data(), &mut out);
        Ok(self.push(Tensor::row(out), Op::Contract { w, map }))
    }

    fn accumulate(&mut self, slot: &mut Option<Var>, g: Var) {
        *slot = Some(match *slot {
            None => g,
            Some(prev) => self.add(prev, g).expect("gradient shapes agree"),
        });
    }

    /// Gradients of the one-element `out` with respect to each of `wrt`.
    ///
    /// The backward pass is recorded on this tape, so the returned handles
    /// can themselves be differentiated. Inputs that `out` does not depend on
    /// get zero gradients.
    pub fn grad(&mut self, out: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        if self.value(out).len() != 1 {
            return Err(Error::Shape {
                op: "grad (output must be a scalar)",
                lhs: self.shape(out).to_vec(),
                rhs: vec![1],
            });
        }
        let lo = match wrt.iter().map(|v| v.0).min() {
            Some(lo) if lo <= out.0 => lo,
            _ => {
                return Ok(wrt.iter().map(|&w| self.zeros_like(w)).collect());
            }
        };
        let span = out.0 + 1 - lo;
        let mut relevant = vec![false; span];
        for w in wrt {
            if w.0 <= out.0 {
                relevant[w.0 - lo] = true;
            }
        }
        for i in lo..=out.0 {
            if !relevant[i - lo] {
                relevant[i - lo] = self.nodes[i]
                    .op
                    .inputs()
                    .iter()
                    .any(|v| v.0 >= lo && relevant[v.0 - lo]);
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; span];
        if relevant[span - 1] {
            let seed = Tensor::full(self.shape(out), 1.0);
            grads[span - 1] = Some(self.leaf(seed));
        }
        for i in (lo..=out.0).rev() {
            let Some(g) = grads[i - lo] else { continue };
            let op = self.nodes[i].op.clone();
            let need = |v: Var| v.0 >= lo && relevant[v.0 - lo];
            for (input, contribution) in self.backward_rule(Var(i), &op, g, &need)? {
                let mut slot = grads[input.0 - lo];
                self.accumulate(&mut slot, contribution);
                grads[input.0 - lo] = slot;
            }
        }
        Ok(wrt
            .iter()
            .map(|&w| match (w.0 >= lo && w.0 <= out.0).then(|| grads[w.0 - lo]).flatten() {
                Some(g) => g,
                None => self.zeros_like(w),
            })
            .collect())
    }

    fn zeros_like(&mut self, v: Var) -> Var {
        let t = Tensor::zeros(self.shape(v));
        self.leaf(t)
    }

    fn backward_rule(
        &mut self,
        node: Var,
        op: &Op,
        g: Var,
        need: &dyn Fn(Var) -> bool,
    ) -> Result<Vec<(Var, Var)>> {
        let mut out = Vec::new();
        match *op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                if need(a) {
                    let da = match (ta, tb) {
                        (false, false) => self.matmul_t(g, b, false, true)?,
                        (false, true) => self.matmul_t(g, b, false, false)?,
                        (true, false) => self.matmul_t(b, g, false, true)?,
                        (true, true) => self.matmul_t(b, g, true, true)?,
                    };
                    out.push((a, da));
                }
                if need(b) {
                    let db = match (ta, tb) {
                        (false, false) => self.matmul_t(a, g, true, false)?,
                        (false, true) => self.matmul_t(g, a, true, false)?,
                        (true, false) => self.matmul_t(a, g, false, false)?,
                        (true, true) => self.matmul_t(g, a, true, true)?,
                    };
                    out.push((b, db));
                }
            }
            Op::Add(a, b) => {
                if need(a) {
                    out.push((a, g));
                }
                if need(b) {
                    out.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if need(a) {
                    out.push((a, g));
                }
                if need(b) {
                    out.push((b, self.neg(g)));
                }
            }
            Op::Mul(a, b) => {
                if need(a) {
                    out.push((a, self.mul(g, b)?));
                }
                if need(b) {
                    out.push((b, self.mul(g, a)?));
                }
            }
            Op::Scale(a, c) => {
                if need(a) {
                    out.push((a, self.scale(g, c)));
                }
            }
            Op::AddScalar(a) => {
                if need(a) {
                    out.push((a, g));
                }
            }
            Op::ScaleBy(x, s) => {
                if need(x) {
                    out.push((x, self.scale_by(g, s)?));
                }
                if need(s) {
                    let prod = self.mul(g, x)?;
                    let total = self.sum(prod);
                    let shape = self.shape(s).to_vec();
                    out.push((s, self.reshape(total, &shape)?));
                }
            }
            Op::BroadcastRows(a) => {
                if need(a) {
                    out.push((a, self.sum_rows(g)?));
                }
            }
            Op::SumRows(a) => {
                if need(a) {
                    let n = self.shape(a)[0];
                    out.push((a, self.broadcast_rows(g, n)?));
                }
            }
            Op::Fill(s) => {
                if need(s) {
                    let total = self.sum(g);
                    let shape = self.shape(s).to_vec();
                    out.push((s, self.reshape(total, &shape)?));
                }
            }
            Op::Sum(a) => {
                if need(a) {
                    let shape = self.shape(a).to_vec();
                    out.push((a, self.fill(g, &shape)?));
                }
            }
            Op::Reshape(a) => {
                if need(a) {
                    let shape = self.shape(a).to_vec();
                    out.push((a, self.reshape(g, &shape)?));
                }
            }
            Op::Concat(ref parts) => {
                let mut at = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if need(p) {
                        out.push((p, self.slice_cols(g, at, w)?));
                    }
                    at += w;
                }
            }
            Op::SliceCols(a, start) => {
                if need(a) {
                    let total = self.shape(a)[1];
                    let len = self.shape(node)[1];
                    out.push((a, self.pad_cols(g, start, total - start - len)?));
                }
            }
            Op::PadCols(a, left) => {
                if need(a) {
                    let len = self.shape(a)[1];
                    out.push((a, self.slice_cols(g, left, len)?));
                }
            }
            Op::Square(a) => {
                if need(a) {
                    let two_a = self.scale(a, 2.0);
                    out.push((a, self.mul(g, two_a)?));
                }
            }
            Op::Sigmoid(a) => {
                if need(a) {
                    // s (1 - s)
                    let ns = self.scale(node, -1.0);
                    let one_minus = self.add_scalar(ns, 1.0);
                    let ds = self.mul(node, one_minus)?;
                    out.push((a, self.mul(g, ds)?));
                }
            }
            Op::Swish(a) => {
                if need(a) {
                    // s (1 + x (1 - s))
                    let s = self.sigmoid(a);
                    let ns = self.scale(s, -1.0);
                    let one_minus = self.add_scalar(ns, 1.0);
                    let x_om = self.mul(a, one_minus)?;
                    let inner = self.add_scalar(x_om, 1.0);
                    let d = self.mul(s, inner)?;
                    out.push((a, self.mul(g, d)?));
                }
            }
            Op::Bilinear { x, y, ref form } => {
                if need(x) {
                    out.push((x, self.bilinear(g, y, form.wrt_x())?));
                }
                if need(y) {
                    out.push((y, self.bilinear(g, x, form.wrt_y())?));
                }
            }
            Op::Expand { beta, ref map } => {
                if need(beta) {
                    let c = self.contract(g, map.clone())?;
                    let shape = self.shape(beta).to_vec();
                    out.push((beta, self.reshape(c, &shape)?));
                }
            }
            Op::Contract { w, ref map } => {
                if need(w) {
                    let e = self.expand(g, map.clone())?;
                    let shape = self.shape(w).to_vec();
                    out.push((w, self.reshape(e, &shape)?));
                }
            }
        }
        Ok(out)
    }

    /// Gradient values of a scalar with respect to every registered parameter.
    pub fn backward(&mut self, out: Var) -> Result<Gradients> {
        let vars: Vec<Var> = self.params.iter().map(|(_, v)| *v).collect();
        let grads = self.grad(out, &vars)?;
        Ok(Gradients {
            names: self.params.iter().map(|(n, _)| n.clone()).collect(),
            values: grads.iter().map(|&g| self.value(g).clone()).collect(),
        })
    }
}
