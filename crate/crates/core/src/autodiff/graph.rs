//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node to the [`Graph`]; nodes are stored in
//! creation order, which is already a topological order, so the backward
//! sweep simply walks the node list in reverse and visits each node once.

use std::rc::Rc;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Contiguous run of rows `start..start + len` that forms one sequence
/// inside a stacked batch. Convolutions never mix rows across segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

impl Segment {
    /// Splits `lens` into back-to-back segments.
    pub fn from_lengths(lens: &[usize]) -> Vec<Segment> {
        let mut start = 0;
        lens.iter()
            .map(|&len| {
                let s = Segment { start, len };
                start += len;
                s
            })
            .collect()
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Conv1d {
        x: Var,
        kernel: Var,
        taps: usize,
        dilation: usize,
        segments: Rc<[Segment]>,
        cols: Option<Vec<f64>>,
    },
    Gelu(Var),
    Sigmoid(Var),
    Ln(Var),
    Exp(Var),
    Clamp(Var, f64, f64),
    MaskRows(Var, Vec<bool>),
    MaxPoolRows {
        x: Var,
        argmax: Vec<usize>,
    },
    SliceRows(Var, usize),
    SelectRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Var, Var),
    MaskFill(Var, Vec<bool>),
    LogSumExpRows(Var),
    Pick(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    NormalizeRows(Var, f64),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the differentiated output with respect to `v`, or `None`
    /// when `v` does not influence it (or does not require gradients).
    pub fn get(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(self.shapes[v.0].clone(), g.clone()).expect("gradient shape"))
    }

    pub fn raw(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }
}

const NEG_INF: f64 = f64::NEG_INFINITY;

fn gelu_fwd(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log Σ exp(x)`; returns `-inf` for an all `-inf` row.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(NEG_INF, f64::max);
    if m == NEG_INF {
        return NEG_INF;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows() {
            return Err(Error::Shape(format!(
                "matmul {:?} x {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.cols() {
            return Err(Error::Shape(format!(
                "matmul_nt {:?} x {:?}ᵀ",
                ta.shape(),
                tb.shape()
            )));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), true, 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulNt(a, b), rg))
    }

    /// Adds a `[c]` bias to every row of an `[n, c]` matrix.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tx.rank() != 2 || tb.len() != tx.cols() {
            return Err(Error::Shape(format!(
                "bias {:?} on {:?}",
                tb.shape(),
                tx.shape()
            )));
        }
        let mut out = tx.clone();
        let c = tx.cols();
        for row in out.data_mut().chunks_mut(c) {
            row.iter_mut().zip(tb.data()).for_each(|(o, b)| *o += b);
        }
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddBias(x, b), rg))
    }

    /// `x · W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{what} {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let ta = self.value(a);
        let tb = self.value(b);
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(a) || self.rg(b);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(x).map(f);
        let rg = self.rg(x);
        self.push(out, op, rg)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Gelu(x), gelu_fwd)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, Op::Ln(x), f64::ln)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Op::Clamp(x, lo, hi), |v| v.clamp(lo, hi))
    }

    /// One-dimensional convolution along the row (time) axis of `x: [N, C_in]`
    /// with `kernel: [k, C_in, C_out]`, odd `k`, zero "same" padding of
    /// `dilation·(k−1)/2` applied independently inside every segment.
    pub fn conv1d(
        &mut self,
        x: Var,
        kernel: Var,
        dilation: usize,
        segments: Rc<[Segment]>,
    ) -> Result<Var> {
        let (tx, tk) = (self.value(x), self.value(kernel));
        if tk.rank() != 3 || tx.rank() != 2 || tk.shape()[1] != tx.cols() {
            return Err(Error::Shape(format!(
                "conv1d kernel {:?} on input {:?}",
                tk.shape(),
                tx.shape()
            )));
        }
        let (taps, c_in, c_out) = (tk.shape()[0], tk.shape()[1], tk.shape()[2]);
        if taps % 2 == 0 {
            return Err(Error::Shape(format!("conv1d needs an odd kernel, got {taps}")));
        }
        if dilation == 0 {
            return Err(Error::Shape("conv1d dilation must be ≥ 1".into()));
        }
        let n = tx.rows();
        let covered: usize = segments.iter().map(|s| s.len).sum();
        let contiguous = segments
            .iter()
            .scan(0, |pos, s| {
                let ok = s.start == *pos;
                *pos += s.len;
                Some(ok)
            })
            .all(|ok| ok);
        if covered != n || !contiguous {
            return Err(Error::Shape(format!(
                "segments cover {covered} rows of {n} (contiguous: {contiguous})"
            )));
        }
        let width = taps * c_in;
        let mut cols = vec![0.0; n * width];
        let half = (taps / 2) as isize;
        let xd = tx.data();
        for seg in segments.iter() {
            for t in 0..seg.len {
                let dst = &mut cols[(seg.start + t) * width..(seg.start + t + 1) * width];
                for j in 0..taps {
                    let src = t as isize + (j as isize - half) * dilation as isize;
                    if src >= 0 && (src as usize) < seg.len {
                        let r = seg.start + src as usize;
                        dst[j * c_in..(j + 1) * c_in].copy_from_slice(&xd[r * c_in..(r + 1) * c_in]);
                    }
                }
            }
        }
        let mut out = vec![0.0; n * c_out];
        gemm(n, width, c_out, &cols, false, tk.data(), false, 0.0, &mut out);
        let rg = self.rg(x) || self.rg(kernel);
        let op = Op::Conv1d {
            x,
            kernel,
            taps,
            dilation,
            segments,
            cols: rg.then_some(cols),
        };
        Ok(self.push(Tensor::matrix(n, c_out, out)?, op, rg))
    }

    /// Zeroes the rows of a matrix where `keep` is false.
    pub fn mask_rows(&mut self, x: Var, keep: Vec<bool>) -> Result<Var> {
        let tx = self.value(x);
        if keep.len() != tx.rows() {
            return Err(Error::Shape(format!(
                "row mask of {} for {:?}",
                keep.len(),
                tx.shape()
            )));
        }
        let mut out = tx.clone();
        for (i, &k) in keep.iter().enumerate() {
            if !k {
                out.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::MaskRows(x, keep), rg))
    }

    /// Column-wise max over non-overlapping row windows of `kernel` rows;
    /// the final window may be shorter. Ties resolve to the first row.
    pub fn max_pool_rows(&mut self, x: Var, kernel: usize) -> Result<Var> {
        if kernel == 0 {
            return Err(Error::Shape("max pool kernel must be ≥ 1".into()));
        }
        let tx = self.value(x);
        let (t, c) = (tx.rows(), tx.cols());
        if tx.rank() != 2 || t == 0 {
            return Err(Error::Shape(format!("max pool on {:?}", tx.shape())));
        }
        let out_rows = t.div_ceil(kernel);
        let mut out = vec![0.0; out_rows * c];
        let mut argmax = vec![0; out_rows * c];
        for w in 0..out_rows {
            let lo = w * kernel;
            let hi = (lo + kernel).min(t);
            for j in 0..c {
                let mut best = lo;
                let mut bv = tx.get(lo, j);
                for r in lo + 1..hi {
                    let v = tx.get(r, j);
                    if v > bv {
                        bv = v;
                        best = r;
                    }
                }
                out[w * c + j] = bv;
                argmax[w * c + j] = best;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::matrix(out_rows, c, out)?,
            Op::MaxPoolRows { x, argmax },
            rg,
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 || start + len > tx.rows() {
            return Err(Error::Shape(format!(
                "rows {start}..{} of {:?}",
                start + len,
                tx.shape()
            )));
        }
        let out = tx.slice_rows(start, len);
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceRows(x, start), rg))
    }

    pub fn select_rows(&mut self, x: Var, idx: Vec<usize>) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 || idx.iter().any(|&i| i >= tx.rows()) {
            return Err(Error::Shape(format!("row selection out of {:?}", tx.shape())));
        }
        let c = tx.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in &idx {
            data.extend_from_slice(tx.row(i));
        }
        let out = Tensor::matrix(idx.len(), c, data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::SelectRows(x, idx), rg))
    }

    /// Stacks matrices (or rank-1 vectors, treated as single rows) along rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::vstack(&tensors)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(Error::Shape(format!(
                "concat_cols {:?} | {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (r, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let out = Tensor::matrix(r, ca + cb, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    /// Replaces entries where `mask` is true with `-inf` (no gradient flows there).
    pub fn mask_fill_neg_inf(&mut self, x: Var, mask: Vec<bool>) -> Result<Var> {
        let tx = self.value(x);
        if mask.len() != tx.len() {
            return Err(Error::Shape("mask length".into()));
        }
        let mut out = tx.clone();
        for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
            if m {
                *v = NEG_INF;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(out, Op::MaskFill(x, mask), rg))
    }

    /// Row-wise `log Σ exp` of an `[n, m]` matrix, giving `[n]`.
    pub fn logsumexp_rows(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let out: Vec<f64> = (0..tx.rows()).map(|i| logsumexp(tx.row(i))).collect();
        let rg = self.rg(x);
        self.push(Tensor::vector(out), Op::LogSumExpRows(x), rg)
    }

    /// Picks `x[i, idx[i]]` from every row, giving `[n]`.
    pub fn pick(&mut self, x: Var, idx: Vec<usize>) -> Result<Var> {
        let tx = self.value(x);
        if idx.len() != tx.rows() || idx.iter().any(|&j| j >= tx.cols()) {
            return Err(Error::Shape(format!("pick out of {:?}", tx.shape())));
        }
        let out: Vec<f64> = idx.iter().enumerate().map(|(i, &j)| tx.get(i, j)).collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::vector(out), Op::Pick(x, idx), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// `x_i / (‖x_i‖ + eps)` for every row.
    pub fn normalize_rows(&mut self, x: Var, eps: f64) -> Var {
        let mut out = self.value(x).clone();
        let c = out.cols();
        for row in out.data_mut().chunks_mut(c) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt() + eps;
            row.iter_mut().for_each(|v| *v /= norm);
        }
        let rg = self.rg(x);
        self.push(out, Op::NormalizeRows(x, eps), rg)
    }

    /// Runs the backward sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got {:?}",
                self.shape(output)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        if self.nodes[output.0].requires_grad {
            grads[output.0] = Some(vec![1.0]);
        }
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if let Some(ga) = self.acc(grads, *a) {
                    // dA = G · Bᵀ
                    gemm(m, n, k, g, false, tb.data(), true, 1.0, ga);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    // dB = Aᵀ · G
                    gemm(k, m, n, ta.data(), true, g, false, 1.0, gb);
                }
            }
            Op::MatMulNt(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
                if let Some(ga) = self.acc(grads, *a) {
                    // dA = G · B
                    gemm(m, n, k, g, false, tb.data(), false, 1.0, ga);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    // dB = Gᵀ · A
                    gemm(n, m, k, g, true, ta.data(), false, 1.0, gb);
                }
            }
            Op::AddBias(x, b) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
                let c = out.cols();
                if let Some(gb) = self.acc(grads, *b) {
                    for row in g.chunks(c) {
                        gb.iter_mut().zip(row).for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(gv) = self.acc(grads, *v) {
                        gv.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(d, s)| *d -= s);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    for ((d, s), y) in ga.iter_mut().zip(g).zip(tb) {
                        *d += s * y;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((d, s), x) in gb.iter_mut().zip(g).zip(ta) {
                        *d += s * x;
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(d, s)| *d += s * c);
                }
            }
            Op::Conv1d {
                x,
                kernel,
                taps,
                dilation,
                segments,
                cols,
            } => {
                let cols = cols.as_ref().expect("conv columns are kept when gradients are needed");
                let tk = self.value(*kernel);
                let n = out.rows();
                let c_out = out.cols();
                let c_in = tk.shape()[1];
                let width = taps * c_in;
                if let Some(gk) = self.acc(grads, *kernel) {
                    // dK = colsᵀ · G
                    gemm(width, n, c_out, cols, true, g, false, 1.0, gk);
                }
                if self.nodes[x.0].requires_grad {
                    let mut dcols = vec![0.0; n * width];
                    gemm(n, c_out, width, g, false, tk.data(), true, 0.0, &mut dcols);
                    let gx = self.acc(grads, *x).expect("requires grad");
                    let half = (taps / 2) as isize;
                    for seg in segments.iter() {
                        for t in 0..seg.len {
                            let src_row = &dcols[(seg.start + t) * width..(seg.start + t + 1) * width];
                            for j in 0..*taps {
                                let src = t as isize + (j as isize - half) * *dilation as isize;
                                if src >= 0 && (src as usize) < seg.len {
                                    let r = seg.start + src as usize;
                                    let dst = &mut gx[r * c_in..(r + 1) * c_in];
                                    dst.iter_mut()
                                        .zip(&src_row[j * c_in..(j + 1) * c_in])
                                        .for_each(|(d, s)| *d += s);
                                }
                            }
                        }
                    }
                }
            }
            Op::Gelu(x) => {
                let tx = self.value(*x).data();
                if let Some(gx) = self.acc(grads, *x) {
                    for ((d, s), &v) in gx.iter_mut().zip(g).zip(tx) {
                        *d += s * gelu_grad(v);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for ((d, s), &y) in gx.iter_mut().zip(g).zip(out.data()) {
                        *d += s * y * (1.0 - y);
                    }
                }
            }
            Op::Ln(x) => {
                let tx = self.value(*x).data();
                if let Some(gx) = self.acc(grads, *x) {
                    for ((d, s), &v) in gx.iter_mut().zip(g).zip(tx) {
                        *d += s / v;
                    }
                }
            }
            Op::Exp(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for ((d, s), &y) in gx.iter_mut().zip(g).zip(out.data()) {
                        *d += s * y;
                    }
                }
            }
            Op::Clamp(x, lo, hi) => {
                let tx = self.value(*x).data();
                if let Some(gx) = self.acc(grads, *x) {
                    for ((d, s), &v) in gx.iter_mut().zip(g).zip(tx) {
                        if v >= *lo && v <= *hi {
                            *d += s;
                        }
                    }
                }
            }
            Op::MaskRows(x, keep) => {
                let c = out.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, &k) in keep.iter().enumerate() {
                        if k {
                            gx[r * c..(r + 1) * c]
                                .iter_mut()
                                .zip(&g[r * c..(r + 1) * c])
                                .for_each(|(d, s)| *d += s);
                        }
                    }
                }
            }
            Op::MaxPoolRows { x, argmax } => {
                let c = out.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (idx, &src) in argmax.iter().enumerate() {
                        gx[src * c + idx % c] += g[idx];
                    }
                }
            }
            Op::SliceRows(x, start) => {
                let c = out.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    gx[start * c..start * c + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(d, s)| *d += s);
                }
            }
            Op::SelectRows(x, idx) => {
                let c = out.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (k, &r) in idx.iter().enumerate() {
                        gx[r * c..(r + 1) * c]
                            .iter_mut()
                            .zip(&g[k * c..(k + 1) * c])
                            .for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if let Some(gp) = self.acc(grads, *p) {
                        gp.iter_mut()
                            .zip(&g[offset..offset + len])
                            .for_each(|(d, s)| *d += s);
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let w = ca + cb;
                if let Some(ga) = self.acc(grads, *a) {
                    for (r, row) in ga.chunks_mut(ca).enumerate() {
                        row.iter_mut().zip(&g[r * w..r * w + ca]).for_each(|(d, s)| *d += s);
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (r, row) in gb.chunks_mut(cb).enumerate() {
                        row.iter_mut()
                            .zip(&g[r * w + ca..(r + 1) * w])
                            .for_each(|(d, s)| *d += s);
                    }
                }
            }
            Op::MaskFill(x, mask) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for ((d, s), &m) in gx.iter_mut().zip(g).zip(mask) {
                        if !m {
                            *d += s;
                        }
                    }
                }
            }
            Op::LogSumExpRows(x) => {
                let tx = self.value(*x);
                let c = tx.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, &lse) in out.data().iter().enumerate() {
                        if lse == NEG_INF {
                            continue;
                        }
                        for j in 0..c {
                            let v = tx.data()[r * c + j];
                            if v != NEG_INF {
                                gx[r * c + j] += g[r] * (v - lse).exp();
                            }
                        }
                    }
                }
            }
            Op::Pick(x, idx) => {
                let c = self.value(*x).cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, &j) in idx.iter().enumerate() {
                        gx[r * c + j] += g[r];
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    let s = g[0] / gx.len() as f64;
                    gx.iter_mut().for_each(|d| *d += s);
                }
            }
            Op::NormalizeRows(x, eps) => {
                let tx = self.value(*x);
                let c = tx.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for r in 0..tx.rows() {
                        let xr = tx.row(r);
                        let gr = &g[r * c..(r + 1) * c];
                        let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                        let denom = norm + eps;
                        // y = x / (‖x‖ + eps);  dy/dx = I/d − x xᵀ / (‖x‖ d²)
                        let dot: f64 = xr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        let coef = if norm > 0.0 { dot / (norm * denom * denom) } else { 0.0 };
                        for j in 0..c {
                            gx[r * c + j] += gr[j] / denom - coef * xr[j];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn linear_identity_and_hand_arithmetic() {
        let mut g = Graph::new();
        let x = g.constant(t(2, 2, &[1., 2., 3., 4.]));
        let w = g.param(Tensor::identity(2));
        let b = g.param(Tensor::zeros(&[2]));
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1., 2., 3., 4.]);

        let mut g = Graph::new();
        let x = g.constant(t(1, 2, &[1., 2.]));
        let w = g.param(t(2, 1, &[1., 1.]));
        let b = g.param(Tensor::vector(vec![3.]));
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[6.]);
    }

    #[test]
    fn linear_rejects_shape_mismatch() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 3]));
        let w = g.param(Tensor::zeros(&[2, 4]));
        assert!(g.matmul(x, w).is_err());
    }

    #[test]
    fn conv_identity_and_zero_padding() {
        // k = 1 identity channel map
        let mut g = Graph::new();
        let x = g.constant(t(3, 2, &[1., 2., 3., 4., 5., 6.]));
        let k = g.param(Tensor::new(vec![1, 2, 2], vec![1., 0., 0., 1.]).unwrap());
        let segs: Rc<[Segment]> = Segment::from_lengths(&[3]).into();
        let y = g.conv1d(x, k, 1, segs).unwrap();
        assert_eq!(g.value(y).data(), &[1., 2., 3., 4., 5., 6.]);

        // [0,1,0] * [1,1,1] with zero padding
        let mut g = Graph::new();
        let x = g.constant(t(3, 1, &[0., 1., 0.]));
        let k = g.param(Tensor::new(vec![3, 1, 1], vec![1., 1., 1.]).unwrap());
        let segs: Rc<[Segment]> = Segment::from_lengths(&[3]).into();
        let y = g.conv1d(x, k, 1, segs).unwrap();
        assert_eq!(g.value(y).data(), &[1., 1., 1.]);
    }

    #[test]
    fn conv_does_not_leak_across_segments() {
        let mut g = Graph::new();
        let x = g.constant(t(4, 1, &[1., 2., 3., 4.]));
        let k = g.param(Tensor::new(vec![3, 1, 1], vec![1., 1., 1.]).unwrap());
        let segs: Rc<[Segment]> = Segment::from_lengths(&[2, 2]).into();
        let y = g.conv1d(x, k, 1, segs).unwrap();
        assert_eq!(g.value(y).data(), &[3., 3., 7., 7.]);
    }

    #[test]
    fn gelu_fixed_points() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.0, 10.0]));
        let y = g.gelu(x);
        assert_eq!(g.value(y).data()[0], 0.0);
        assert!((g.value(y).data()[1] - 10.0).abs() < 1e-6);
    }

    #[test]
    fn max_pool_hand_cases() {
        let mut g = Graph::new();
        let x = g.constant(t(3, 1, &[1., 3., 2.]));
        let y = g.max_pool_rows(x, 3).unwrap();
        assert_eq!(g.value(y).data(), &[3.]);
        let y1 = g.max_pool_rows(x, 1).unwrap();
        assert_eq!(g.value(y1).data(), &[1., 3., 2.]);
        let y2 = g.max_pool_rows(x, 2).unwrap();
        assert_eq!(g.value(y2).data(), &[3., 2.]);
    }

    #[test]
    fn max_pool_gradient_goes_to_first_argmax() {
        let mut g = Graph::new();
        let x = g.param(t(4, 1, &[2., 2., 1., 5.]));
        let y = g.max_pool_rows(x, 2).unwrap();
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.raw(x).unwrap(), &[1., 0., 0., 1.]);
    }

    #[test]
    fn logsumexp_is_stable() {
        assert!((logsumexp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((logsumexp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let c = g.constant(Tensor::vector(vec![3.0, 4.0]));
        let p = g.mul(x, c).unwrap();
        let s = g.sum(p);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.raw(x).unwrap(), &[3.0, 4.0]);
        assert!(grads.get(c).is_none());
    }
}
