//! Reverse-mode automatic differentiation over real tensors.
//!
//! A [`Tape`] records every operation as a node; [`Tensor`] handles index into
//! it. Calling [`Tensor::backward`] on a scalar walks the tape once in reverse
//! creation order, which is always a valid topological order because nodes can
//! only depend on earlier nodes. Gradients accumulate additively, so a tensor
//! used by several consumers receives the sum of their contributions.
//!
//! Complex quantities ride on top as (real, imaginary) tensor pairs; see
//! [`complex`]. Optimizer state lives in [`optim`].

pub mod complex;
pub mod optim;

use std::cell::RefCell;
use std::rc::Rc;

use crate::{Error, Result};

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn shape_str(shape: &[usize]) -> String {
    format!("[{}]", shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","))
}

fn autodiff_err(kernel: &str, detail: String) -> Error {
    Error::Autodiff(format!("{kernel}: {detail}"))
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    ScalarMul(usize, f64),
    Mul(usize, usize),
    Matmul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Concat { parts: Vec<usize>, axis: usize },
    Slice { src: usize, axis: usize, start: usize, len: usize },
    Relu(usize),
    Sigmoid(usize),
    Log(usize),
    Abs(usize),
    Clamp { src: usize, lo: f64, hi: f64 },
    MaxReduce(usize),
    MeanReduce(usize),
    AddBias { mat: usize, bias: usize },
    MulRowVec { mat: usize, vec: usize },
    AddScalar { x: usize, s: usize },
    MulScalar { x: usize, s: usize },
    Conv2d { input: usize, weight: usize, bias: usize, stride: usize, pad: usize },
    ConvTranspose2d { input: usize, weight: usize, bias: usize, stride: usize, pad: usize },
    Cabs { re: usize, im: usize },
    Solve { a: usize, b: usize, lu: Rc<LuFactors> },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
struct TapeInner {
    nodes: Vec<Node>,
}

/// Shared recording context. Cloning is cheap (reference-counted).
#[derive(Debug, Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

/// Handle to one tape node.
#[derive(Debug, Clone)]
pub struct Tensor {
    tape: Tape,
    idx: usize,
    shape: Vec<usize>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, shape: Vec<usize>, values: Vec<f64>, requires_grad: bool, op: Op) -> Tensor {
        debug_assert_eq!(numel(&shape), values.len());
        let mut inner = self.inner.borrow_mut();
        let idx = inner.nodes.len();
        inner.nodes.push(Node { shape: shape.clone(), values, grad: None, requires_grad, op });
        Tensor { tape: self.clone(), idx, shape }
    }

    /// New leaf tensor. `requires_grad` marks it as a differentiation target.
    pub fn leaf(&self, shape: &[usize], values: Vec<f64>, requires_grad: bool) -> Result<Tensor> {
        if numel(shape) != values.len() {
            return Err(autodiff_err(
                "leaf",
                format!("shape {} needs {} values, got {}", shape_str(shape), numel(shape), values.len()),
            ));
        }
        Ok(self.push(shape.to_vec(), values, requires_grad, Op::Leaf))
    }

    /// Constant leaf (no gradient).
    pub fn constant(&self, shape: &[usize], values: Vec<f64>) -> Result<Tensor> {
        self.leaf(shape, values, false)
    }

    pub fn scalar(&self, value: f64) -> Tensor {
        self.push(vec![1], vec![value], false, Op::Leaf)
    }

    fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

/// Real LU factorization with partial pivoting, kept by solve nodes so the
/// backward pass can reuse it.
#[derive(Debug)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
    pub condition_proxy: f64,
}

impl LuFactors {
    fn factor(a: &[f64], n: usize) -> Result<Self> {
        let mut lu = a.to_vec();
        let mut piv = Vec::with_capacity(n);
        for col in 0..n {
            let mut best = col;
            let mut best_mag = lu[col * n + col].abs();
            for r in col + 1..n {
                let mag = lu[r * n + col].abs();
                if mag > best_mag {
                    best = r;
                    best_mag = mag;
                }
            }
            if best != col {
                for c in 0..n {
                    lu.swap(col * n + c, best * n + c);
                }
            }
            piv.push(best);
            let pivot = lu[col * n + col];
            if pivot == 0.0 {
                return Err(Error::numerical(format!("solve: singular matrix at column {col}")));
            }
            for r in col + 1..n {
                let factor = lu[r * n + col] / pivot;
                lu[r * n + col] = factor;
                for c in col + 1..n {
                    lu[r * n + c] -= factor * lu[col * n + c];
                }
            }
        }
        let mut dmax = 0.0f64;
        let mut dmin = f64::INFINITY;
        for i in 0..n {
            let d = lu[i * n + i].abs();
            dmax = dmax.max(d);
            dmin = dmin.min(d);
        }
        let condition_proxy = if dmin == 0.0 { f64::INFINITY } else { dmax / dmin };
        if !(condition_proxy < 1e12) {
            return Err(Error::numerical(format!(
                "solve: matrix numerically singular, condition estimate {condition_proxy:.3e}"
            )));
        }
        Ok(LuFactors { n, lu, piv, condition_proxy })
    }

    /// Solve `A x = b` in place for one column.
    fn solve_col(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let p = self.piv[i];
            if p != i {
                x.swap(i, p);
            }
        }
        for i in 1..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
    }

    /// Solve `A^T y = c` in place for one column, reusing the same factors:
    /// with `L U = P A`, solve `U^T z = c`, then `L^T v = z`, then apply the
    /// recorded swaps in reverse.
    fn solve_transposed_col(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[j * n + i] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[j * n + i] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let p = self.piv[i];
            if p != i {
                x.swap(i, p);
            }
        }
    }

    fn solve_mat(&self, b: &[f64], cols: usize) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * cols];
        let mut col = vec![0.0; n];
        for c in 0..cols {
            for r in 0..n {
                col[r] = b[r * cols + c];
            }
            self.solve_col(&mut col);
            for r in 0..n {
                out[r * cols + c] = col[r];
            }
        }
        out
    }

    fn solve_transposed_mat(&self, b: &[f64], cols: usize) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * cols];
        let mut col = vec![0.0; n];
        for c in 0..cols {
            for r in 0..n {
                col[r] = b[r * cols + c];
            }
            self.solve_transposed_col(&mut col);
            for r in 0..n {
                out[r * cols + c] = col[r];
            }
        }
        out
    }
}

/// Outer/inner block sizes for iterating an axis of a row-major tensor.
fn axis_blocks(shape: &[usize], axis: usize) -> (usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, inner)
}

impl Tensor {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.shape)
    }

    pub fn values(&self) -> Vec<f64> {
        self.tape.inner.borrow().nodes[self.idx].values.clone()
    }

    /// Value of a one-element tensor.
    pub fn scalar_value(&self) -> f64 {
        let inner = self.tape.inner.borrow();
        debug_assert_eq!(inner.nodes[self.idx].values.len(), 1);
        inner.nodes[self.idx].values[0]
    }

    /// Gradient accumulated by the latest backward pass, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.tape.inner.borrow().nodes[self.idx].grad.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.idx].requires_grad
    }

    /// The tape this tensor lives on; new nodes must be recorded there.
    pub fn tape_handle(&self) -> Tape {
        self.tape.clone()
    }

    fn check_mate(&self, other: &Tensor, kernel: &str) -> Result<()> {
        if !self.tape.same_tape(&other.tape) {
            return Err(autodiff_err(kernel, "operands recorded on different tapes".to_string()));
        }
        Ok(())
    }

    fn binary_elementwise(&self, other: &Tensor, kernel: &'static str) -> Result<(Vec<f64>, Vec<f64>, bool)> {
        self.check_mate(other, kernel)?;
        if self.shape != other.shape {
            return Err(autodiff_err(
                kernel,
                format!("shape mismatch {} vs {}", shape_str(&self.shape), shape_str(&other.shape)),
            ));
        }
        let a = self.values();
        let b = other.values();
        let rg = self.requires_grad() || other.requires_grad();
        Ok((a, b, rg))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b, rg) = self.binary_elementwise(other, "add")?;
        let vals = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        Ok(self.tape.push(self.shape.clone(), vals, rg, Op::Add(self.idx, other.idx)))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b, rg) = self.binary_elementwise(other, "sub")?;
        let vals = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        Ok(self.tape.push(self.shape.clone(), vals, rg, Op::Sub(self.idx, other.idx)))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b, rg) = self.binary_elementwise(other, "mul")?;
        let vals = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Ok(self.tape.push(self.shape.clone(), vals, rg, Op::Mul(self.idx, other.idx)))
    }

    pub fn scalar_mul(&self, c: f64) -> Tensor {
        let vals = self.values().iter().map(|x| x * c).collect();
        self.tape.push(self.shape.clone(), vals, self.requires_grad(), Op::ScalarMul(self.idx, c))
    }

    pub fn neg(&self) -> Tensor {
        self.scalar_mul(-1.0)
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.check_mate(other, "matmul")?;
        if self.shape.len() != 2 || other.shape.len() != 2 {
            return Err(autodiff_err(
                "matmul",
                format!("expects 2-d operands, got {} x {}", shape_str(&self.shape), shape_str(&other.shape)),
            ));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(autodiff_err(
                "matmul",
                format!("inner dimensions {k} vs {k2} ({} x {})", shape_str(&self.shape), shape_str(&other.shape)),
            ));
        }
        let a = self.values();
        let b = other.values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for kk in 0..k {
                let aik = a[i * k + kk];
                if aik == 0.0 {
                    continue;
                }
                let brow = &b[kk * n..(kk + 1) * n];
                for j in 0..n {
                    orow[j] += aik * brow[j];
                }
            }
        }
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(vec![m, n], out, rg, Op::Matmul(self.idx, other.idx)))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.shape.len() != 2 {
            return Err(autodiff_err("transpose", format!("expects a 2-d tensor, got {}", shape_str(&self.shape))));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let a = self.values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = a[i * n + j];
            }
        }
        Ok(self.tape.push(vec![n, m], out, self.requires_grad(), Op::Transpose(self.idx)))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(autodiff_err(
                "reshape",
                format!("cannot view {} as {}", shape_str(&self.shape), shape_str(shape)),
            ));
        }
        Ok(self.tape.push(shape.to_vec(), self.values(), self.requires_grad(), Op::Reshape(self.idx)))
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(autodiff_err("concat", "needs at least one operand".to_string()));
        }
        let first = parts[0];
        let rank = first.shape.len();
        if axis >= rank {
            return Err(autodiff_err("concat", format!("axis {axis} out of range for rank {rank}")));
        }
        let mut axis_total = 0;
        for p in parts {
            first.check_mate(p, "concat")?;
            if p.shape.len() != rank {
                return Err(autodiff_err(
                    "concat",
                    format!("rank mismatch {} vs {}", shape_str(&first.shape), shape_str(&p.shape)),
                ));
            }
            for d in 0..rank {
                if d != axis && p.shape[d] != first.shape[d] {
                    return Err(autodiff_err(
                        "concat",
                        format!("shape mismatch {} vs {}", shape_str(&first.shape), shape_str(&p.shape)),
                    ));
                }
            }
            axis_total += p.shape[axis];
        }
        let mut shape = first.shape.clone();
        shape[axis] = axis_total;
        let (outer, inner) = axis_blocks(&shape, axis);
        let mut out = vec![0.0; numel(&shape)];
        let mut offset = 0;
        for p in parts {
            let vals = p.values();
            let alen = p.shape[axis];
            for o in 0..outer {
                let src = &vals[o * alen * inner..(o + 1) * alen * inner];
                let dst_start = (o * axis_total + offset) * inner;
                out[dst_start..dst_start + alen * inner].copy_from_slice(src);
            }
            offset += alen;
        }
        let rg = parts.iter().any(|p| p.requires_grad());
        let op = Op::Concat { parts: parts.iter().map(|p| p.idx).collect(), axis };
        Ok(first.tape.push(shape, out, rg, op))
    }

    /// Contiguous sub-range along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let rank = self.shape.len();
        if axis >= rank {
            return Err(autodiff_err("slice", format!("axis {axis} out of range for rank {rank}")));
        }
        if start + len > self.shape[axis] || len == 0 {
            return Err(autodiff_err(
                "slice",
                format!("range {start}..{} out of bounds for axis size {}", start + len, self.shape[axis]),
            ));
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        let (outer, inner) = axis_blocks(&self.shape, axis);
        let alen = self.shape[axis];
        let vals = self.values();
        let mut out = vec![0.0; numel(&shape)];
        for o in 0..outer {
            let src_start = (o * alen + start) * inner;
            out[o * len * inner..(o + 1) * len * inner]
                .copy_from_slice(&vals[src_start..src_start + len * inner]);
        }
        Ok(self.tape.push(
            shape,
            out,
            self.requires_grad(),
            Op::Slice { src: self.idx, axis, start, len },
        ))
    }

    pub fn relu(&self) -> Tensor {
        let vals = self.values().iter().map(|&x| x.max(0.0)).collect();
        self.tape.push(self.shape.clone(), vals, self.requires_grad(), Op::Relu(self.idx))
    }

    pub fn sigmoid(&self) -> Tensor {
        let vals = self.values().iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect();
        self.tape.push(self.shape.clone(), vals, self.requires_grad(), Op::Sigmoid(self.idx))
    }

    pub fn log(&self) -> Tensor {
        let vals = self.values().iter().map(|&x| x.ln()).collect();
        self.tape.push(self.shape.clone(), vals, self.requires_grad(), Op::Log(self.idx))
    }

    pub fn abs(&self) -> Tensor {
        let vals = self.values().iter().map(|&x| x.abs()).collect();
        self.tape.push(self.shape.clone(), vals, self.requires_grad(), Op::Abs(self.idx))
    }

    /// Elementwise clamp to `[lo, hi]`; gradient passes inside the closed
    /// interval and is zero where the value was clipped.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        let vals = self.values().iter().map(|&x| x.clamp(lo, hi)).collect();
        self.tape.push(self.shape.clone(), vals, self.requires_grad(), Op::Clamp { src: self.idx, lo, hi })
    }

    /// Maximum over all entries, as a `[1]` tensor. Gradient routes to the
    /// first maximizing entry.
    pub fn max_reduce(&self) -> Tensor {
        let m = self.values().iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        self.tape.push(vec![1], vec![m], self.requires_grad(), Op::MaxReduce(self.idx))
    }

    /// Mean over all entries, as a `[1]` tensor.
    pub fn mean_reduce(&self) -> Tensor {
        let vals = self.values();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        self.tape.push(vec![1], vec![m], self.requires_grad(), Op::MeanReduce(self.idx))
    }

    /// Row-broadcast addition: `[m, n] + [n]`.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        self.check_mate(bias, "add_bias")?;
        if self.shape.len() != 2 || bias.shape.len() != 1 || bias.shape[0] != self.shape[1] {
            return Err(autodiff_err(
                "add_bias",
                format!("expects [m,n] + [n], got {} + {}", shape_str(&self.shape), shape_str(&bias.shape)),
            ));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let a = self.values();
        let b = bias.values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = a[i * n + j] + b[j];
            }
        }
        let rg = self.requires_grad() || bias.requires_grad();
        Ok(self.tape.push(vec![m, n], out, rg, Op::AddBias { mat: self.idx, bias: bias.idx }))
    }

    /// Row-broadcast scaling: `[m, n] * [n]`.
    pub fn mul_rowvec(&self, v: &Tensor) -> Result<Tensor> {
        self.check_mate(v, "mul_rowvec")?;
        if self.shape.len() != 2 || v.shape.len() != 1 || v.shape[0] != self.shape[1] {
            return Err(autodiff_err(
                "mul_rowvec",
                format!("expects [m,n] * [n], got {} * {}", shape_str(&self.shape), shape_str(&v.shape)),
            ));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let a = self.values();
        let b = v.values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = a[i * n + j] * b[j];
            }
        }
        let rg = self.requires_grad() || v.requires_grad();
        Ok(self.tape.push(vec![m, n], out, rg, Op::MulRowVec { mat: self.idx, vec: v.idx }))
    }

    /// Broadcast addition of a `[1]` tensor.
    pub fn add_scalar_t(&self, s: &Tensor) -> Result<Tensor> {
        self.check_mate(s, "add_scalar_t")?;
        if s.numel() != 1 {
            return Err(autodiff_err("add_scalar_t", format!("scalar operand has shape {}", shape_str(&s.shape))));
        }
        let sv = s.scalar_value();
        let vals = self.values().iter().map(|x| x + sv).collect();
        let rg = self.requires_grad() || s.requires_grad();
        Ok(self.tape.push(self.shape.clone(), vals, rg, Op::AddScalar { x: self.idx, s: s.idx }))
    }

    /// Broadcast multiplication by a `[1]` tensor.
    pub fn mul_scalar_t(&self, s: &Tensor) -> Result<Tensor> {
        self.check_mate(s, "mul_scalar_t")?;
        if s.numel() != 1 {
            return Err(autodiff_err("mul_scalar_t", format!("scalar operand has shape {}", shape_str(&s.shape))));
        }
        let sv = s.scalar_value();
        let vals = self.values().iter().map(|x| x * sv).collect();
        let rg = self.requires_grad() || s.requires_grad();
        Ok(self.tape.push(self.shape.clone(), vals, rg, Op::MulScalar { x: self.idx, s: s.idx }))
    }

    /// 2-d convolution: input `[c_in, h, w]`, weight `[c_out, c_in, kh, kw]`,
    /// bias `[c_out]`.
    pub fn conv2d(&self, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        self.check_mate(weight, "conv2d")?;
        self.check_mate(bias, "conv2d")?;
        if self.shape.len() != 3 || weight.shape.len() != 4 || bias.shape.len() != 1 {
            return Err(autodiff_err(
                "conv2d",
                format!(
                    "expects input [c,h,w], weight [o,c,kh,kw], bias [o]; got {} {} {}",
                    shape_str(&self.shape),
                    shape_str(&weight.shape),
                    shape_str(&bias.shape)
                ),
            ));
        }
        let (c_in, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        let (c_out, wc_in, kh, kw) = (weight.shape[0], weight.shape[1], weight.shape[2], weight.shape[3]);
        if wc_in != c_in || bias.shape[0] != c_out || stride == 0 {
            return Err(autodiff_err(
                "conv2d",
                format!(
                    "channel/stride mismatch: input {}, weight {}, bias {}, stride {stride}",
                    shape_str(&self.shape),
                    shape_str(&weight.shape),
                    shape_str(&bias.shape)
                ),
            ));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(autodiff_err(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {}x{}", h + 2 * pad, w + 2 * pad),
            ));
        }
        let h_out = (h + 2 * pad - kh) / stride + 1;
        let w_out = (w + 2 * pad - kw) / stride + 1;
        let x = self.values();
        let wt = weight.values();
        let b = bias.values();
        let mut out = vec![0.0; c_out * h_out * w_out];
        for co in 0..c_out {
            for oh in 0..h_out {
                for ow in 0..w_out {
                    let mut acc = b[co];
                    for ci in 0..c_in {
                        for ky in 0..kh {
                            let ih = oh * stride + ky;
                            if ih < pad || ih - pad >= h {
                                continue;
                            }
                            let ih = ih - pad;
                            for kx in 0..kw {
                                let iw = ow * stride + kx;
                                if iw < pad || iw - pad >= w {
                                    continue;
                                }
                                let iw = iw - pad;
                                acc += x[(ci * h + ih) * w + iw] * wt[((co * c_in + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[(co * h_out + oh) * w_out + ow] = acc;
                }
            }
        }
        let rg = self.requires_grad() || weight.requires_grad() || bias.requires_grad();
        Ok(self.tape.push(
            vec![c_out, h_out, w_out],
            out,
            rg,
            Op::Conv2d { input: self.idx, weight: weight.idx, bias: bias.idx, stride, pad },
        ))
    }

    /// Transposed 2-d convolution: input `[c_in, h, w]`, weight
    /// `[c_in, c_out, kh, kw]`, bias `[c_out]`. Output spatial size is
    /// `(h - 1) * stride - 2 pad + kh + out_pad`.
    pub fn conv2d_transpose(
        &self,
        weight: &Tensor,
        bias: &Tensor,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Result<Tensor> {
        self.check_mate(weight, "conv2d_transpose")?;
        self.check_mate(bias, "conv2d_transpose")?;
        if self.shape.len() != 3 || weight.shape.len() != 4 || bias.shape.len() != 1 {
            return Err(autodiff_err(
                "conv2d_transpose",
                format!(
                    "expects input [c,h,w], weight [c,o,kh,kw], bias [o]; got {} {} {}",
                    shape_str(&self.shape),
                    shape_str(&weight.shape),
                    shape_str(&bias.shape)
                ),
            ));
        }
        let (c_in, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        let (wc_in, c_out, kh, kw) = (weight.shape[0], weight.shape[1], weight.shape[2], weight.shape[3]);
        if wc_in != c_in || bias.shape[0] != c_out || stride == 0 || out_pad >= stride {
            return Err(autodiff_err(
                "conv2d_transpose",
                format!(
                    "channel/stride mismatch: input {}, weight {}, bias {}, stride {stride}, out_pad {out_pad}",
                    shape_str(&self.shape),
                    shape_str(&weight.shape),
                    shape_str(&bias.shape)
                ),
            ));
        }
        let h_out = (h - 1) * stride + kh + out_pad;
        let w_out = (w - 1) * stride + kw + out_pad;
        if h_out < 2 * pad || w_out < 2 * pad {
            return Err(autodiff_err("conv2d_transpose", format!("padding {pad} exceeds output extent")));
        }
        let h_out = h_out - 2 * pad;
        let w_out = w_out - 2 * pad;
        let x = self.values();
        let wt = weight.values();
        let b = bias.values();
        let mut out = vec![0.0; c_out * h_out * w_out];
        for co in 0..c_out {
            for i in 0..h_out * w_out {
                out[co * h_out * w_out + i] = b[co];
            }
        }
        for ci in 0..c_in {
            for ih in 0..h {
                for iw in 0..w {
                    let v = x[(ci * h + ih) * w + iw];
                    if v == 0.0 {
                        continue;
                    }
                    for co in 0..c_out {
                        for ky in 0..kh {
                            let oh = ih * stride + ky;
                            if oh < pad || oh - pad >= h_out {
                                continue;
                            }
                            let oh = oh - pad;
                            for kx in 0..kw {
                                let ow = iw * stride + kx;
                                if ow < pad || ow - pad >= w_out {
                                    continue;
                                }
                                let ow = ow - pad;
                                out[(co * h_out + oh) * w_out + ow] +=
                                    v * wt[((ci * c_out + co) * kh + ky) * kw + kx];
                            }
                        }
                    }
                }
            }
        }
        let rg = self.requires_grad() || weight.requires_grad() || bias.requires_grad();
        Ok(self.tape.push(
            vec![c_out, h_out, w_out],
            out,
            rg,
            Op::ConvTranspose2d {
                input: self.idx,
                weight: weight.idx,
                bias: bias.idx,
                stride,
                pad,
            },
        ))
    }

    /// Elementwise complex magnitude from a (re, im) pair of equal shape.
    pub fn cabs(re: &Tensor, im: &Tensor) -> Result<Tensor> {
        let (a, b, rg) = re.binary_elementwise(im, "cabs")?;
        let vals = a.iter().zip(&b).map(|(x, y)| x.hypot(*y)).collect();
        Ok(re.tape.push(re.shape.clone(), vals, rg, Op::Cabs { re: re.idx, im: im.idx }))
    }

    /// Differentiable real linear solve `X = A^{-1} B` with `A` `[n, n]` and
    /// `B` `[n, m]`. The LU factors are cached for the backward pass, which
    /// costs one more solve against `A^T`.
    pub fn solve(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.check_mate(b, "solve")?;
        if a.shape.len() != 2 || a.shape[0] != a.shape[1] || b.shape.len() != 2 || b.shape[0] != a.shape[0] {
            return Err(autodiff_err(
                "solve",
                format!("expects [n,n] and [n,m], got {} and {}", shape_str(&a.shape), shape_str(&b.shape)),
            ));
        }
        let n = a.shape[0];
        let m = b.shape[1];
        let lu = LuFactors::factor(&a.values(), n)?;
        let x = lu.solve_mat(&b.values(), m);
        let rg = a.requires_grad() || b.requires_grad();
        Ok(a.tape.push(vec![n, m], x, rg, Op::Solve { a: a.idx, b: b.idx, lu: Rc::new(lu) }))
    }

    /// Reverse pass from this scalar. Clears previous gradients on the tape.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(autodiff_err(
                "backward",
                format!("loss must be a scalar, got {}", shape_str(&self.shape)),
            ));
        }
        let inner = &mut *self.tape.inner.borrow_mut();
        for node in inner.nodes.iter_mut() {
            node.grad = None;
        }
        if !inner.nodes[self.idx].requires_grad {
            // Constant loss: every gradient is zero; nothing to propagate.
            return Ok(());
        }
        inner.nodes[self.idx].grad = Some(vec![1.0]);
        for idx in (0..=self.idx).rev() {
            let Some(grad) = inner.nodes[idx].grad.take() else {
                continue;
            };
            let (before, rest) = inner.nodes.split_at_mut(idx);
            let node = &mut rest[0];
            backprop_node(node, &grad, before);
            node.grad = Some(grad);
        }
        Ok(())
    }
}

fn ensure_grad<'a>(node: &'a mut Node) -> Option<&'a mut Vec<f64>> {
    if !node.requires_grad {
        return None;
    }
    if node.grad.is_none() {
        node.grad = Some(vec![0.0; node.values.len()]);
    }
    node.grad.as_mut()
}

/// Scatter `grad` of `node` into its parents (all strictly earlier on the
/// tape, hence inside `before`).
fn backprop_node(node: &mut Node, grad: &[f64], before: &mut [Node]) {
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            let (a, b) = (*a, *b);
            if let Some(g) = ensure_grad(&mut before[a]) {
                for (gi, &d) in g.iter_mut().zip(grad) {
                    *gi += d;
                }
            }
            if let Some(g) = ensure_grad(&mut before[b]) {
                for (gi, &d) in g.iter_mut().zip(grad) {
                    *gi += d;
                }
            }
        }
        Op::Sub(a, b) => {
            let (a, b) = (*a, *b);
            if let Some(g) = ensure_grad(&mut before[a]) {
                for (gi, &d) in g.iter_mut().zip(grad) {
                    *gi += d;
                }
            }
            if let Some(g) = ensure_grad(&mut before[b]) {
                for (gi, &d) in g.iter_mut().zip(grad) {
                    *gi -= d;
                }
            }
        }
        Op::ScalarMul(a, c) => {
            let (a, c) = (*a, *c);
            if let Some(g) = ensure_grad(&mut before[a]) {
                for (gi, &d) in g.iter_mut().zip(grad) {
                    *gi += c * d;
                }
            }
        }
        Op::Mul(a, b) => {
            let (a, b) = (*a, *b);
            let bv = before[b].values.clone();
            if let Some(g) = ensure_grad(&mut before[a]) {
                for i in 0..grad.len() {
                    g[i] += grad[i] * bv[i];
                }
            }
            let av = before[a].values.clone();
            if let Some(g) = ensure_grad(&mut before[b]) {
                for i in 0..grad.len() {
                    g[i] += grad[i] * av[i];
                }
            }
        }
        Op::Matmul(a, b) => {
            let (a, b) = (*a, *b);
            let m = before[a].shape[0];
            let k = before[a].shape[1];
            let n = before[b].shape[1];
            let bv = before[b].values.clone();
            if let Some(g) = ensure_grad(&mut before[a]) {
                // gA[i,k] += sum_j grad[i,j] B[k,j]
                for i in 0..m {
                    for kk in 0..k {
                        let mut acc = 0.0;
                        let grow = &grad[i * n..(i + 1) * n];
                        let brow = &bv[kk * n..(kk + 1) * n];
                        for j in 0..n {
                            acc += grow[j] * brow[j];
                        }
                        g[i * k + kk] += acc;
                    }
                }
            }
            let av = before[a].values.clone();
            if let Some(g) = ensure_grad(&mut before[b]) {
                // gB[k,j] += sum_i A[i,k] grad[i,j]
                for i in 0..m {
                    for kk in 0..k {
                        let aik = av[i * k + kk];
                        if aik == 0.0 {
                            continue;
                        }
                        let grow = &grad[i * n..(i + 1) * n];
                        let gb = &mut g[kk * n..(kk + 1) * n];
                        for j in 0..n {
                            gb[j] += aik * grow[j];
                        }
                    }
                }
            }
        }
        Op::Transpose(a) => {
            let a = *a;
            let m = before[a].shape[0];
            let n = before[a].shape[1];
            if let Some(g) = ensure_grad(&mut before[a]) {
                for i in 0..m {
                    for j in 0..n {
                        g[i * n + j] += grad[j * m + i];
                    }
                }
            }
        }
        Op::Reshape(a) => {
            let a = *a;
            if let Some(g) = ensure_grad(&mut before[a]) {
                for (gi, &d) in g.iter_mut().zip(grad) {
                    *gi += d;
                }
            }
        }
        Op::Concat { parts, axis } => {
            let parts = parts.clone();
            let axis = *axis;
            let axis_total = node.shape[axis];
            let (outer, inner) = axis_blocks(&node.shape, axis);
            let mut offset = 0;
            for p in parts {
                let alen = before[p].shape[axis];
                if let Some(g) = ensure_grad(&mut before[p]) {
                    for o in 0..outer {
                        let src_start = (o * axis_total + offset) * inner;
                        let dst = &mut g[o * alen * inner..(o + 1) * alen * inner];
                        for (gi, &d) in dst.iter_mut().zip(&grad[src_start..src_start + alen * inner]) {
                            *gi += d;
                        }
                    }
                }
                offset += alen;
            }
        }
        Op::Slice { src, axis, start, len } => {
            let (src, axis, start, len) = (*src, *axis, *start, *len);
            let alen = before[src].shape[axis];
            let (outer, inner) = axis_blocks(&before[src].shape, axis);
            if let Some(g) = ensure_grad(&mut before[src]) {
                for o in 0..outer {
                    let dst_start = (o * alen + start) * inner;
                    for i in 0..len * inner {
                        g[dst_start + i] += grad[o * len * inner + i];
                    }
                }
            }
        }
        Op::Relu(a) => {
            let a = *a;
            let av = before[a].values.clone();
            if let Some(g) = ensure_grad(&mut before[a]) {
                for i in 0..grad.len() {
                    if av[i] > 0.0 {
                        g[i] += grad[i];
                    }
                }
            }
        }
        Op::Sigmoid(a) => {
            let a = *a;
            let out = node.values.clone();
            if let Some(g) = ensure_grad(&mut before[a]) {
                for i in 0..grad.len() {
                    g[i] += grad[i] * out[i] * (1.0 - out[i]);
                }
            }
        }
        Op::Log(a) => {
            let a = *a;
            let av = before[a].values.clone();
            if let Some(g) = ensure_grad(&mut before[a]) {
                for i in 0..grad.len() {
                    g[i] += grad[i] / av[i];
                }
            }
        }
        Op::Abs(a) => {
            let a = *a;
            let av = before[a].values.clone();
            if let Some(g) = ensure_grad(&mut before[a]) {
                for i in 0..grad.len() {
                    g[i] += grad[i] * av[i].signum() * if av[i] == 0.0 { 0.0 } else { 1.0 };
                }
            }
        }
        Op::Clamp { src, lo, hi } => {
            let (src, lo, hi) = (*src, *lo, *hi);
            let av = before[src].values.clone();
            if let Some(g) = ensure_grad(&mut before[src]) {
                for i in 0..grad.len() {
                    if av[i] >= lo && av[i] <= hi {
                        g[i] += grad[i];
                    }
                }
            }
        }
        Op::MaxReduce(a) => {
            let a = *a;
            let av = before[a].values.clone();
            let mut arg = 0;
            let mut best = f64::NEG_INFINITY;
            for (i, &v) in av.iter().enumerate() {
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            if let Some(g) = ensure_grad(&mut before[a]) {
                g[arg] += grad[0];
            }
        }
        Op::MeanReduce(a) => {
            let a = *a;
            let n = before[a].values.len() as f64;
            if let Some(g) = ensure_grad(&mut before[a]) {
                let d = grad[0] / n;
                for gi in g.iter_mut() {
                    *gi += d;
                }
            }
        }
        Op::AddBias { mat, bias } => {
            let (mat, bias) = (*mat, *bias);
            let n = before[bias].values.len();
            if let Some(g) = ensure_grad(&mut before[mat]) {
                for (gi, &d) in g.iter_mut().zip(grad) {
                    *gi += d;
                }
            }
            if let Some(g) = ensure_grad(&mut before[bias]) {
                for (i, &d) in grad.iter().enumerate() {
                    g[i % n] += d;
                }
            }
        }
        Op::MulRowVec { mat, vec } => {
            let (mat, vec) = (*mat, *vec);
            let n = before[vec].values.len();
            let vv = before[vec].values.clone();
            if let Some(g) = ensure_grad(&mut before[mat]) {
                for (i, &d) in grad.iter().enumerate() {
                    g[i] += d * vv[i % n];
                }
            }
            let mv = before[mat].values.clone();
            if let Some(g) = ensure_grad(&mut before[vec]) {
                for (i, &d) in grad.iter().enumerate() {
                    g[i % n] += d * mv[i];
                }
            }
        }
        Op::AddScalar { x, s } => {
            let (x, s) = (*x, *s);
            if let Some(g) = ensure_grad(&mut before[x]) {
                for (gi, &d) in g.iter_mut().zip(grad) {
                    *gi += d;
                }
            }
            if let Some(g) = ensure_grad(&mut before[s]) {
                g[0] += grad.iter().sum::<f64>();
            }
        }
        Op::MulScalar { x, s } => {
            let (x, s) = (*x, *s);
            let sv = before[s].values[0];
            if let Some(g) = ensure_grad(&mut before[x]) {
                for (gi, &d) in g.iter_mut().zip(grad) {
                    *gi += d * sv;
                }
            }
            let xv = before[x].values.clone();
            if let Some(g) = ensure_grad(&mut before[s]) {
                g[0] += grad.iter().zip(&xv).map(|(d, v)| d * v).sum::<f64>();
            }
        }
        Op::Conv2d { input, weight, bias, stride, pad } => {
            let (input, weight, bias, stride, pad) = (*input, *weight, *bias, *stride, *pad);
            let (c_in, h, w) = (before[input].shape[0], before[input].shape[1], before[input].shape[2]);
            let (c_out, kh, kw) = (before[weight].shape[0], before[weight].shape[2], before[weight].shape[3]);
            let (h_out, w_out) = (node.shape[1], node.shape[2]);
            let xv = before[input].values.clone();
            let wv = before[weight].values.clone();
            // Input gradient.
            if let Some(g) = ensure_grad(&mut before[input]) {
                for co in 0..c_out {
                    for oh in 0..h_out {
                        for ow in 0..w_out {
                            let d = grad[(co * h_out + oh) * w_out + ow];
                            if d == 0.0 {
                                continue;
                            }
                            for ci in 0..c_in {
                                for ky in 0..kh {
                                    let ih = oh * stride + ky;
                                    if ih < pad || ih - pad >= h {
                                        continue;
                                    }
                                    let ih = ih - pad;
                                    for kx in 0..kw {
                                        let iw = ow * stride + kx;
                                        if iw < pad || iw - pad >= w {
                                            continue;
                                        }
                                        let iw = iw - pad;
                                        g[(ci * h + ih) * w + iw] +=
                                            d * wv[((co * c_in + ci) * kh + ky) * kw + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            // Weight gradient.
            if let Some(g) = ensure_grad(&mut before[weight]) {
                for co in 0..c_out {
                    for oh in 0..h_out {
                        for ow in 0..w_out {
                            let d = grad[(co * h_out + oh) * w_out + ow];
                            if d == 0.0 {
                                continue;
                            }
                            for ci in 0..c_in {
                                for ky in 0..kh {
                                    let ih = oh * stride + ky;
                                    if ih < pad || ih - pad >= h {
                                        continue;
                                    }
                                    let ih = ih - pad;
                                    for kx in 0..kw {
                                        let iw = ow * stride + kx;
                                        if iw < pad || iw - pad >= w {
                                            continue;
                                        }
                                        let iw = iw - pad;
                                        g[((co * c_in + ci) * kh + ky) * kw + kx] +=
                                            d * xv[(ci * h + ih) * w + iw];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if let Some(g) = ensure_grad(&mut before[bias]) {
                for co in 0..c_out {
                    let mut acc = 0.0;
                    for i in 0..h_out * w_out {
                        acc += grad[co * h_out * w_out + i];
                    }
                    g[co] += acc;
                }
            }
        }
        Op::ConvTranspose2d { input, weight, bias, stride, pad } => {
            let (input, weight, bias, stride, pad) = (*input, *weight, *bias, *stride, *pad);
            let (c_in, h, w) = (before[input].shape[0], before[input].shape[1], before[input].shape[2]);
            let (c_out, kh, kw) = (before[weight].shape[1], before[weight].shape[2], before[weight].shape[3]);
            let (h_out, w_out) = (node.shape[1], node.shape[2]);
            let xv = before[input].values.clone();
            let wv = before[weight].values.clone();
            if let Some(g) = ensure_grad(&mut before[input]) {
                for ci in 0..c_in {
                    for ih in 0..h {
                        for iw in 0..w {
                            let mut acc = 0.0;
                            for co in 0..c_out {
                                for ky in 0..kh {
                                    let oh = ih * stride + ky;
                                    if oh < pad || oh - pad >= h_out {
                                        continue;
                                    }
                                    let oh = oh - pad;
                                    for kx in 0..kw {
                                        let ow = iw * stride + kx;
                                        if ow < pad || ow - pad >= w_out {
                                            continue;
                                        }
                                        let ow = ow - pad;
                                        acc += grad[(co * h_out + oh) * w_out + ow]
                                            * wv[((ci * c_out + co) * kh + ky) * kw + kx];
                                    }
                                }
                            }
                            g[(ci * h + ih) * w + iw] += acc;
                        }
                    }
                }
            }
            if let Some(g) = ensure_grad(&mut before[weight]) {
                for ci in 0..c_in {
                    for ih in 0..h {
                        for iw in 0..w {
                            let v = xv[(ci * h + ih) * w + iw];
                            if v == 0.0 {
                                continue;
                            }
                            for co in 0..c_out {
                                for ky in 0..kh {
                                    let oh = ih * stride + ky;
                                    if oh < pad || oh - pad >= h_out {
                                        continue;
                                    }
                                    let oh = oh - pad;
                                    for kx in 0..kw {
                                        let ow = iw * stride + kx;
                                        if ow < pad || ow - pad >= w_out {
                                            continue;
                                        }
                                        let ow = ow - pad;
                                        g[((ci * c_out + co) * kh + ky) * kw + kx] +=
                                            v * grad[(co * h_out + oh) * w_out + ow];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if let Some(g) = ensure_grad(&mut before[bias]) {
                for co in 0..c_out {
                    let mut acc = 0.0;
                    for i in 0..h_out * w_out {
                        acc += grad[co * h_out * w_out + i];
                    }
                    g[co] += acc;
                }
            }
        }
        Op::Cabs { re, im } => {
            let (re, im) = (*re, *im);
            let rv = before[re].values.clone();
            let iv = before[im].values.clone();
            let out = node.values.clone();
            if let Some(g) = ensure_grad(&mut before[re]) {
                for i in 0..grad.len() {
                    if out[i] > 0.0 {
                        g[i] += grad[i] * rv[i] / out[i];
                    }
                }
            }
            if let Some(g) = ensure_grad(&mut before[im]) {
                for i in 0..grad.len() {
                    if out[i] > 0.0 {
                        g[i] += grad[i] * iv[i] / out[i];
                    }
                }
            }
        }
        Op::Solve { a, b, lu } => {
            let (a, b) = (*a, *b);
            let lu = lu.clone();
            let m = node.shape[1];
            // gB = A^{-T} grad; gA = -gB X^T.
            let gb = lu.solve_transposed_mat(grad, m);
            let x = node.values.clone();
            let n = node.shape[0];
            if let Some(g) = ensure_grad(&mut before[b]) {
                for (gi, &d) in g.iter_mut().zip(&gb) {
                    *gi += d;
                }
            }
            if let Some(g) = ensure_grad(&mut before[a]) {
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for c in 0..m {
                            acc += gb[i * m + c] * x[j * m + c];
                        }
                        g[i * n + j] -= acc;
                    }
                }
            }
        }
    }
}
