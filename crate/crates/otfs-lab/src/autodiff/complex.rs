//! Complex tensors as (real, imaginary) pairs of tape tensors.
//!
//! Every operation here is a composite of real kernels, so gradients come for
//! free from the real engine. The convention matches Wirtinger calculus for
//! real-valued losses: backpropagating through the real and imaginary parts
//! independently yields the correct real gradient.

use num_complex::Complex64;

use super::{Tape, Tensor};
use crate::{Error, Result};

/// A complex tensor: two real tensors of identical shape on the same tape.
#[derive(Debug, Clone)]
pub struct CTensor {
    pub re: Tensor,
    pub im: Tensor,
}

impl CTensor {
    pub fn new(re: Tensor, im: Tensor) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::Autodiff(format!(
                "ctensor: real/imaginary shapes differ ({:?} vs {:?})",
                re.shape(),
                im.shape()
            )));
        }
        Ok(CTensor { re, im })
    }

    /// Record complex values as a pair of leaves.
    pub fn leaf(tape: &Tape, shape: &[usize], values: &[Complex64], requires_grad: bool) -> Result<Self> {
        let re: Vec<f64> = values.iter().map(|z| z.re).collect();
        let im: Vec<f64> = values.iter().map(|z| z.im).collect();
        Ok(CTensor {
            re: tape.leaf(shape, re, requires_grad)?,
            im: tape.leaf(shape, im, requires_grad)?,
        })
    }

    pub fn constant(tape: &Tape, shape: &[usize], values: &[Complex64]) -> Result<Self> {
        Self::leaf(tape, shape, values, false)
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    pub fn numel(&self) -> usize {
        self.re.numel()
    }

    pub fn values(&self) -> Vec<Complex64> {
        let re = self.re.values();
        let im = self.im.values();
        re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect()
    }

    pub fn add(&self, other: &CTensor) -> Result<CTensor> {
        Ok(CTensor { re: self.re.add(&other.re)?, im: self.im.add(&other.im)? })
    }

    pub fn sub(&self, other: &CTensor) -> Result<CTensor> {
        Ok(CTensor { re: self.re.sub(&other.re)?, im: self.im.sub(&other.im)? })
    }

    pub fn scale(&self, c: f64) -> CTensor {
        CTensor { re: self.re.scalar_mul(c), im: self.im.scalar_mul(c) }
    }

    pub fn conj(&self) -> CTensor {
        CTensor { re: self.re.clone(), im: self.im.neg() }
    }

    /// Elementwise complex product.
    pub fn mul(&self, other: &CTensor) -> Result<CTensor> {
        let rr = self.re.mul(&other.re)?;
        let ii = self.im.mul(&other.im)?;
        let ri = self.re.mul(&other.im)?;
        let ir = self.im.mul(&other.re)?;
        Ok(CTensor { re: rr.sub(&ii)?, im: ri.add(&ir)? })
    }

    /// Complex matrix product via four real products.
    pub fn matmul(&self, other: &CTensor) -> Result<CTensor> {
        let rr = self.re.matmul(&other.re)?;
        let ii = self.im.matmul(&other.im)?;
        let ri = self.re.matmul(&other.im)?;
        let ir = self.im.matmul(&other.re)?;
        Ok(CTensor { re: rr.sub(&ii)?, im: ri.add(&ir)? })
    }

    /// Product with a real matrix on the left: `A X` with `A` real.
    pub fn matmul_real_left(a: &Tensor, x: &CTensor) -> Result<CTensor> {
        Ok(CTensor { re: a.matmul(&x.re)?, im: a.matmul(&x.im)? })
    }

    /// Product with a real matrix on the right: `X A` with `A` real.
    pub fn matmul_real_right(&self, a: &Tensor) -> Result<CTensor> {
        Ok(CTensor { re: self.re.matmul(a)?, im: self.im.matmul(a)? })
    }

    pub fn transpose(&self) -> Result<CTensor> {
        Ok(CTensor { re: self.re.transpose()?, im: self.im.transpose()? })
    }

    /// Conjugate (Hermitian) transpose.
    pub fn conj_transpose(&self) -> Result<CTensor> {
        Ok(CTensor { re: self.re.transpose()?, im: self.im.transpose()?.neg() })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<CTensor> {
        Ok(CTensor { re: self.re.reshape(shape)?, im: self.im.reshape(shape)? })
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<CTensor> {
        Ok(CTensor {
            re: self.re.slice(axis, start, len)?,
            im: self.im.slice(axis, start, len)?,
        })
    }

    pub fn concat(parts: &[&CTensor], axis: usize) -> Result<CTensor> {
        let res: Vec<&Tensor> = parts.iter().map(|p| &p.re).collect();
        let ims: Vec<&Tensor> = parts.iter().map(|p| &p.im).collect();
        Ok(CTensor { re: Tensor::concat(&res, axis)?, im: Tensor::concat(&ims, axis)? })
    }

    /// Elementwise magnitude as a real tensor.
    pub fn abs(&self) -> Result<Tensor> {
        Tensor::cabs(&self.re, &self.im)
    }

    /// Column-major flattening of a 2-d complex tensor into `[rows*cols, 1]`.
    pub fn vec_cm(&self) -> Result<CTensor> {
        let t = self.transpose()?;
        let n = t.numel();
        t.reshape(&[n, 1])
    }

    /// Inverse of [`CTensor::vec_cm`]: `[rows*cols, 1]` back to `[rows, cols]`.
    pub fn unvec_cm(&self, rows: usize, cols: usize) -> Result<CTensor> {
        if self.numel() != rows * cols {
            return Err(Error::Autodiff(format!(
                "unvec: {} elements cannot fill a {rows}x{cols} matrix",
                self.numel()
            )));
        }
        self.reshape(&[cols, rows])?.transpose()
    }

    /// Solve the complex system `A X = B` through the equivalent real block
    /// system `[[Ar, -Ai], [Ai, Ar]] [Xr; Xi] = [Br; Bi]`. Gradients flow to
    /// both `A` and `B` through the real solve kernel.
    pub fn solve(a: &CTensor, b: &CTensor) -> Result<CTensor> {
        if a.shape().len() != 2 || a.shape()[0] != a.shape()[1] || b.shape().len() != 2 {
            return Err(Error::Autodiff(format!(
                "csolve: expects square [n,n] and [n,m], got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let n = a.shape()[0];
        let m = b.shape()[1];
        if b.shape()[0] != n {
            return Err(Error::Autodiff(format!(
                "csolve: dimension mismatch {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let neg_ai = a.im.neg();
        let top = Tensor::concat(&[&a.re, &neg_ai], 1)?;
        let bottom = Tensor::concat(&[&a.im, &a.re], 1)?;
        let block = Tensor::concat(&[&top, &bottom], 0)?;
        let rhs = Tensor::concat(&[&b.re, &b.im], 0)?;
        let sol = Tensor::solve(&block, &rhs)?;
        debug_assert_eq!(sol.shape(), &[2 * n, m]);
        Ok(CTensor { re: sol.slice(0, 0, n)?, im: sol.slice(0, n, n)? })
    }
}
