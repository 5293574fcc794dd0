//! Adaptive pilot-separation threshold.
//!
//! A two-layer network maps the flattened magnitude frame to a scalar in
//! (0, 1), which scales the frame maximum into a threshold λ. Hard masking by
//! λ is not differentiable, so training uses a steep sigmoid surrogate; the
//! steepness itself is treated as a constant so gradients reach the network
//! only through λ.

use crate::autodiff::optim::{he_normal, xavier_uniform, BoundParams, ParamStore};
use crate::autodiff::Tensor;
use crate::rng::SimRng;
use crate::Result;

pub const PARAM_W1: &str = "threshold.w1";
pub const PARAM_B1: &str = "threshold.b1";
pub const PARAM_W2: &str = "threshold.w2";
pub const PARAM_B2: &str = "threshold.b2";

/// Surrogate-mask steepness relative to the frame maximum.
const MASK_STEEPNESS: f64 = 50.0;

/// Register the two layers for an `in_dim`-cell grid. The output layer starts
/// small and biases start at zero, so the initial pre-sigmoid activation is
/// near zero and λ begins close to half the frame maximum, matching the
/// fixed-α baseline at α = 0.5.
pub fn init_params(params: &mut ParamStore, in_dim: usize, hidden: usize, rng: &mut SimRng) -> Result<()> {
    params.insert(PARAM_W1, &[in_dim, hidden], he_normal(rng, in_dim, in_dim * hidden))?;
    params.insert(PARAM_B1, &[hidden], vec![0.0; hidden])?;
    let w2: Vec<f64> = xavier_uniform(rng, hidden, 1, hidden).iter().map(|x| 0.1 * x).collect();
    params.insert(PARAM_W2, &[hidden, 1], w2)?;
    params.insert(PARAM_B2, &[1], vec![0.0])?;
    Ok(())
}

/// λ = sigmoid(FC2(relu(FC1(vec|Y|)))) · max|Y|, as a `[1]` tensor.
pub fn threshold_lambda(y_abs: &Tensor, bound: &BoundParams) -> Result<Tensor> {
    let n = y_abs.numel();
    let row = y_abs.reshape(&[1, n])?;
    let h = row
        .matmul(bound.get(PARAM_W1)?)?
        .add_bias(bound.get(PARAM_B1)?)?
        .relu();
    let s = h
        .matmul(bound.get(PARAM_W2)?)?
        .add_bias(bound.get(PARAM_B2)?)?
        .sigmoid()
        .reshape(&[1])?;
    let max = y_abs.max_reduce();
    s.mul(&max)
}

/// Soft retention mask sigmoid((|Y| - λ) · 50 / max|Y|). The scale factor is
/// read off the current values and held constant for differentiation; a zero
/// frame degenerates to the flat mask 1/2, which downstream multiplication by
/// the zero frame makes irrelevant.
pub fn soft_mask(y_abs: &Tensor, lambda: &Tensor) -> Result<Tensor> {
    let max = y_abs.values().iter().fold(0.0f64, |a, &b| a.max(b));
    let steep = if max > 0.0 { MASK_STEEPNESS / max } else { 0.0 };
    Ok(y_abs.add_scalar_t(&lambda.neg())?.scalar_mul(steep).sigmoid())
}
