//! Learned soft demapper.
//!
//! Every equalized symbol is treated as a length-2 real vector (re, im) and
//! pushed through the same three fully connected layers: ReLU, ReLU, linear,
//! each followed by a learnable per-feature scale and shift. The final
//! sigmoid turns logits into per-bit probabilities. Running all symbols as
//! rows of one matrix shares the weights by construction.

use crate::autodiff::complex::CTensor;
use crate::autodiff::optim::{he_normal, xavier_uniform, BoundParams, ParamStore};
use crate::autodiff::Tensor;
use crate::rng::SimRng;
use crate::Result;

/// Register the three layers for `r` bits per symbol with hidden width `d`.
pub fn init_params(params: &mut ParamStore, d: usize, r: usize, rng: &mut SimRng) -> Result<()> {
    let layer = |params: &mut ParamStore, idx: usize, fin: usize, fout: usize, w: Vec<f64>| -> Result<()> {
        params.insert(&format!("demapper.w{idx}"), &[fin, fout], w)?;
        params.insert(&format!("demapper.b{idx}"), &[fout], vec![0.0; fout])?;
        params.insert(&format!("demapper.g{idx}"), &[fout], vec![1.0; fout])?;
        params.insert(&format!("demapper.s{idx}"), &[fout], vec![0.0; fout])?;
        Ok(())
    };
    layer(params, 1, 2, d, he_normal(rng, 2, 2 * d))?;
    layer(params, 2, d, d, he_normal(rng, d, d * d))?;
    layer(params, 3, d, r, xavier_uniform(rng, d, r, d * r))
}

fn dense(x: &Tensor, bound: &BoundParams, idx: usize) -> Result<Tensor> {
    let z = x
        .matmul(bound.get(&format!("demapper.w{idx}"))?)?
        .add_bias(bound.get(&format!("demapper.b{idx}"))?)?;
    z.mul_rowvec(bound.get(&format!("demapper.g{idx}"))?)?
        .add_bias(bound.get(&format!("demapper.s{idx}"))?)
}

/// Equalized symbols to bit probabilities, flattened as
/// `[symbol 0 bits..., symbol 1 bits..., ...]` to line up with the
/// bit-to-symbol mapper's consumption order.
pub fn demap_soft(symbols: &CTensor, bound: &BoundParams, r: usize) -> Result<Tensor> {
    let count = symbols.numel();
    let re = symbols.re.reshape(&[count, 1])?;
    let im = symbols.im.reshape(&[count, 1])?;
    let s = Tensor::concat(&[&re, &im], 1)?;
    let h1 = dense(&s, bound, 1)?.relu();
    let h2 = dense(&h1, bound, 2)?.relu();
    let logits = dense(&h2, bound, 3)?;
    Ok(logits.reshape(&[count * r])?.sigmoid())
}
