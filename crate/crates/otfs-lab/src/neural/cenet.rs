//! Convolutional channel-matrix estimator.
//!
//! An encoder-decoder with residual blocks and skip connections maps the
//! masked pilot observation (complex M x N, carried as two channels) to the
//! dense equivalent-channel matrix (complex MN x MN). The encoder halves the
//! spatial size per stage down to a compact latent; the decoder doubles it per
//! stage well past the input size, since the output lives on a much larger
//! grid. Decoder stages deep enough to have an encoder partner at the same
//! spatial size receive it through a 1x1 adapter and channel concatenation;
//! the remaining stages upsample without skips.

use crate::autodiff::complex::CTensor;
use crate::autodiff::optim::{he_normal, BoundParams, ParamStore};
use crate::autodiff::Tensor;
use crate::rng::SimRng;
use crate::{Error, Result};

/// Channel width of the first encoder stage; doubles per downsample.
const BASE_WIDTH: usize = 16;
/// Encoder widths saturate here, keeping the latent at a fixed depth.
const MAX_WIDTH: usize = 64;
/// Decoder tail widths never shrink below this.
const MIN_WIDTH: usize = 4;

/// Static architecture for one grid size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CenetSpec {
    pub m: usize,
    pub n: usize,
    /// Number of downsampling stages after the initial block.
    pub depth_down: usize,
    /// Number of upsampling stages.
    pub depth_up: usize,
    /// Channel widths after the initial block and each downsample (len L+1).
    pub enc_widths: Vec<usize>,
    /// Channel widths after each upsample (len K).
    pub dec_widths: Vec<usize>,
}

impl CenetSpec {
    /// Derive depths and widths for a square power-of-two grid: downsample to
    /// a 2x2 latent, then upsample until the spatial size reaches M*N.
    pub fn for_grid(m: usize, n: usize) -> Result<Self> {
        if m != n || !m.is_power_of_two() || m < 4 {
            return Err(Error::config(format!(
                "estimator network needs a square power-of-two grid of at least 4, got {m}x{n}"
            )));
        }
        let log_m = m.trailing_zeros() as usize;
        let depth_down = log_m - 1;
        let depth_up = 2 * log_m - 1;
        let enc_widths: Vec<usize> =
            (0..=depth_down).map(|i| (BASE_WIDTH << i).min(MAX_WIDTH)).collect();
        let mut dec_widths: Vec<usize> = Vec::with_capacity(depth_up);
        for stage in 1..=depth_up {
            let w = if stage <= depth_down {
                enc_widths[depth_down - stage]
            } else {
                (dec_widths[stage - 2] / 2).max(MIN_WIDTH)
            };
            dec_widths.push(w);
        }
        Ok(CenetSpec { m, n, depth_down, depth_up, enc_widths, dec_widths })
    }

    /// Spatial side length of the latent feature map.
    pub fn latent_spatial(&self) -> usize {
        self.m >> self.depth_down
    }

    /// Channel count of the latent feature map.
    pub fn latent_width(&self) -> usize {
        *self.enc_widths.last().expect("nonempty widths")
    }

    /// Side length of the square output map.
    pub fn output_spatial(&self) -> usize {
        self.latent_spatial() << self.depth_up
    }
}

fn conv_names(prefix: &str) -> (String, String) {
    (format!("{prefix}.w"), format!("{prefix}.b"))
}

fn insert_conv(
    params: &mut ParamStore,
    prefix: &str,
    c_out: usize,
    c_in: usize,
    k: usize,
    rng: &mut SimRng,
) -> Result<()> {
    let (wn, bn) = conv_names(prefix);
    let fan_in = c_in * k * k;
    params.insert(&wn, &[c_out, c_in, k, k], he_normal(rng, fan_in, c_out * fan_in))?;
    params.insert(&bn, &[c_out], vec![0.0; c_out])?;
    Ok(())
}

fn insert_tconv(
    params: &mut ParamStore,
    prefix: &str,
    c_in: usize,
    c_out: usize,
    k: usize,
    rng: &mut SimRng,
) -> Result<()> {
    let (wn, bn) = conv_names(prefix);
    let fan_in = c_in * k * k;
    params.insert(&wn, &[c_in, c_out, k, k], he_normal(rng, fan_in, c_out * fan_in))?;
    params.insert(&bn, &[c_out], vec![0.0; c_out])?;
    Ok(())
}

fn insert_res(params: &mut ParamStore, prefix: &str, c: usize, rng: &mut SimRng) -> Result<()> {
    insert_conv(params, &format!("{prefix}.c1"), c, c, 3, rng)?;
    insert_conv(params, &format!("{prefix}.c2"), c, c, 3, rng)
}

/// Register every estimator tensor under the `cenet.` prefix.
pub fn init_params(params: &mut ParamStore, spec: &CenetSpec, rng: &mut SimRng) -> Result<()> {
    insert_conv(params, "cenet.int.conv", spec.enc_widths[0], 2, 3, rng)?;
    insert_res(params, "cenet.int.res", spec.enc_widths[0], rng)?;
    for stage in 1..=spec.depth_down {
        let prefix = format!("cenet.enc{stage}");
        insert_conv(params, &format!("{prefix}.down"), spec.enc_widths[stage], spec.enc_widths[stage - 1], 3, rng)?;
        insert_res(params, &format!("{prefix}.res"), spec.enc_widths[stage], rng)?;
    }
    let mut c_prev = spec.latent_width();
    for stage in 1..=spec.depth_up {
        let prefix = format!("cenet.dec{stage}");
        let c = spec.dec_widths[stage - 1];
        insert_tconv(params, &format!("{prefix}.up"), c_prev, c, 3, rng)?;
        if stage <= spec.depth_down {
            let partner_c = spec.enc_widths[spec.depth_down - stage];
            insert_conv(params, &format!("{prefix}.skip"), c, partner_c, 1, rng)?;
            insert_conv(params, &format!("{prefix}.merge"), c, 2 * c, 3, rng)?;
        }
        insert_res(params, &format!("{prefix}.res"), c, rng)?;
        c_prev = c;
    }
    insert_conv(params, "cenet.head", 2, *spec.dec_widths.last().expect("nonempty"), 3, rng)
}

fn conv(x: &Tensor, bound: &BoundParams, prefix: &str, stride: usize, pad: usize) -> Result<Tensor> {
    let (wn, bn) = conv_names(prefix);
    x.conv2d(bound.get(&wn)?, bound.get(&bn)?, stride, pad)
}

fn tconv(x: &Tensor, bound: &BoundParams, prefix: &str) -> Result<Tensor> {
    let (wn, bn) = conv_names(prefix);
    x.conv2d_transpose(bound.get(&wn)?, bound.get(&bn)?, 2, 1, 1)
}

/// x + conv(relu(conv(x))), rectified; channel count is preserved.
fn res_block(x: &Tensor, bound: &BoundParams, prefix: &str) -> Result<Tensor> {
    let inner = conv(&conv(x, bound, &format!("{prefix}.c1"), 1, 1)?.relu(), bound, &format!("{prefix}.c2"), 1, 1)?;
    Ok(x.add(&inner)?.relu())
}

/// Masked pilot observation (complex M x N) to estimated channel matrix
/// (complex MN x MN).
pub fn cenet_forward(yp: &CTensor, bound: &BoundParams, spec: &CenetSpec) -> Result<CTensor> {
    if yp.shape() != [spec.m, spec.n] {
        return Err(Error::Autodiff(format!(
            "estimator input shape {:?} does not match configured grid {}x{}",
            yp.shape(),
            spec.m,
            spec.n
        )));
    }
    let re = yp.re.reshape(&[1, spec.m, spec.n])?;
    let im = yp.im.reshape(&[1, spec.m, spec.n])?;
    let x = Tensor::concat(&[&re, &im], 0)?;

    // Encoder; keep every stage output for the skip paths.
    let mut feats = Vec::with_capacity(spec.depth_down + 1);
    let mut d = res_block(&conv(&x, bound, "cenet.int.conv", 1, 1)?.relu(), bound, "cenet.int.res")?;
    feats.push(d.clone());
    for stage in 1..=spec.depth_down {
        let prefix = format!("cenet.enc{stage}");
        d = conv(&d, bound, &format!("{prefix}.down"), 2, 1)?.relu();
        d = res_block(&d, bound, &format!("{prefix}.res"))?;
        feats.push(d.clone());
    }

    // Decoder: spatial size doubles per stage; the first L stages have an
    // encoder partner at matching spatial size.
    let mut u = d;
    for stage in 1..=spec.depth_up {
        let prefix = format!("cenet.dec{stage}");
        let u_temp = tconv(&u, bound, &format!("{prefix}.up"))?.relu();
        let merged = if stage <= spec.depth_down {
            let partner = &feats[spec.depth_down - stage];
            let adapted = conv(partner, bound, &format!("{prefix}.skip"), 1, 0)?;
            let z = Tensor::concat(&[&adapted, &u_temp], 0)?;
            conv(&z, bound, &format!("{prefix}.merge"), 1, 1)?.relu()
        } else {
            u_temp
        };
        u = res_block(&merged, bound, &format!("{prefix}.res"))?;
    }

    let out = conv(&u, bound, "cenet.head", 1, 1)?;
    let side = spec.output_spatial();
    let g_re = out.slice(0, 0, 1)?.reshape(&[side, side])?;
    let g_im = out.slice(0, 1, 1)?.reshape(&[side, side])?;
    CTensor::new(g_re, g_im)
}
