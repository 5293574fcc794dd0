//! Doubly-dispersive channel models on the CP-extended frame.
//!
//! A channel is a sparse set of paths, each with a complex gain, an integer
//! delay tap, and an integer-plus-fractional Doppler tap. Three consistent
//! views are provided:
//!
//! * `build_h_serial`: the physical view. A `(M+L_cp)N` square matrix acting
//!   on the serialized CP-extended stream, one delayed and phase-ramped copy
//!   per path.
//! * `build_h_eff`: the compact view after CP removal, acting on the
//!   serialized `MN` delay-time frame. Block-diagonal in the block index
//!   because each block carries its own prefix.
//! * `build_g`: the delay-Doppler view `G = (U_N kron P_rx) H_eff (U_N^H kron
//!   P_tx)`, relating transmitted to received DD symbol vectors directly.
//!
//! The per-sample Doppler phase is `w^(t - l)` at receive sample `t`, with
//! `w = exp(j 2 pi (k + kappa) / ((M + L_cp) N))`: each path's phase ramp
//! advances with the transmit time of the sample it carries.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::GridConfig;
use crate::linalg::cmatmul;
use crate::rng::{standard_complex_gaussian, SimRng};
use crate::transforms::{unitary_dft, PulseShapes};
use crate::{Error, Result};

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPath {
    #[serde(rename = "gain-re")]
    pub gain_re: f64,
    #[serde(rename = "gain-im")]
    pub gain_im: f64,
    /// Delay in samples; must not exceed the CP length.
    #[serde(rename = "delay")]
    pub delay_tap: usize,
    /// Integer part of the Doppler shift in bins (may be negative).
    #[serde(rename = "doppler-int")]
    pub doppler_int: i64,
    /// Fractional Doppler in [-1/2, 1/2].
    #[serde(rename = "doppler-frac")]
    pub doppler_frac: f64,
}

impl ChannelPath {
    pub fn new(gain: Complex64, delay_tap: usize, doppler_int: i64, doppler_frac: f64) -> Self {
        ChannelPath {
            gain_re: gain.re,
            gain_im: gain.im,
            delay_tap,
            doppler_int,
            doppler_frac,
        }
    }

    pub fn gain(&self) -> Complex64 {
        Complex64::new(self.gain_re, self.gain_im)
    }

    /// Total Doppler in bins.
    pub fn doppler(&self) -> f64 {
        self.doppler_int as f64 + self.doppler_frac
    }
}

/// A complete channel draw; replayable through serde for reproducible dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub paths: Vec<ChannelPath>,
}

impl ChannelRealization {
    /// Validate taps against a grid: delays within the CP, fractional parts in
    /// [-1/2, 1/2]. Gains are unconstrained by design so measured or scripted
    /// profiles can be replayed as-is.
    pub fn validate(&self, cfg: &GridConfig) -> Result<()> {
        for (i, p) in self.paths.iter().enumerate() {
            if p.delay_tap > cfg.l_cp {
                return Err(Error::config(format!(
                    "path {i}: delay tap {} exceeds CP length {}",
                    p.delay_tap, cfg.l_cp
                )));
            }
            if !(p.doppler_frac >= -0.5 && p.doppler_frac <= 0.5) {
                return Err(Error::config(format!(
                    "path {i}: fractional Doppler {} outside [-1/2, 1/2]",
                    p.doppler_frac
                )));
            }
        }
        Ok(())
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain().norm_sqr()).sum()
    }
}

/// Tap statistics for the random channel generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    /// Number of paths.
    pub paths: usize,
    /// Largest delay tap; delays are drawn without replacement from
    /// `{0..l_max}` and tap 0 is always present.
    pub l_max: usize,
    /// Integer Doppler taps are uniform on `[-k_max, k_max]`.
    pub k_max: i64,
    /// Draw fractional Doppler uniform on [-1/2, 1/2] when set; 0 otherwise.
    pub fractional: bool,
}

impl ChannelStats {
    pub fn validate(&self, cfg: &GridConfig) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::config("channel must have at least one path".to_string()));
        }
        if self.paths > self.l_max + 1 {
            return Err(Error::config(format!(
                "{} paths cannot draw distinct delays from {{0..{}}}",
                self.paths, self.l_max
            )));
        }
        if self.l_max > cfg.l_cp {
            return Err(Error::config(format!(
                "maximum delay {} exceeds CP length {}",
                self.l_max, cfg.l_cp
            )));
        }
        if self.k_max < 0 {
            return Err(Error::config(format!("k_max must be nonnegative, got {}", self.k_max)));
        }
        Ok(())
    }
}

/// Draw a random channel: distinct delays (tap 0 always present), uniform
/// integer Doppler, optional uniform fractional Doppler, and i.i.d. complex
/// Gaussian gains with per-path variance `1/P` (unit expected total power).
pub fn sample_channel(stats: &ChannelStats, cfg: &GridConfig, rng: &mut SimRng) -> Result<ChannelRealization> {
    stats.validate(cfg)?;
    let p = stats.paths;
    let mut delays = vec![0usize];
    let mut pool: Vec<usize> = (1..=stats.l_max).collect();
    while delays.len() < p {
        let idx = rng.gen_range(0..pool.len());
        delays.push(pool.swap_remove(idx));
    }
    let gains = standard_complex_gaussian(rng, p).mapv(|z| z / (p as f64).sqrt());
    let mut paths = Vec::with_capacity(p);
    for (i, &delay) in delays.iter().enumerate() {
        let doppler_int = rng.gen_range(-stats.k_max..=stats.k_max);
        let doppler_frac = if stats.fractional { rng.gen_range(-0.5..=0.5) } else { 0.0 };
        paths.push(ChannelPath::new(gains[i], delay, doppler_int, doppler_frac));
    }
    Ok(ChannelRealization { paths })
}

/// Phase-ramp argument per sample: `2 pi (k + kappa) / ((M + L_cp) N)`. The
/// per-sample factor is `exp(j * arg)`.
fn phase_arg(path: &ChannelPath, cfg: &GridConfig) -> f64 {
    2.0 * std::f64::consts::PI * path.doppler() / cfg.frame_len() as f64
}

/// Effective channel on the serialized `MN` delay-time frame (CP effects
/// folded in). Block `n` couples only to itself; within a block, delay acts as
/// a forward cyclic shift and Doppler as a phase ramp continuing across
/// blocks.
pub fn build_h_eff(chan: &ChannelRealization, cfg: &GridConfig) -> Result<Array2<Complex64>> {
    chan.validate(cfg)?;
    let (m, n, l_cp) = (cfg.m, cfg.n, cfg.l_cp);
    let mut h = Array2::<Complex64>::zeros((cfg.mn(), cfg.mn()));
    for path in &chan.paths {
        let arg = phase_arg(path, cfg);
        let g = path.gain();
        let l = path.delay_tap;
        for blk in 0..n {
            for row in 0..m {
                // Receive sample (blk, row) sits at serial time
                // (M+L)blk + L + row; its phase ramp lags by the delay.
                let exponent = ((m + l_cp) * blk + l_cp + row) as f64 - l as f64;
                let phase = Complex64::from_polar(1.0, arg * exponent);
                let src = (row + m - l) % m;
                h[(blk * m + row, blk * m + src)] += g * phase;
            }
        }
    }
    Ok(h)
}

/// Physical channel on the serialized CP-extended stream: each path delays the
/// stream by its tap and applies its per-sample phase ramp. Samples that would
/// reach back before the frame start are dropped (they land in CP positions,
/// which the receiver discards anyway whenever delays respect the CP).
pub fn build_h_serial(chan: &ChannelRealization, cfg: &GridConfig) -> Result<Array2<Complex64>> {
    chan.validate(cfg)?;
    let len = cfg.frame_len();
    let mut h = Array2::<Complex64>::zeros((len, len));
    for path in &chan.paths {
        let arg = phase_arg(path, cfg);
        let g = path.gain();
        let l = path.delay_tap;
        for t in l..len {
            let phase = Complex64::from_polar(1.0, arg * (t - l) as f64);
            h[(t, t - l)] += g * phase;
        }
    }
    Ok(h)
}

/// Apply a channel to a serialized delay-time frame without materializing the
/// matrix: per path, cyclic shift within each block plus the running phase
/// ramp. Matches `build_h_eff` exactly; preferred for larger grids.
pub fn apply_channel_sparse(
    s: &Array1<Complex64>,
    chan: &ChannelRealization,
    cfg: &GridConfig,
) -> Result<Array1<Complex64>> {
    chan.validate(cfg)?;
    if s.len() != cfg.mn() {
        return Err(Error::Dimension {
            op: "apply_channel_sparse",
            expected: format!("{}", cfg.mn()),
            got: format!("{}", s.len()),
        });
    }
    let (m, n, l_cp) = (cfg.m, cfg.n, cfg.l_cp);
    let mut out = Array1::<Complex64>::zeros(cfg.mn());
    for path in &chan.paths {
        let arg = phase_arg(path, cfg);
        let g = path.gain();
        let l = path.delay_tap;
        for blk in 0..n {
            for row in 0..m {
                let exponent = ((m + l_cp) * blk + l_cp + row) as f64 - l as f64;
                let phase = Complex64::from_polar(1.0, arg * exponent);
                let src = (row + m - l) % m;
                out[blk * m + row] += g * phase * s[blk * m + src];
            }
        }
    }
    Ok(out)
}

/// Additive-noise description for `apply_channel`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// No noise added (infinite SNR).
    Off,
    /// Per-entry complex noise variance `symbol_energy * 10^(-snr_db/10)`.
    Snr { snr_db: f64, symbol_energy: f64 },
}

impl NoiseModel {
    pub fn sigma2(&self) -> f64 {
        match self {
            NoiseModel::Off => 0.0,
            NoiseModel::Snr { snr_db, symbol_energy } => symbol_energy * 10f64.powf(-snr_db / 10.0),
        }
    }
}

/// `r = H_eff s + w` on the serialized delay-time frame.
pub fn apply_channel(
    s: &Array1<Complex64>,
    h_eff: &Array2<Complex64>,
    noise: &NoiseModel,
    rng: &mut SimRng,
) -> Result<Array1<Complex64>> {
    if h_eff.dim().1 != s.len() {
        return Err(Error::Dimension {
            op: "apply_channel",
            expected: format!("{} columns", s.len()),
            got: format!("{} columns", h_eff.dim().1),
        });
    }
    let mut r = crate::linalg::cmatvec(h_eff, s);
    let sigma2 = noise.sigma2();
    if sigma2 > 0.0 {
        let w = standard_complex_gaussian(rng, r.len()).mapv(|z| z * sigma2.sqrt());
        r += &w;
    }
    Ok(r)
}

/// Precomputed Kronecker factors mapping `H_eff` into the DD-domain matrix
/// `G`. Building the factors costs two kron products; reuse across trials.
#[derive(Debug, Clone)]
pub struct GBuilder {
    left: Array2<Complex64>,
    right: Array2<Complex64>,
}

impl GBuilder {
    pub fn new(cfg: &GridConfig, pulses: &PulseShapes) -> Self {
        let u_n = unitary_dft(cfg.n);
        let u_n_h = crate::linalg::hermitian(&u_n);
        let p_tx = Array2::from_diag(&pulses.p_tx);
        let p_rx = Array2::from_diag(&pulses.p_rx);
        GBuilder {
            left: ndarray::linalg::kron(&u_n, &p_rx),
            right: ndarray::linalg::kron(&u_n_h, &p_tx),
        }
    }

    /// `G = (U_N kron P_rx) H_eff (U_N^H kron P_tx)`.
    pub fn g_of(&self, h_eff: &Array2<Complex64>) -> Array2<Complex64> {
        cmatmul(&cmatmul(&self.left, h_eff), &self.right)
    }
}

/// Convenience wrapper building the factors on the fly.
pub fn build_g(
    h_eff: &Array2<Complex64>,
    pulses: &PulseShapes,
    cfg: &GridConfig,
) -> Result<Array2<Complex64>> {
    if h_eff.dim() != (cfg.mn(), cfg.mn()) {
        return Err(Error::Dimension {
            op: "build_g",
            expected: format!("{0}x{0}", cfg.mn()),
            got: format!("{}x{}", h_eff.dim().0, h_eff.dim().1),
        });
    }
    Ok(GBuilder::new(cfg, pulses).g_of(h_eff))
}

/// Both channel views needed by a receiver chain.
#[derive(Debug, Clone)]
pub struct EquivalentChannel {
    pub h_eff: Array2<Complex64>,
    pub g: Array2<Complex64>,
}

pub fn equivalent_channel(
    chan: &ChannelRealization,
    builder: &GBuilder,
    cfg: &GridConfig,
) -> Result<EquivalentChannel> {
    let h_eff = build_h_eff(chan, cfg)?;
    let g = builder.g_of(&h_eff);
    Ok(EquivalentChannel { h_eff, g })
}
