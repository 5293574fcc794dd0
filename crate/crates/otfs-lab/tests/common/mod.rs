//! Helpers shared by the integration suites: a per-sample reference channel
//! built directly from the path list, and a central finite-difference
//! gradient checker.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use otfs_lab::autodiff::{Tape, Tensor};
use otfs_lab::channel::ChannelRealization;
use otfs_lab::grid::GridConfig;
use otfs_lab::Result;
use std::f64::consts::TAU;

/// Push one delay-Doppler frame through the channel one output sample at a
/// time. Works on the serial stream with explicit index arithmetic: prepend
/// each block's tail as its prefix, then for every receive instant sum
/// `gain * exp(j 2 pi nu (t - l) / T) * x[t - l]` over paths (samples before
/// the frame are zero), and finally drop the prefixes again. No matrices, no
/// transform code, so it cross-checks the vectorized builders.
pub fn per_sample_channel(
    chan: &ChannelRealization,
    frame: &Array1<Complex64>,
    cfg: &GridConfig,
) -> Array1<Complex64> {
    let (m, n, l_cp) = (cfg.m, cfg.n, cfg.l_cp);
    let blk = m + l_cp;
    let total = blk * n;
    assert_eq!(frame.len(), m * n, "frame must be vectorized column-major");

    // Serial transmit stream with prefixes: position p of block b carries
    // frame row (p - l_cp) mod m.
    let mut x = vec![Complex64::new(0.0, 0.0); total];
    for b in 0..n {
        for p in 0..blk {
            x[b * blk + p] = frame[b * m + (p + m - l_cp) % m];
        }
    }

    let mut y = vec![Complex64::new(0.0, 0.0); total];
    for path in &chan.paths {
        let gain = path.gain();
        let nu = path.doppler();
        let l = path.delay_tap;
        for t in l..total {
            let phase = Complex64::from_polar(1.0, TAU * nu * (t - l) as f64 / total as f64);
            y[t] += gain * phase * x[t - l];
        }
    }

    let mut out = Array1::zeros(m * n);
    for b in 0..n {
        for r in 0..m {
            out[b * m + r] = y[b * blk + l_cp + r];
        }
    }
    out
}

/// Reference delay-time channel matrix: the per-sample model applied to every
/// basis frame, one column at a time.
pub fn oracle_h_eff(chan: &ChannelRealization, cfg: &GridConfig) -> Array2<Complex64> {
    let mn = cfg.mn();
    let mut h = Array2::zeros((mn, mn));
    for j in 0..mn {
        let mut e = Array1::zeros(mn);
        e[j] = Complex64::new(1.0, 0.0);
        let col = per_sample_channel(chan, &e, cfg);
        for i in 0..mn {
            h[(i, j)] = col[i];
        }
    }
    h
}

/// Largest relative entry error between two equally sized matrices, with the
/// denominator floored at 1 so exact zeros compare absolutely.
pub fn max_entry_err(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm() / x.norm().max(1.0))
        .fold(0.0, f64::max)
}

/// Deterministic quasi-random values in [-1, 1] for gradient-check inputs.
pub fn probe_values(n: usize, phase: f64) -> Vec<f64> {
    (0..n).map(|i| (1.7 * i as f64 + phase).sin()).collect()
}

/// Fixed-weight scalar readout so every output entry influences the loss
/// with a distinct coefficient.
pub fn weighted_scalar(t: &Tensor) -> Result<Tensor> {
    let tape = t.tape_handle();
    let n = t.numel();
    let shape = t.shape().to_vec();
    let w = tape.constant(&shape, (0..n).map(|i| (0.9 * i as f64 + 0.4).cos()).collect())?;
    Ok(t.mul(&w)?.mean_reduce())
}

/// Max relative disagreement between reverse-mode and central-difference
/// gradients of `build` (a scalar-valued graph over one flat leaf).
pub fn max_grad_err<F>(values: &[f64], build: F) -> f64
where
    F: Fn(&Tape, &Tensor) -> Result<Tensor>,
{
    let eval = |vals: &[f64], want_grad: bool| -> (f64, Option<Vec<f64>>) {
        let tape = Tape::new();
        let x = tape.leaf(&[vals.len()], vals.to_vec(), want_grad).expect("leaf");
        let y = build(&tape, &x).expect("graph build");
        assert_eq!(y.numel(), 1, "gradient check target must be scalar");
        if want_grad {
            y.backward().expect("backward");
            (y.scalar_value(), Some(x.grad().expect("leaf gradient")))
        } else {
            (y.scalar_value(), None)
        }
    };

    let (_, grad) = eval(values, true);
    let grad = grad.expect("gradient populated");
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..values.len() {
        let mut lo = values.to_vec();
        let mut hi = values.to_vec();
        lo[i] -= h;
        hi[i] += h;
        let fd = (eval(&hi, false).0 - eval(&lo, false).0) / (2.0 * h);
        let denom = (grad[i].abs() + fd.abs()).max(1e-6);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    worst
}
