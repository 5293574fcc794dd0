//! Transmit and receive transforms between the delay-Doppler and delay-time
//! domains, plus cyclic-prefix framing.
//!
//! Both directions use the unitary DFT along the Doppler axis:
//! `izak(X) = P_tx X U_N^H` and `zak(Y) = P_rx Y U_N` with `U_N = F_N /
//! sqrt(N)`. The unitary pair keeps per-symbol energy identical in both
//! domains and makes the round trip exact, so SNR definitions carry over
//! between domains without bookkeeping factors.

use ndarray::{s, Array1, Array2};
use num_complex::Complex64;

use crate::grid::{DdFrame, GridConfig};
use crate::linalg::cmatmul;
use crate::{Error, Result};

/// Raw DFT matrix: entry `(n, k) = exp(-j 2 pi n k / N)`.
pub fn dft_matrix(n: usize) -> Array2<Complex64> {
    let mut f = Array2::<Complex64>::zeros((n, n));
    for r in 0..n {
        for c in 0..n {
            let phase = -2.0 * std::f64::consts::PI * (r * c) as f64 / n as f64;
            f[(r, c)] = Complex64::from_polar(1.0, phase);
        }
    }
    f
}

/// Unitary DFT: `dft_matrix(n) / sqrt(n)`.
pub fn unitary_dft(n: usize) -> Array2<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    dft_matrix(n).mapv(|z| z * scale)
}

/// DFT matrices for both grid axes, built once per configuration.
#[derive(Debug, Clone)]
pub struct DftMatrices {
    pub f_m: Array2<Complex64>,
    pub u_m: Array2<Complex64>,
    pub f_n: Array2<Complex64>,
    pub u_n: Array2<Complex64>,
}

impl DftMatrices {
    pub fn new(cfg: &GridConfig) -> Self {
        DftMatrices {
            f_m: dft_matrix(cfg.m),
            u_m: unitary_dft(cfg.m),
            f_n: dft_matrix(cfg.n),
            u_n: unitary_dft(cfg.n),
        }
    }
}

/// Diagonal transmit/receive pulse-shaping matrices, stored as their
/// diagonals. Identity models the rectangular-pulse case.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseShapes {
    pub p_tx: Array1<Complex64>,
    pub p_rx: Array1<Complex64>,
}

impl PulseShapes {
    pub fn identity(cfg: &GridConfig) -> Self {
        let one = Complex64::new(1.0, 0.0);
        PulseShapes {
            p_tx: Array1::from_elem(cfg.m, one),
            p_rx: Array1::from_elem(cfg.m, one),
        }
    }

    pub fn new(p_tx: Array1<Complex64>, p_rx: Array1<Complex64>, cfg: &GridConfig) -> Result<Self> {
        if p_tx.len() != cfg.m || p_rx.len() != cfg.m {
            return Err(Error::Dimension {
                op: "PulseShapes::new",
                expected: format!("diagonals of length {}", cfg.m),
                got: format!("{} / {}", p_tx.len(), p_rx.len()),
            });
        }
        Ok(PulseShapes { p_tx, p_rx })
    }

    pub fn is_identity(&self) -> bool {
        let one = Complex64::new(1.0, 0.0);
        self.p_tx.iter().all(|z| (z - one).norm() < 1e-15)
            && self.p_rx.iter().all(|z| (z - one).norm() < 1e-15)
    }
}

fn scale_rows(a: &Array2<Complex64>, diag: &Array1<Complex64>) -> Array2<Complex64> {
    let mut out = a.clone();
    for (r, scale) in diag.iter().enumerate() {
        for c in 0..a.dim().1 {
            out[(r, c)] *= scale;
        }
    }
    out
}

/// Delay-Doppler frame to delay-time frame: `S = P_tx X U_N^H`.
pub fn izak(x: &DdFrame, pulses: &PulseShapes, cfg: &GridConfig) -> Result<Array2<Complex64>> {
    if x.dim() != (cfg.m, cfg.n) {
        return Err(Error::Dimension {
            op: "izak",
            expected: format!("{}x{}", cfg.m, cfg.n),
            got: format!("{}x{}", x.dim().0, x.dim().1),
        });
    }
    let u_n = unitary_dft(cfg.n);
    let u_n_h = crate::linalg::hermitian(&u_n);
    Ok(scale_rows(&cmatmul(x.entries(), &u_n_h), &pulses.p_tx))
}

/// Delay-time frame to delay-Doppler frame: `Y = P_rx R U_N`.
pub fn zak(r: &Array2<Complex64>, pulses: &PulseShapes, cfg: &GridConfig) -> Result<DdFrame> {
    if r.dim() != (cfg.m, cfg.n) {
        return Err(Error::Dimension {
            op: "zak",
            expected: format!("{}x{}", cfg.m, cfg.n),
            got: format!("{}x{}", r.dim().0, r.dim().1),
        });
    }
    let u_n = unitary_dft(cfg.n);
    DdFrame::from_array(scale_rows(&cmatmul(r, &u_n), &pulses.p_rx), cfg)
}

/// Prepend each block's tail as a cyclic prefix: `(M + L_cp) x N` output.
pub fn add_cp(s: &Array2<Complex64>, cfg: &GridConfig) -> Result<Array2<Complex64>> {
    if s.dim() != (cfg.m, cfg.n) {
        return Err(Error::Dimension {
            op: "add_cp",
            expected: format!("{}x{}", cfg.m, cfg.n),
            got: format!("{}x{}", s.dim().0, s.dim().1),
        });
    }
    let l = cfg.l_cp;
    let mut out = Array2::<Complex64>::zeros((cfg.m + l, cfg.n));
    out.slice_mut(s![..l, ..]).assign(&s.slice(s![cfg.m - l.., ..]));
    out.slice_mut(s![l.., ..]).assign(s);
    Ok(out)
}

/// Drop the cyclic prefix rows again.
pub fn remove_cp(r: &Array2<Complex64>, cfg: &GridConfig) -> Result<Array2<Complex64>> {
    if r.dim() != (cfg.m + cfg.l_cp, cfg.n) {
        return Err(Error::Dimension {
            op: "remove_cp",
            expected: format!("{}x{}", cfg.m + cfg.l_cp, cfg.n),
            got: format!("{}x{}", r.dim().0, r.dim().1),
        });
    }
    Ok(r.slice(s![cfg.l_cp.., ..]).to_owned())
}
