//! Delay-Doppler grid geometry and frame containers.
//!
//! A frame is an `M x N` complex matrix indexed `(l, k)` = (delay tap, Doppler
//! tap). Vectorization is column-major everywhere: element `(l, k)` maps to
//! flat index `k * M + l`. That convention makes `vec(A X B) = (B^T kron A)
//! vec(X)` hold, which the effective-channel algebra relies on.

use ndarray::{Array1, Array2, ShapeBuilder};
use num_complex::Complex64;

use crate::{Error, Result};

/// Static description of the delay-Doppler grid and the OFDM-style framing
/// underneath it.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// Delay bins per block (subcarriers).
    pub m: usize,
    /// Doppler bins per frame (time slots).
    pub n: usize,
    /// Subcarrier spacing in Hz. Block duration is `1 / delta_f`.
    pub delta_f: f64,
    /// Cyclic prefix length in samples, prepended to every block.
    pub l_cp: usize,
}

impl GridConfig {
    pub fn new(m: usize, n: usize, delta_f: f64, l_cp: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::config(format!("grid dimensions must be positive, got {m}x{n}")));
        }
        if !(delta_f.is_finite() && delta_f > 0.0) {
            return Err(Error::config(format!("subcarrier spacing must be positive, got {delta_f}")));
        }
        if l_cp >= m {
            return Err(Error::config(format!(
                "cyclic prefix length {l_cp} must be shorter than the block length {m}"
            )));
        }
        Ok(GridConfig { m, n, delta_f, l_cp })
    }

    /// Common small test grid: 8x8, 15 kHz spacing, CP of 4.
    pub fn desk_8x8() -> Self {
        GridConfig::new(8, 8, 15e3, 4).expect("static config")
    }

    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    /// Block duration in seconds; `t() * delta_f == 1` by construction.
    pub fn t(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Samples per CP-extended block.
    pub fn block_len(&self) -> usize {
        self.m + self.l_cp
    }

    /// Samples per CP-extended frame.
    pub fn frame_len(&self) -> usize {
        self.block_len() * self.n
    }

    /// Delay resolution in seconds (one sample).
    pub fn delay_resolution(&self) -> f64 {
        self.t() / self.m as f64
    }

    /// Doppler resolution in Hz (one bin).
    pub fn doppler_resolution(&self) -> f64 {
        self.delta_f / self.n as f64
    }

    /// Flat column-major index of cell `(l, k)`.
    pub fn cell_index(&self, l: usize, k: usize) -> usize {
        debug_assert!(l < self.m && k < self.n);
        k * self.m + l
    }
}

/// A delay-Doppler frame: `M x N` complex entries tied to a grid size.
#[derive(Debug, Clone, PartialEq)]
pub struct DdFrame {
    entries: Array2<Complex64>,
}

impl DdFrame {
    pub fn zeros(cfg: &GridConfig) -> Self {
        DdFrame { entries: Array2::zeros((cfg.m, cfg.n)) }
    }

    pub fn from_array(entries: Array2<Complex64>, cfg: &GridConfig) -> Result<Self> {
        if entries.dim() != (cfg.m, cfg.n) {
            return Err(Error::Dimension {
                op: "DdFrame::from_array",
                expected: format!("{}x{}", cfg.m, cfg.n),
                got: format!("{}x{}", entries.dim().0, entries.dim().1),
            });
        }
        Ok(DdFrame { entries })
    }

    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.entries
    }

    pub fn dim(&self) -> (usize, usize) {
        self.entries.dim()
    }

    /// Largest entry magnitude; 0 for an all-zero frame.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Total energy `sum |x|^2`.
    pub fn energy(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Column-major vectorization of a frame. Errors if the frame does not match
/// the grid.
pub fn vec_frame(frame: &DdFrame, cfg: &GridConfig) -> Result<Array1<Complex64>> {
    if frame.dim() != (cfg.m, cfg.n) {
        return Err(Error::Dimension {
            op: "vec_frame",
            expected: format!("{}x{}", cfg.m, cfg.n),
            got: format!("{}x{}", frame.dim().0, frame.dim().1),
        });
    }
    Ok(vec_cm(frame.entries()))
}

/// Inverse of [`vec_frame`].
pub fn unvec_frame(v: &Array1<Complex64>, cfg: &GridConfig) -> Result<DdFrame> {
    if v.len() != cfg.mn() {
        return Err(Error::Dimension {
            op: "unvec_frame",
            expected: format!("{}", cfg.mn()),
            got: format!("{}", v.len()),
        });
    }
    DdFrame::from_array(unvec_cm(v, cfg.m, cfg.n), cfg)
}

/// Column-major vectorization of an arbitrary matrix.
pub fn vec_cm(a: &Array2<Complex64>) -> Array1<Complex64> {
    let (rows, cols) = a.dim();
    let mut out = Vec::with_capacity(rows * cols);
    for c in 0..cols {
        for r in 0..rows {
            out.push(a[(r, c)]);
        }
    }
    Array1::from(out)
}

/// Column-major de-vectorization into a `rows x cols` matrix.
pub fn unvec_cm(v: &Array1<Complex64>, rows: usize, cols: usize) -> Array2<Complex64> {
    assert_eq!(v.len(), rows * cols, "unvec_cm: length mismatch");
    Array2::from_shape_vec((rows, cols).f(), v.to_vec())
        .expect("shape checked above")
        .as_standard_layout()
        .to_owned()
}
