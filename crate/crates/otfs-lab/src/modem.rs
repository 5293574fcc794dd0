//! Bit mapping, constellations, and pilot placement.
//!
//! Data symbols fill the grid in column-major order, `r` bits per symbol with
//! the first bit most significant. Superimposed pilots add a single complex
//! pilot on top of the data cell; embedded pilots instead reserve a guard
//! region and place the pilot alone inside it.

use ndarray::Array1;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::{DdFrame, GridConfig};
use crate::{Error, Result};

/// A labeled constellation. `labels[i]` is the bit pattern of point `i`;
/// labels form a bijection onto all `r`-bit patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    labels: Vec<Vec<u8>>,
}

/// Serialized form: one `{re, im, label}` triple per point.
#[derive(Debug, Serialize, Deserialize)]
struct ConstellationPointJson {
    re: f64,
    im: f64,
    label: String,
}

impl Constellation {
    /// BPSK: bit 0 -> +1, bit 1 -> -1.
    pub fn bpsk() -> Self {
        Constellation {
            points: vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            labels: vec![vec![0], vec![1]],
        }
    }

    /// Gray-labeled QPSK at unit power: first bit selects the real sign,
    /// second the imaginary sign, so neighbors differ in one bit.
    pub fn qpsk() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Constellation {
            points: vec![
                Complex64::new(a, a),
                Complex64::new(a, -a),
                Complex64::new(-a, a),
                Complex64::new(-a, -a),
            ],
            labels: vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
        }
    }

    /// Standard constellation for a modulation order (2 or 4 points).
    pub fn for_order(order: usize) -> Result<Self> {
        match order {
            2 => Ok(Self::bpsk()),
            4 => Ok(Self::qpsk()),
            _ => Err(Error::config(format!("unsupported modulation order {order}"))),
        }
    }

    pub fn new(points: Vec<Complex64>, labels: Vec<Vec<u8>>) -> Result<Self> {
        let r = points.len();
        if labels.len() != r || r == 0 || !r.is_power_of_two() {
            return Err(Error::config(format!(
                "constellation needs a power-of-two point count with matching labels, got {} points / {} labels",
                r,
                labels.len()
            )));
        }
        let bits = r.trailing_zeros() as usize;
        let mut seen = vec![false; r];
        for label in &labels {
            if label.len() != bits || label.iter().any(|&b| b > 1) {
                return Err(Error::config(format!("label {label:?} is not a {bits}-bit pattern")));
            }
            let idx = label.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
            if seen[idx] {
                return Err(Error::config(format!("duplicate label {label:?}")));
            }
            seen[idx] = true;
        }
        Ok(Constellation { points, labels })
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Bits carried per symbol.
    pub fn bits_per_symbol(&self) -> usize {
        self.points.len().trailing_zeros() as usize
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn labels(&self) -> &[Vec<u8>] {
        &self.labels
    }

    pub fn mean_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Rescale points to unit mean power. Errors on an all-zero constellation.
    pub fn normalize(&self) -> Result<Self> {
        let p = self.mean_power();
        if p == 0.0 {
            return Err(Error::numerical("cannot normalize an all-zero constellation".to_string()));
        }
        let scale = 1.0 / p.sqrt();
        Ok(Constellation {
            points: self.points.iter().map(|z| z * scale).collect(),
            labels: self.labels.clone(),
        })
    }

    /// Point index whose label matches the bit group.
    fn index_of_bits(&self, bits: &[u8]) -> usize {
        // Labels of the built-in constellations are the binary encodings of
        // their indices; general constellations search.
        self.labels
            .iter()
            .position(|l| l == bits)
            .expect("label bijection guarantees a match")
    }

    pub fn to_json(&self) -> Result<String> {
        let items: Vec<ConstellationPointJson> = self
            .points
            .iter()
            .zip(&self.labels)
            .map(|(p, l)| ConstellationPointJson {
                re: p.re,
                im: p.im,
                label: l.iter().map(|b| char::from(b'0' + b)).collect(),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&items)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let items: Vec<ConstellationPointJson> = serde_json::from_str(json)?;
        let points = items.iter().map(|i| Complex64::new(i.re, i.im)).collect();
        let labels = items
            .iter()
            .map(|i| {
                i.label
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(0u8),
                        '1' => Ok(1u8),
                        _ => Err(Error::config(format!("label char {c:?} is not binary"))),
                    })
                    .collect::<Result<Vec<u8>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Constellation::new(points, labels)
    }
}

/// Superimposed-pilot description: position, complex value, and whether the
/// phase is a trainable parameter (the magnitude is always fixed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotSpec {
    pub pos: (usize, usize),
    pub value: Complex64,
    pub trainable_phase: bool,
}

impl PilotSpec {
    /// Pilot of energy `e_p` with zero phase at the grid center.
    pub fn centred(e_p: f64, cfg: &GridConfig) -> Result<Self> {
        Self::at((cfg.m / 2, cfg.n / 2), e_p, cfg)
    }

    pub fn at(pos: (usize, usize), e_p: f64, cfg: &GridConfig) -> Result<Self> {
        if pos.0 >= cfg.m || pos.1 >= cfg.n {
            return Err(Error::config(format!(
                "pilot position ({}, {}) outside {}x{} grid",
                pos.0, pos.1, cfg.m, cfg.n
            )));
        }
        if !(e_p.is_finite() && e_p > 0.0) {
            return Err(Error::config(format!("pilot energy must be positive, got {e_p}")));
        }
        Ok(PilotSpec {
            pos,
            value: Complex64::new(e_p.sqrt(), 0.0),
            trainable_phase: false,
        })
    }

    pub fn energy(&self) -> f64 {
        self.value.norm_sqr()
    }

    /// Column-major index of the pilot cell.
    pub fn cell_index(&self, cfg: &GridConfig) -> usize {
        cfg.cell_index(self.pos.0, self.pos.1)
    }

    /// The pilot-only frame `X_p`.
    pub fn frame(&self, cfg: &GridConfig) -> DdFrame {
        let mut f = DdFrame::zeros(cfg);
        f.entries_mut()[self.pos] = self.value;
        f
    }
}

/// Map a full frame of data bits onto the grid, column-major. Requires exactly
/// `r * M * N` bits.
pub fn map_bits(bits: &[u8], constellation: &Constellation, cfg: &GridConfig) -> Result<DdFrame> {
    let r = constellation.bits_per_symbol();
    let need = r * cfg.mn();
    if bits.len() != need {
        return Err(Error::Dimension {
            op: "map_bits",
            expected: format!("{need} bits"),
            got: format!("{}", bits.len()),
        });
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::config("bit values must be 0 or 1".to_string()));
    }
    let mut frame = DdFrame::zeros(cfg);
    for q in 0..cfg.mn() {
        let group = &bits[q * r..(q + 1) * r];
        let point = constellation.points()[constellation.index_of_bits(group)];
        let (l, k) = (q % cfg.m, q / cfg.m);
        frame.entries_mut()[(l, k)] = point;
    }
    Ok(frame)
}

/// Superimpose the pilot on the data frame: the pilot cell becomes
/// `x_d + x_p`, every other cell is untouched.
pub fn insert_pilot(data: &DdFrame, pilot: &PilotSpec, cfg: &GridConfig) -> Result<DdFrame> {
    if data.dim() != (cfg.m, cfg.n) {
        return Err(Error::Dimension {
            op: "insert_pilot",
            expected: format!("{}x{}", cfg.m, cfg.n),
            got: format!("{}x{}", data.dim().0, data.dim().1),
        });
    }
    let mut out = data.clone();
    out.entries_mut()[pilot.pos] += pilot.value;
    Ok(out)
}

/// Nearest-point hard decisions, returning the concatenated labels. Ties
/// resolve to the lowest point index.
pub fn hard_demap(symbols: &Array1<Complex64>, constellation: &Constellation) -> Vec<u8> {
    let mut bits = Vec::with_capacity(symbols.len() * constellation.bits_per_symbol());
    for z in symbols.iter() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in constellation.points().iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        bits.extend_from_slice(&constellation.labels()[best]);
    }
    bits
}

/// Embedded-pilot frame layout: the guard region spans delay rows
/// `[l_p - l_max, l_p + l_max]` over Doppler columns
/// `[k_p - 2 k_max, k_p + 2 k_max]`, cyclically, clipped to the grid. Data
/// occupies every cell outside the guard; the pilot sits alone inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpLayout {
    pub pilot: PilotSpec,
    pub l_max: usize,
    pub k_max: i64,
}

impl EpLayout {
    pub fn new(pilot: PilotSpec, l_max: usize, k_max: i64, cfg: &GridConfig) -> Result<Self> {
        if 2 * l_max + 1 > cfg.m {
            return Err(Error::config(format!(
                "embedded-pilot guard rows 2*{l_max}+1 exceed grid height {}",
                cfg.m
            )));
        }
        if k_max < 0 {
            return Err(Error::config(format!("k_max must be nonnegative, got {k_max}")));
        }
        Ok(EpLayout { pilot, l_max, k_max })
    }

    /// Guard columns actually used, after clipping to the grid width.
    pub fn guard_cols(&self, cfg: &GridConfig) -> usize {
        ((4 * self.k_max + 1) as usize).min(cfg.n)
    }

    /// `true` marks cells that carry data.
    pub fn data_mask(&self, cfg: &GridConfig) -> Vec<bool> {
        let mut mask = vec![true; cfg.mn()];
        let (l_p, k_p) = self.pilot.pos;
        let cols = self.guard_cols(cfg);
        let half = (cols - 1) / 2;
        for dl in 0..=2 * self.l_max {
            let l = (l_p + cfg.m + dl - self.l_max) % cfg.m;
            for dk in 0..cols {
                // Columns k_p-half .. k_p-half+cols-1 cyclically; covers the
                // whole width once clipped.
                let k = (k_p + cfg.n + dk - half) % cfg.n;
                mask[cfg.cell_index(l, k)] = false;
            }
        }
        mask
    }

    pub fn data_cells(&self, cfg: &GridConfig) -> usize {
        self.data_mask(cfg).iter().filter(|&&d| d).count()
    }

    /// Build the transmitted EP frame from data bits (exactly
    /// `r * data_cells` of them) plus the lone pilot.
    pub fn frame(&self, bits: &[u8], constellation: &Constellation, cfg: &GridConfig) -> Result<DdFrame> {
        let r = constellation.bits_per_symbol();
        let mask = self.data_mask(cfg);
        let need = r * mask.iter().filter(|&&d| d).count();
        if bits.len() != need {
            return Err(Error::Dimension {
                op: "EpLayout::frame",
                expected: format!("{need} bits"),
                got: format!("{}", bits.len()),
            });
        }
        let mut frame = DdFrame::zeros(cfg);
        let mut cursor = 0;
        for q in 0..cfg.mn() {
            if !mask[q] {
                continue;
            }
            let group = &bits[cursor * r..(cursor + 1) * r];
            let point = constellation.points()[constellation.index_of_bits(group)];
            frame.entries_mut()[(q % cfg.m, q / cfg.m)] = point;
            cursor += 1;
        }
        frame.entries_mut()[self.pilot.pos] = self.pilot.value;
        Ok(frame)
    }
}
