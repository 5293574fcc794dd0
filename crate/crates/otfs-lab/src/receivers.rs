//! Classical receiver stages: pilot separation, sparse and read-off channel
//! estimators, pilot cancellation, and LMMSE detection.
//!
//! The estimators share a precomputed dictionary of single-tap equivalent
//! channels. Each dictionary atom is the response the pilot alone would
//! produce through a unit-gain path at one integer (delay, Doppler) pair;
//! matching pursuit correlates against these responses, while the
//! embedded-pilot estimator reads tap gains directly off the guard region.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::channel::{build_h_eff, ChannelPath, ChannelRealization, GBuilder};
use crate::grid::{vec_frame, DdFrame, GridConfig};
use crate::linalg::{cmatmul, cmatvec, fro_norm, hermitian, identity, solve_vec};
use crate::modem::{hard_demap, Constellation, PilotSpec};
use crate::transforms::PulseShapes;
use crate::{Error, Result};

/// Zero every entry with magnitude below `lambda`, keeping ties.
pub fn separate_pilot(y: &DdFrame, lambda: f64) -> DdFrame {
    let mut out = y.clone();
    for z in out.entries_mut().iter_mut() {
        if z.norm() < lambda {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    out
}

/// Baseline threshold: a fixed fraction of the frame maximum.
pub fn fixed_threshold(y: &DdFrame, alpha: f64) -> f64 {
    alpha * y.max_abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Omp,
    EpLmmse,
    Learned,
    Perfect,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Omp => "omp",
            EstimatorKind::EpLmmse => "ep-lmmse",
            EstimatorKind::Learned => "learned",
            EstimatorKind::Perfect => "perfect",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omp" => Ok(EstimatorKind::Omp),
            "ep-lmmse" => Ok(EstimatorKind::EpLmmse),
            "learned" => Ok(EstimatorKind::Learned),
            "perfect" => Ok(EstimatorKind::Perfect),
            other => Err(Error::config(format!(
                "unknown method {other:?}; expected perfect, omp, ep-lmmse, or learned"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    pub g_hat: Array2<Complex64>,
    pub method: EstimatorKind,
}

/// One candidate tap: its unit-gain equivalent channel and the response it
/// would give to the pilot alone.
#[derive(Debug, Clone)]
pub struct TapAtom {
    pub delay: usize,
    pub doppler: i64,
    pub g: Array2<Complex64>,
    pub response: Array1<Complex64>,
}

/// Dense dictionary over integer (delay, Doppler) taps within the guard
/// budget. Building it costs two matrix products per atom; reuse across
/// trials.
#[derive(Debug, Clone)]
pub struct TapDictionary {
    pub pilot: PilotSpec,
    pub l_max: usize,
    pub k_max: i64,
    cfg: GridConfig,
    atoms: Vec<TapAtom>,
}

impl TapDictionary {
    pub fn build(
        cfg: &GridConfig,
        pulses: &PulseShapes,
        pilot: &PilotSpec,
        l_max: usize,
        k_max: i64,
    ) -> Result<Self> {
        if l_max > cfg.l_cp {
            return Err(Error::config(format!(
                "dictionary delay span {l_max} exceeds the cyclic prefix {}",
                cfg.l_cp
            )));
        }
        if k_max < 0 {
            return Err(Error::config(format!("k_max must be nonnegative, got {k_max}")));
        }
        let builder = GBuilder::new(cfg, pulses);
        let x_p = vec_frame(&pilot.frame(cfg), cfg)?;
        let mut atoms = Vec::with_capacity((l_max + 1) * (2 * k_max as usize + 1));
        for delay in 0..=l_max {
            for doppler in -k_max..=k_max {
                let chan = ChannelRealization {
                    paths: vec![ChannelPath::new(Complex64::new(1.0, 0.0), delay, doppler, 0.0)],
                };
                let h_eff = build_h_eff(&chan, cfg)?;
                let g = builder.g_of(&h_eff);
                let response = cmatvec(&g, &x_p);
                atoms.push(TapAtom { delay, doppler, g, response });
            }
        }
        Ok(TapDictionary { pilot: *pilot, l_max, k_max, cfg: cfg.clone(), atoms })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[TapAtom] {
        &self.atoms
    }

    pub fn atom(&self, idx: usize) -> &TapAtom {
        &self.atoms[idx]
    }

    fn atom_index(&self, delay: usize, doppler: i64) -> Option<usize> {
        if delay > self.l_max || doppler.abs() > self.k_max {
            return None;
        }
        Some(delay * (2 * self.k_max as usize + 1) + (doppler + self.k_max) as usize)
    }

    /// Grid cell where a (delay, doppler) tap lands the pilot spike.
    pub fn landing_cell(&self, delay: usize, doppler: i64) -> (usize, usize) {
        let (l_p, k_p) = self.pilot.pos;
        let l = (l_p + delay) % self.cfg.m;
        let k = (k_p as i64 + doppler).rem_euclid(self.cfg.n as i64) as usize;
        (l, k)
    }
}

/// Orthogonal matching pursuit over the tap dictionary: greedy correlation
/// selection with a least-squares gain re-fit each round. Fractional Doppler
/// is deliberately absent from the dictionary, so it shows up as residual
/// model mismatch rather than a recoverable tap.
pub fn omp_estimate(
    y: &Array1<Complex64>,
    dict: &TapDictionary,
    sparsity: usize,
) -> Result<ChannelEstimate> {
    let mn = dict.cfg.mn();
    if y.len() != mn {
        return Err(Error::Dimension {
            op: "omp_estimate",
            expected: format!("{mn} samples"),
            got: format!("{}", y.len()),
        });
    }
    if sparsity == 0 || sparsity > dict.len() {
        return Err(Error::config(format!(
            "sparsity {sparsity} outside the dictionary size {}",
            dict.len()
        )));
    }
    let mut g_hat = Array2::zeros((mn, mn));
    let y_energy: f64 = y.iter().map(|z| z.norm_sqr()).sum();
    if y_energy == 0.0 {
        return Ok(ChannelEstimate { g_hat, method: EstimatorKind::Omp });
    }

    let norms: Vec<f64> = dict
        .atoms
        .iter()
        .map(|a| a.response.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut residual = y.clone();
    let mut selected: Vec<usize> = Vec::with_capacity(sparsity);
    let mut gains: Array1<Complex64> = Array1::zeros(0);
    for _ in 0..sparsity {
        let mut best = None;
        let mut best_score = 0.0;
        for (i, atom) in dict.atoms.iter().enumerate() {
            if selected.contains(&i) || norms[i] == 0.0 {
                continue;
            }
            let corr: Complex64 = atom.response.iter().zip(residual.iter()).map(|(a, r)| a.conj() * r).sum();
            let score = corr.norm() / norms[i];
            // Doppler-aliased atoms (2k_max+1 > N) are collinear and tie in
            // score exactly; a relative band hands ties to the lower index
            // instead of to rounding noise.
            if score > best_score * (1.0 + 1e-9) {
                best_score = score;
                best = Some(i);
            }
        }
        let Some(best) = best else { break };
        selected.push(best);

        // Least-squares re-fit over the selected atoms via normal equations.
        let p = selected.len();
        let mut aha: Array2<Complex64> = Array2::zeros((p, p));
        let mut ahy: Array1<Complex64> = Array1::zeros(p);
        for (r, &i) in selected.iter().enumerate() {
            let ai = &dict.atoms[i].response;
            ahy[r] = ai.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum();
            for (c, &j) in selected.iter().enumerate() {
                let aj = &dict.atoms[j].response;
                aha[(r, c)] = ai.iter().zip(aj.iter()).map(|(a, b)| a.conj() * b).sum();
            }
        }
        gains = solve_vec(aha, &ahy)?;

        residual = y.clone();
        for (r, &i) in selected.iter().enumerate() {
            let ai = &dict.atoms[i].response;
            for (res, a) in residual.iter_mut().zip(ai.iter()) {
                *res -= gains[r] * a;
            }
        }
        let res_energy: f64 = residual.iter().map(|z| z.norm_sqr()).sum();
        if res_energy < 1e-24 * y_energy {
            break;
        }
    }

    for (r, &i) in selected.iter().enumerate() {
        let atom = &dict.atoms[i];
        g_hat.zip_mut_with(&atom.g, |acc, &v| *acc += gains[r] * v);
    }
    Ok(ChannelEstimate { g_hat, method: EstimatorKind::Omp })
}

/// Embedded-pilot estimator: read each candidate tap's gain directly off the
/// cell where the pilot lands, de-rotated by the atom's own response there,
/// and keep taps clearing the 3-sigma noise gate. When the Doppler span
/// exceeds the grid, aliased candidates share a cell; the smallest |doppler|
/// candidate claims it.
pub fn ep_lmmse_estimate(
    y: &DdFrame,
    dict: &TapDictionary,
    sigma_n2: f64,
) -> Result<ChannelEstimate> {
    let cfg = &dict.cfg;
    let mn = cfg.mn();
    let gate = 3.0 * sigma_n2.sqrt() / dict.pilot.value.norm();
    let mut g_hat: Array2<Complex64> = Array2::zeros((mn, mn));
    let mut claimed = vec![false; mn];
    for delay in 0..=dict.l_max {
        for step in 0..=2 * dict.k_max {
            // 0, 1, -1, 2, -2, ...: nearest Doppler first.
            let doppler = if step % 2 == 1 { (step + 1) / 2 } else { -(step / 2) };
            let (l, k) = dict.landing_cell(delay, doppler);
            let cell = cfg.cell_index(l, k);
            if claimed[cell] {
                continue;
            }
            claimed[cell] = true;
            let idx = dict.atom_index(delay, doppler).expect("atom within span");
            let atom = &dict.atoms[idx];
            let reference = atom.response[cell];
            debug_assert!(reference.norm() > 0.0, "integer tap must land on its cell");
            let h = y.entries()[(l, k)] / reference;
            if h.norm() > gate {
                g_hat.zip_mut_with(&atom.g, |acc, &v| *acc += h * v);
            }
        }
    }
    Ok(ChannelEstimate { g_hat, method: EstimatorKind::EpLmmse })
}

/// Remove the estimated pilot contribution: `y - G_hat x_p`.
pub fn cancel_pilot(
    y: &Array1<Complex64>,
    g_hat: &Array2<Complex64>,
    pilot: &PilotSpec,
    cfg: &GridConfig,
) -> Result<Array1<Complex64>> {
    if y.len() != cfg.mn() || g_hat.dim() != (cfg.mn(), cfg.mn()) {
        return Err(Error::Dimension {
            op: "cancel_pilot",
            expected: format!("{0} and {0}x{0}", cfg.mn()),
            got: format!("{} and {}x{}", y.len(), g_hat.dim().0, g_hat.dim().1),
        });
    }
    let x_p = vec_frame(&pilot.frame(cfg), cfg)?;
    Ok(y - &cmatvec(g_hat, &x_p))
}

/// Regularized linear detector `(G^H G + sigma_e^2 I)^{-1} G^H y`.
pub fn lmmse_detect(
    y_d: &Array1<Complex64>,
    g_hat: &Array2<Complex64>,
    sigma_e2: f64,
) -> Result<Array1<Complex64>> {
    let n = y_d.len();
    if g_hat.dim() != (n, n) {
        return Err(Error::Dimension {
            op: "lmmse_detect",
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", g_hat.dim().0, g_hat.dim().1),
        });
    }
    let gh = hermitian(g_hat);
    let mut a = cmatmul(&gh, g_hat);
    if sigma_e2 > 0.0 {
        a = a + identity(n).mapv(|z| z * sigma_e2);
    }
    let rhs = cmatvec(&gh, y_d);
    solve_vec(a, &rhs)
}

/// Full classical chain with the true channel: cancel the pilot, detect, and
/// hard-demap every cell.
pub fn perfect_csi_detect(
    y: &Array1<Complex64>,
    g_true: &Array2<Complex64>,
    pilot: &PilotSpec,
    sigma_n2: f64,
    constellation: &Constellation,
    cfg: &GridConfig,
) -> Result<Vec<u8>> {
    let y_d = cancel_pilot(y, g_true, pilot, cfg)?;
    let x_hat = lmmse_detect(&y_d, g_true, sigma_n2.max(1e-12))?;
    Ok(hard_demap(&x_hat, constellation))
}

/// Single-trial estimate quality `|G - G_hat|^2 / |G|^2`.
pub fn nmse(g_true: &Array2<Complex64>, g_hat: &Array2<Complex64>) -> f64 {
    let mut err = 0.0;
    for (a, b) in g_true.iter().zip(g_hat.iter()) {
        err += (a - b).norm_sqr();
    }
    let denom = fro_norm(g_true).powi(2);
    if denom == 0.0 {
        if err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        err / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{equivalent_channel, NoiseModel};
    use crate::grid::unvec_frame;
    use crate::modem::{insert_pilot, map_bits};
    use crate::rng::{standard_complex_gaussian, RngFactory};
    use rand::Rng;

    fn desk() -> (GridConfig, PulseShapes, PilotSpec) {
        let cfg = GridConfig::desk_8x8();
        let pulses = PulseShapes::identity(&cfg);
        let pilot = PilotSpec::centred(10.0, &cfg).unwrap();
        (cfg, pulses, pilot)
    }

    fn realization(paths: &[(Complex64, usize, i64, f64)]) -> ChannelRealization {
        ChannelRealization {
            paths: paths.iter().map(|&(g, l, k, f)| ChannelPath::new(g, l, k, f)).collect(),
        }
    }

    #[test]
    fn zero_threshold_keeps_everything() {
        let (cfg, _, _) = desk();
        let mut rng = RngFactory::new(1).stream(0);
        let vals = standard_complex_gaussian(&mut rng, cfg.mn());
        let frame = unvec_frame(&vals, &cfg).unwrap();
        let kept = separate_pilot(&frame, 0.0);
        assert_eq!(kept.entries(), frame.entries());
        let none = separate_pilot(&frame, frame.max_abs() * 1.001);
        assert!(none.entries().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn strong_pilot_survives_half_max_threshold_alone() {
        // Single path, integer Doppler, strong pilot: thresholding at half
        // the maximum must keep exactly the shifted pilot spike.
        let (cfg, pulses, pilot) = desk();
        let builder = GBuilder::new(&cfg, &pulses);
        let chan = realization(&[(Complex64::new(0.9, 0.2), 2, 1, 0.0)]);
        let eq = equivalent_channel(&chan, &builder, &cfg).unwrap();

        let mut rng = RngFactory::new(7).stream(1);
        let bits: Vec<u8> = (0..cfg.mn()).map(|_| rng.gen_range(0..2)).collect();
        let data = map_bits(&bits, &Constellation::bpsk(), &cfg).unwrap();
        let tx = insert_pilot(&data, &pilot, &cfg).unwrap();
        let y = cmatvec(&eq.g, &vec_frame(&tx, &cfg).unwrap());
        let y_frame = unvec_frame(&y, &cfg).unwrap();

        let lambda = fixed_threshold(&y_frame, 0.5);
        let kept = separate_pilot(&y_frame, lambda);
        let nonzero: Vec<(usize, usize)> = (0..cfg.m)
            .flat_map(|l| (0..cfg.n).map(move |k| (l, k)))
            .filter(|&(l, k)| kept.entries()[(l, k)].norm() > 0.0)
            .collect();
        let dict = TapDictionary::build(&cfg, &pulses, &pilot, 3, 4).unwrap();
        assert_eq!(nonzero, vec![dict.landing_cell(2, 1)]);
    }

    #[test]
    fn dictionary_atoms_have_pilot_energy() {
        let (cfg, pulses, pilot) = desk();
        let dict = TapDictionary::build(&cfg, &pulses, &pilot, 3, 4).unwrap();
        assert_eq!(dict.len(), 4 * 9);
        for atom in dict.atoms() {
            let e: f64 = atom.response.iter().map(|z| z.norm_sqr()).sum();
            assert!((e - pilot.energy()).abs() < 1e-9, "atom ({},{})", atom.delay, atom.doppler);
        }
    }

    #[test]
    fn omp_recovers_two_integer_taps_exactly() {
        let (cfg, pulses, pilot) = desk();
        let builder = GBuilder::new(&cfg, &pulses);
        let g0 = Complex64::new(0.8, -0.3);
        let g1 = Complex64::new(-0.2, 0.45);
        let chan = realization(&[(g0, 0, 1, 0.0), (g1, 2, -2, 0.0)]);
        let eq = equivalent_channel(&chan, &builder, &cfg).unwrap();
        // Pilot-only transmission.
        let y = cmatvec(&eq.g, &vec_frame(&pilot.frame(&cfg), &cfg).unwrap());
        let dict = TapDictionary::build(&cfg, &pulses, &pilot, 3, 4).unwrap();
        let est = omp_estimate(&y, &dict, 2).unwrap();
        assert!(nmse(&eq.g, &est.g_hat) < 1e-16, "nmse {}", nmse(&eq.g, &est.g_hat));
    }

    #[test]
    fn omp_zero_input_gives_zero_estimate() {
        let (cfg, pulses, pilot) = desk();
        let dict = TapDictionary::build(&cfg, &pulses, &pilot, 3, 4).unwrap();
        let y = Array1::zeros(cfg.mn());
        let est = omp_estimate(&y, &dict, 2).unwrap();
        assert!(est.g_hat.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn omp_rejects_oversized_sparsity() {
        let (cfg, pulses, pilot) = desk();
        let dict = TapDictionary::build(&cfg, &pulses, &pilot, 1, 1).unwrap();
        let y = Array1::zeros(cfg.mn());
        assert!(omp_estimate(&y, &dict, dict.len() + 1).is_err());
        assert!(omp_estimate(&y, &dict, 0).is_err());
    }

    #[test]
    fn omp_hits_model_mismatch_floor_under_fractional_doppler() {
        let (cfg, pulses, pilot) = desk();
        let builder = GBuilder::new(&cfg, &pulses);
        let chan = realization(&[(Complex64::new(1.0, 0.0), 1, 1, 0.5)]);
        let eq = equivalent_channel(&chan, &builder, &cfg).unwrap();
        let y = cmatvec(&eq.g, &vec_frame(&pilot.frame(&cfg), &cfg).unwrap());
        let dict = TapDictionary::build(&cfg, &pulses, &pilot, 3, 4).unwrap();
        let est = omp_estimate(&y, &dict, 1).unwrap();
        assert!(nmse(&eq.g, &est.g_hat) > 1e-2);
    }

    #[test]
    fn ep_read_off_is_exact_for_integer_taps_in_guard() {
        let (cfg, pulses, pilot) = desk();
        let builder = GBuilder::new(&cfg, &pulses);
        let chan = realization(&[(Complex64::new(0.6, 0.7), 3, -2, 0.0)]);
        let eq = equivalent_channel(&chan, &builder, &cfg).unwrap();
        let y = cmatvec(&eq.g, &vec_frame(&pilot.frame(&cfg), &cfg).unwrap());
        let dict = TapDictionary::build(&cfg, &pulses, &pilot, 3, 4).unwrap();
        let est = ep_lmmse_estimate(&unvec_frame(&y, &cfg).unwrap(), &dict, 0.0).unwrap();
        assert!(nmse(&eq.g, &est.g_hat) < 1e-20, "nmse {}", nmse(&eq.g, &est.g_hat));
    }

    #[test]
    fn ep_noise_gate_rejects_pure_noise_frames() {
        let (cfg, pulses, pilot) = desk();
        let dict = TapDictionary::build(&cfg, &pulses, &pilot, 3, 4).unwrap();
        let sigma_n2 = 1.0;
        let mut frames_with_taps = 0;
        let factory = RngFactory::new(99);
        for trial in 0..200 {
            let mut rng = factory.stream(trial);
            let noise = standard_complex_gaussian(&mut rng, cfg.mn());
            let est = ep_lmmse_estimate(&unvec_frame(&noise, &cfg).unwrap(), &dict, sigma_n2).unwrap();
            if est.g_hat.iter().any(|z| z.norm() > 0.0) {
                frames_with_taps += 1;
            }
        }
        // Per-cell false alarm is exp(-9); 32 read cells per frame puts the
        // per-frame rate near 0.4%, so 200 trials stay in single digits.
        assert!(frames_with_taps <= 5, "{frames_with_taps} of 200 frames kept noise taps");
    }

    #[test]
    fn cancel_with_true_channel_removes_pilot_exactly() {
        let (cfg, pulses, pilot) = desk();
        let builder = GBuilder::new(&cfg, &pulses);
        let chan = realization(&[(Complex64::new(0.9, 0.1), 1, 2, 0.25), (Complex64::new(0.3, -0.4), 3, -1, -0.5)]);
        let eq = equivalent_channel(&chan, &builder, &cfg).unwrap();
        let y_pilot_only = cmatvec(&eq.g, &vec_frame(&pilot.frame(&cfg), &cfg).unwrap());
        let residual = cancel_pilot(&y_pilot_only, &eq.g, &pilot, &cfg).unwrap();
        let energy: f64 = residual.iter().map(|z| z.norm_sqr()).sum();
        assert!(energy < 1e-20, "residual energy {energy}");
    }

    #[test]
    fn lmmse_identity_limit_passes_input_through() {
        let cfg = GridConfig::desk_8x8();
        let mut rng = RngFactory::new(5).stream(0);
        let y = standard_complex_gaussian(&mut rng, cfg.mn());
        let x = lmmse_detect(&y, &identity(cfg.mn()), 1e-12).unwrap();
        for (a, b) in x.iter().zip(y.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn lmmse_shrinks_monotonically_with_regularization() {
        let (cfg, pulses, pilot) = desk();
        let _ = pilot;
        let builder = GBuilder::new(&cfg, &pulses);
        let chan = realization(&[(Complex64::new(1.0, 0.0), 1, 1, 0.0)]);
        let eq = equivalent_channel(&chan, &builder, &cfg).unwrap();
        let mut rng = RngFactory::new(6).stream(0);
        let y = standard_complex_gaussian(&mut rng, cfg.mn());
        let mut last = f64::INFINITY;
        for sigma_e2 in [1e-6, 1e-2, 1.0, 100.0] {
            let x = lmmse_detect(&y, &eq.g, sigma_e2).unwrap();
            let norm: f64 = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            assert!(norm < last, "norm {norm} at sigma_e2 {sigma_e2}");
            last = norm;
        }
    }

    #[test]
    fn perfect_csi_noiseless_recovers_all_bits() {
        let (cfg, pulses, pilot) = desk();
        let builder = GBuilder::new(&cfg, &pulses);
        let constellation = Constellation::bpsk();
        let factory = RngFactory::new(17);
        for trial in 0..10 {
            let mut rng = factory.stream(trial);
            let chan = crate::channel::sample_channel(
                &crate::channel::ChannelStats { paths: 2, l_max: 3, k_max: 4, fractional: true },
                &cfg,
                &mut rng,
            )
            .unwrap();
            let eq = equivalent_channel(&chan, &builder, &cfg).unwrap();
            let bits: Vec<u8> = (0..cfg.mn()).map(|_| rng.gen_range(0..2)).collect();
            let data = map_bits(&bits, &constellation, &cfg).unwrap();
            let tx = insert_pilot(&data, &pilot, &cfg).unwrap();
            let y = cmatvec(&eq.g, &vec_frame(&tx, &cfg).unwrap());
            let got = perfect_csi_detect(&y, &eq.g, &pilot, NoiseModel::Off.sigma2(), &constellation, &cfg).unwrap();
            assert_eq!(got, bits, "trial {trial}");
        }
    }

    #[test]
    fn nmse_definitional_cases() {
        let g = identity(4);
        assert_eq!(nmse(&g, &g), 0.0);
        let zero = Array2::zeros((4, 4));
        assert!((nmse(&g, &zero) - 1.0).abs() < 1e-15);
    }
}
