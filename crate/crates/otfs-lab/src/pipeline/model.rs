//! The transmit-to-bit-probability graph with per-block learned/classical
//! substitution.
//!
//! Every stage of the receiver has a classical counterpart, so each block can
//! run either as a learned tape node (gradients flow) or as a fixed function
//! whose output enters the tape as a constant. The same graph therefore
//! serves training, hybrid operation, and the classical baselines.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::autodiff::complex::CTensor;
use crate::autodiff::optim::{BoundParams, ParamStore};
use crate::autodiff::{Tape, Tensor};
use crate::channel::{
    build_h_serial, equivalent_channel, sample_channel, ChannelRealization, ChannelStats, GBuilder,
};
use crate::grid::GridConfig;
use crate::modem::{hard_demap, insert_pilot, map_bits, Constellation, PilotSpec};
use crate::neural::cenet::{self, CenetSpec};
use crate::neural::{demapper, dlzak, threshold};
use crate::receivers::{omp_estimate, EstimatorKind, TapDictionary};
use crate::rng::{standard_complex_gaussian, RngFactory, SimRng};
use crate::transforms::PulseShapes;
use crate::{Error, Result};
use rand::Rng;

pub const PARAM_CONST_RE: &str = "constellation.re";
pub const PARAM_CONST_IM: &str = "constellation.im";
pub const PARAM_PILOT_RE: &str = "pilot.re";
pub const PARAM_PILOT_IM: &str = "pilot.im";

/// Probabilities are clamped to `[EPS, 1 - EPS]` inside the loss.
pub const BCE_EPS: f64 = 1e-7;

/// Fraction of the frame maximum used by the fixed separation threshold when
/// the threshold network is off.
pub const BASELINE_ALPHA: f64 = 0.5;

// Initialization draws use stream ids far above anything the training loop
// or evaluators hand out.
const INIT_STREAM_THRESHOLD: u64 = u64::MAX - 1;
const INIT_STREAM_CENET: u64 = u64::MAX - 2;
const INIT_STREAM_DEMAPPER: u64 = u64::MAX - 3;

/// Which blocks run in learned form. A block that is off runs its classical
/// counterpart and contributes no parameters to the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainability {
    pub constellation: bool,
    pub pilot: bool,
    pub dlzak: bool,
    pub threshold: bool,
    pub cenet: bool,
    pub demapper: bool,
}

impl Trainability {
    pub fn all_on() -> Self {
        Trainability {
            constellation: true,
            pilot: true,
            dlzak: true,
            threshold: true,
            cenet: true,
            demapper: true,
        }
    }

    pub fn all_off() -> Self {
        Trainability {
            constellation: false,
            pilot: false,
            dlzak: false,
            threshold: false,
            cenet: false,
            demapper: false,
        }
    }

    /// Receiver-only learning: classical transmitter and transforms.
    pub fn receiver_only() -> Self {
        Trainability {
            constellation: false,
            pilot: false,
            dlzak: false,
            threshold: true,
            cenet: true,
            demapper: true,
        }
    }

    pub fn any(&self) -> bool {
        self.constellation || self.pilot || self.dlzak || self.threshold || self.cenet || self.demapper
    }

    /// Whether a named parameter belongs to a block that is currently on.
    pub fn covers(&self, name: &str) -> bool {
        if name.starts_with("constellation.") {
            self.constellation
        } else if name.starts_with("pilot.") {
            self.pilot
        } else if name.starts_with("dlzak.") {
            self.dlzak
        } else if name.starts_with("threshold.") {
            self.threshold
        } else if name.starts_with("cenet.") {
            self.cenet
        } else if name.starts_with("demapper.") {
            self.demapper
        } else {
            false
        }
    }
}

/// Grid, modulation, pilot, and architecture hyperparameters shared by every
/// chain variant.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub cfg: GridConfig,
    /// Constellation order (2 or 4).
    pub order: usize,
    pub pilot: PilotSpec,
    /// Delay span of the estimation dictionary.
    pub dict_l_max: usize,
    /// Doppler span of the estimation dictionary.
    pub dict_k_max: i64,
    /// Taps the matching-pursuit baseline may select.
    pub omp_sparsity: usize,
    pub threshold_hidden: usize,
    pub demapper_hidden: usize,
    pub cenet: CenetSpec,
}

impl ModelSpec {
    pub fn new(
        cfg: GridConfig,
        order: usize,
        pilot: PilotSpec,
        dict_l_max: usize,
        dict_k_max: i64,
        omp_sparsity: usize,
    ) -> Result<Self> {
        Constellation::for_order(order)?;
        let cenet = CenetSpec::for_grid(cfg.m, cfg.n)?;
        let spec = ModelSpec {
            cfg,
            order,
            pilot,
            dict_l_max,
            dict_k_max,
            omp_sparsity,
            threshold_hidden: 32,
            demapper_hidden: 64,
            cenet,
        };
        Ok(spec)
    }

    /// 8x8 BPSK with a strong centred pilot; the configuration every smoke
    /// test uses.
    pub fn desk() -> Result<Self> {
        let cfg = GridConfig::desk_8x8();
        let pilot = PilotSpec::centred(10.0, &cfg)?;
        ModelSpec::new(cfg, 2, pilot, 3, 4, 2)
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    pub fn bits_per_frame(&self) -> usize {
        self.bits_per_symbol() * self.cfg.mn()
    }

    /// Classical reference constellation for this order.
    pub fn constellation(&self) -> Constellation {
        Constellation::for_order(self.order).expect("order validated at construction")
    }

    /// Stable architecture tag stored in checkpoints; loading rejects a
    /// mismatch.
    pub fn arch_string(&self) -> String {
        format!(
            "order{}-th{}-dm{}-ce{}x{}",
            self.order,
            self.threshold_hidden,
            self.demapper_hidden,
            self.cenet.depth_down,
            self.cenet.depth_up
        )
    }
}

/// Fresh parameter store for every block, at init-equivalence with the
/// classical chain wherever a classical counterpart exists.
pub fn init_all_params(spec: &ModelSpec, seed: u64) -> Result<ParamStore> {
    let factory = RngFactory::new(seed);
    let mut params = ParamStore::new();

    let c = spec.constellation();
    let re: Vec<f64> = c.points().iter().map(|p| p.re).collect();
    let im: Vec<f64> = c.points().iter().map(|p| p.im).collect();
    params.insert(PARAM_CONST_RE, &[c.size()], re)?;
    params.insert(PARAM_CONST_IM, &[c.size()], im)?;
    params.insert(PARAM_PILOT_RE, &[1], vec![spec.pilot.value.re])?;
    params.insert(PARAM_PILOT_IM, &[1], vec![spec.pilot.value.im])?;

    dlzak::init_params(&mut params, spec.cfg.n)?;
    threshold::init_params(
        &mut params,
        spec.cfg.mn(),
        spec.threshold_hidden,
        &mut factory.stream(INIT_STREAM_THRESHOLD),
    )?;
    cenet::init_params(&mut params, &spec.cenet, &mut factory.stream(INIT_STREAM_CENET))?;
    demapper::init_params(
        &mut params,
        spec.demapper_hidden,
        spec.bits_per_symbol(),
        &mut factory.stream(INIT_STREAM_DEMAPPER),
    )?;
    Ok(params)
}

/// Everything reusable across trials: transform constants, the Kronecker
/// factors for G, and the estimation dictionary.
#[derive(Debug, Clone)]
pub struct ChainContext {
    pub spec: ModelSpec,
    pub pulses: PulseShapes,
    pub builder: GBuilder,
    pub dict: TapDictionary,
    pub constellation: Constellation,
    zak_a0: Vec<f64>,
    zak_b0: Vec<f64>,
}

impl ChainContext {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let pulses = PulseShapes::identity(&spec.cfg);
        let builder = GBuilder::new(&spec.cfg, &pulses);
        let dict =
            TapDictionary::build(&spec.cfg, &pulses, &spec.pilot, spec.dict_l_max, spec.dict_k_max)?;
        let constellation = spec.constellation();
        // Reuse the learned-transform initializer so the fixed path is the
        // same matrix to the last bit.
        let mut tmp = ParamStore::new();
        dlzak::init_params(&mut tmp, spec.cfg.n)?;
        let zak_a0 = tmp.get(dlzak::PARAM_A)?.values.clone();
        let zak_b0 = tmp.get(dlzak::PARAM_B)?.values.clone();
        Ok(ChainContext { spec, pulses, builder, dict, constellation, zak_a0, zak_b0 })
    }

    fn zak_constants(&self, tape: &Tape) -> Result<(Tensor, Tensor)> {
        let n = self.spec.cfg.n;
        let a = tape.constant(&[n, n], self.zak_a0.clone())?;
        let b = tape.constant(&[n, n], self.zak_b0.clone())?;
        Ok((a, b))
    }
}

/// One Monte Carlo draw: payload bits, a channel realization with both matrix
/// views, and unit-variance serial noise. Methods compared on the same trial
/// therefore see identical randomness.
#[derive(Debug, Clone)]
pub struct Trial {
    pub bits: Vec<u8>,
    pub channel: ChannelRealization,
    pub h_serial: Array2<Complex64>,
    pub g_true: Array2<Complex64>,
    pub noise_unit: Array1<Complex64>,
}

/// Draw order is fixed (bits, channel, noise); all consumers of a stream see
/// the same trial.
pub fn draw_trial(ctx: &ChainContext, stats: &ChannelStats, rng: &mut SimRng) -> Result<Trial> {
    let cfg = &ctx.spec.cfg;
    let bits: Vec<u8> = (0..ctx.spec.bits_per_frame()).map(|_| rng.gen_range(0..2u8)).collect();
    let channel = sample_channel(stats, cfg, rng)?;
    let noise_unit = standard_complex_gaussian(rng, cfg.frame_len());
    let h_serial = build_h_serial(&channel, cfg)?;
    let g_true = equivalent_channel(&channel, &ctx.builder, cfg)?.g;
    Ok(Trial { bits, channel, h_serial, g_true, noise_unit })
}

/// Which blocks run learned, and which estimator substitutes when CENet is
/// off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainConfig {
    pub learned: Trainability,
    /// Fallback estimator when `learned.cenet` is off: `Perfect` or `Omp`.
    pub baseline: EstimatorKind,
}

impl ChainConfig {
    pub fn classical(baseline: EstimatorKind) -> Self {
        ChainConfig { learned: Trainability::all_off(), baseline }
    }

    pub fn learned_full() -> Self {
        ChainConfig { learned: Trainability::all_on(), baseline: EstimatorKind::Omp }
    }

    pub fn learned_with(learned: Trainability) -> Self {
        ChainConfig { learned, baseline: EstimatorKind::Omp }
    }

    /// The estimator actually in the chain.
    pub fn estimator(&self) -> EstimatorKind {
        if self.learned.cenet {
            EstimatorKind::Learned
        } else {
            self.baseline
        }
    }
}

/// Outputs of one chain pass. `probs` and `g_hat_t` stay on the tape so a
/// loss can target either the bits or the channel estimate; the rest are
/// detached diagnostics.
#[derive(Debug, Clone)]
pub struct E2eOutput {
    pub probs: Tensor,
    pub g_hat_t: CTensor,
    pub g_hat: Array2<Complex64>,
    pub lambda: f64,
    pub kept_cells: usize,
    pub hard_bits: Vec<u8>,
}

fn one_hot_rows(indices: &[usize], cols: usize) -> Vec<f64> {
    let mut s = vec![0.0; indices.len() * cols];
    for (row, &idx) in indices.iter().enumerate() {
        s[row * cols + idx] = 1.0;
    }
    s
}

/// Transmit symbols as a `[MN, 1]` column in grid cell order.
fn tx_symbols(
    tape: &Tape,
    ctx: &ChainContext,
    bits: &[u8],
    bound: &BoundParams,
    learned: bool,
) -> Result<CTensor> {
    let cfg = &ctx.spec.cfg;
    let r = ctx.spec.bits_per_symbol();
    if learned {
        let labels = ctx.constellation.labels();
        let indices: Vec<usize> = bits
            .chunks(r)
            .map(|group| {
                labels
                    .iter()
                    .position(|l| l.as_slice() == group)
                    .expect("labels cover every r-bit pattern")
            })
            .collect();
        let sel = tape
            .constant(&[cfg.mn(), ctx.constellation.size()], one_hot_rows(&indices, ctx.constellation.size()))?;
        let re = bound.get(PARAM_CONST_RE)?.reshape(&[ctx.constellation.size(), 1])?;
        let im = bound.get(PARAM_CONST_IM)?.reshape(&[ctx.constellation.size(), 1])?;
        Ok(CTensor { re: sel.matmul(&re)?, im: sel.matmul(&im)? })
    } else {
        let frame = map_bits(bits, &ctx.constellation, cfg)?;
        let v = crate::grid::vec_frame(&frame, cfg)?;
        CTensor::constant(tape, &[cfg.mn(), 1], v.as_slice().expect("contiguous"))
    }
}

/// Pilot frame as a `[MN, 1]` column; learned form reads the complex neuron
/// from the store so the transmit side and the cancellation stage share it.
fn pilot_column(
    tape: &Tape,
    ctx: &ChainContext,
    bound: &BoundParams,
    learned: bool,
) -> Result<CTensor> {
    let cfg = &ctx.spec.cfg;
    let cell = ctx.spec.pilot.cell_index(cfg);
    if learned {
        let mut hot = vec![0.0; cfg.mn()];
        hot[cell] = 1.0;
        let e = tape.constant(&[cfg.mn(), 1], hot)?;
        let re = bound.get(PARAM_PILOT_RE)?.reshape(&[1, 1])?;
        let im = bound.get(PARAM_PILOT_IM)?.reshape(&[1, 1])?;
        Ok(CTensor { re: e.matmul(&re)?, im: e.matmul(&im)? })
    } else {
        let mut v = vec![Complex64::new(0.0, 0.0); cfg.mn()];
        v[cell] = ctx.spec.pilot.value;
        CTensor::constant(tape, &[cfg.mn(), 1], &v)
    }
}

/// Run the full chain for one trial. Blocks marked learned read their
/// parameters from `bound`; all others run classically and enter the tape as
/// constants. Gradients flow through every differentiable fixed stage either
/// way, so hybrid combinations train correctly.
pub fn forward_e2e(
    tape: &Tape,
    ctx: &ChainContext,
    trial: &Trial,
    sigma_n2: f64,
    bound: &BoundParams,
    chain: &ChainConfig,
) -> Result<E2eOutput> {
    let cfg = &ctx.spec.cfg;
    let (m, n, l_cp) = (cfg.m, cfg.n, cfg.l_cp);
    if trial.bits.len() != ctx.spec.bits_per_frame() {
        return Err(Error::Dimension {
            op: "forward_e2e",
            expected: format!("{} bits", ctx.spec.bits_per_frame()),
            got: format!("{}", trial.bits.len()),
        });
    }
    if chain.baseline == EstimatorKind::EpLmmse || chain.baseline == EstimatorKind::Learned {
        return Err(Error::config(format!(
            "baseline estimator must be perfect or omp, got {}",
            chain.baseline.as_str()
        )));
    }

    // Transmitter: data symbols plus superimposed pilot, then to delay-time.
    let x_d = tx_symbols(tape, ctx, &trial.bits, bound, chain.learned.constellation)?;
    let x_p = pilot_column(tape, ctx, bound, chain.learned.pilot)?;
    let x_dd = x_d.add(&x_p)?;
    let x_frame = x_dd.unvec_cm(m, n)?;

    let (a0, b0) = ctx.zak_constants(tape)?;
    let s_dt = if chain.learned.dlzak {
        dlzak::dl_izak(&x_frame, bound.get(dlzak::PARAM_A)?, bound.get(dlzak::PARAM_B)?)?
    } else {
        dlzak::dl_izak(&x_frame, &a0, &b0)?
    };

    // Cyclic prefix, serialization, channel, noise.
    let s_cp = if l_cp > 0 {
        let tail = s_dt.slice(0, m - l_cp, l_cp)?;
        CTensor::concat(&[&tail, &s_dt], 0)?
    } else {
        s_dt
    };
    let s_serial = s_cp.vec_cm()?;
    let len = cfg.frame_len();
    let h_vals: Vec<Complex64> = trial.h_serial.iter().cloned().collect();
    let h_const = CTensor::constant(tape, &[len, len], &h_vals)?;
    let mut y_serial = h_const.matmul(&s_serial)?;
    if sigma_n2 > 0.0 {
        let sigma = sigma_n2.sqrt();
        let w: Vec<Complex64> = trial.noise_unit.iter().map(|z| z * sigma).collect();
        let w_const = CTensor::constant(tape, &[len, 1], &w)?;
        y_serial = y_serial.add(&w_const)?;
    }

    // Receiver front: drop the prefix, back to delay-Doppler.
    let y_blocks = y_serial.unvec_cm(m + l_cp, n)?;
    let y_data = y_blocks.slice(0, l_cp, m)?;
    let y_dd = if chain.learned.dlzak {
        dlzak::dl_zak(&y_data, bound.get(dlzak::PARAM_A)?, bound.get(dlzak::PARAM_B)?)?
    } else {
        dlzak::dl_zak(&y_data, &a0, &b0)?
    };
    let y_vec = y_dd.vec_cm()?;
    let y_abs = y_vec.abs()?;

    // Pilot separation: learned scalar threshold with a soft mask, or the
    // fixed-fraction hard mask.
    let (mask, lambda) = if chain.learned.threshold {
        let lambda_t = threshold::threshold_lambda(&y_abs, bound)?;
        let lambda = lambda_t.values()[0];
        (threshold::soft_mask(&y_abs, &lambda_t)?, lambda)
    } else {
        let abs_vals = y_abs.values();
        let max = abs_vals.iter().cloned().fold(0.0f64, f64::max);
        let lambda = BASELINE_ALPHA * max;
        let hard: Vec<f64> =
            abs_vals.iter().map(|&a| if a < lambda { 0.0 } else { 1.0 }).collect();
        (tape.constant(&[cfg.mn(), 1], hard)?, lambda)
    };
    let kept_cells = mask.values().iter().filter(|&&v| v > 0.5).count();
    let y_p = CTensor { re: y_vec.re.mul(&mask)?, im: y_vec.im.mul(&mask)? };

    // Channel estimation.
    let g_hat_t = match chain.estimator() {
        EstimatorKind::Learned => {
            let y_p_frame = y_p.unvec_cm(m, n)?;
            cenet::cenet_forward(&y_p_frame, bound, &ctx.spec.cenet)?
        }
        EstimatorKind::Perfect => {
            let vals: Vec<Complex64> = trial.g_true.iter().cloned().collect();
            CTensor::constant(tape, &[cfg.mn(), cfg.mn()], &vals)?
        }
        EstimatorKind::Omp => {
            let y_p_arr = Array1::from_vec(y_p.values());
            let est = omp_estimate(&y_p_arr, &ctx.dict, ctx.spec.omp_sparsity)?;
            let vals: Vec<Complex64> = est.g_hat.iter().cloned().collect();
            CTensor::constant(tape, &[cfg.mn(), cfg.mn()], &vals)?
        }
        EstimatorKind::EpLmmse => unreachable!("rejected above"),
    };
    let g_hat_vals = g_hat_t.values();
    let g_hat = Array2::from_shape_vec((cfg.mn(), cfg.mn()), g_hat_vals)
        .expect("estimator output is MN x MN");

    // Pilot cancellation and regularized linear detection.
    let y_d = y_vec.sub(&g_hat_t.matmul(&x_p)?)?;
    let gh = g_hat_t.conj_transpose()?;
    let sigma_e2 = sigma_n2.max(1e-12);
    let eye: Vec<Complex64> = (0..cfg.mn() * cfg.mn())
        .map(|i| {
            if i % (cfg.mn() + 1) == 0 {
                Complex64::new(sigma_e2, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let reg = CTensor::constant(tape, &[cfg.mn(), cfg.mn()], &eye)?;
    let a_mat = gh.matmul(&g_hat_t)?.add(&reg)?;
    let rhs = gh.matmul(&y_d)?;
    let x_hat = CTensor::solve(&a_mat, &rhs)?;

    // Demapping to per-bit probabilities.
    let probs = if chain.learned.demapper {
        demapper::demap_soft(&x_hat, bound, ctx.spec.bits_per_symbol())?
    } else {
        let sym = Array1::from_vec(x_hat.values());
        let bits = hard_demap(&sym, &ctx.constellation);
        let p: Vec<f64> = bits.iter().map(|&b| b as f64).collect();
        tape.constant(&[ctx.spec.bits_per_frame()], p)?
    };
    let hard_bits: Vec<u8> = probs.values().iter().map(|&p| u8::from(p > 0.5)).collect();

    Ok(E2eOutput { probs, g_hat_t, g_hat, lambda, kept_cells, hard_bits })
}

/// Mean binary cross-entropy with probabilities clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce_loss(probs: &Tensor, bits: &[u8]) -> Result<Tensor> {
    let q = probs.numel();
    if q != bits.len() {
        return Err(Error::Dimension {
            op: "bce_loss",
            expected: format!("{q} bits"),
            got: format!("{}", bits.len()),
        });
    }
    let tape = probs.tape_handle();
    let b: Vec<f64> = bits.iter().map(|&v| v as f64).collect();
    let not_b: Vec<f64> = b.iter().map(|v| 1.0 - v).collect();
    let shape = probs.shape().to_vec();
    let b_t = tape.constant(&shape, b)?;
    let not_b_t = tape.constant(&shape, not_b)?;
    let ones = tape.constant(&shape, vec![1.0; q])?;

    let p = probs.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let hit = b_t.mul(&p.log())?;
    let miss = not_b_t.mul(&ones.sub(&p)?.log())?;
    Ok(hit.add(&miss)?.mean_reduce().scalar_mul(-1.0))
}

/// Normalized reconstruction error of an on-tape channel estimate against
/// the true matrix: `|G_hat - G|^2 / |G|^2`. Supervises the estimator
/// directly during warm-up, before the bit loss carries useful gradient.
pub fn channel_fit_loss(g_hat: &CTensor, g_true: &Array2<Complex64>) -> Result<Tensor> {
    let numel = g_hat.numel();
    if g_true.len() != numel {
        return Err(Error::Dimension {
            op: "channel_fit_loss",
            expected: format!("{numel} entries"),
            got: format!("{}", g_true.len()),
        });
    }
    let ref_energy: f64 = g_true.iter().map(|z| z.norm_sqr()).sum();
    if ref_energy == 0.0 {
        return Err(Error::numerical("channel reference has zero energy"));
    }
    let tape = g_hat.re.tape_handle();
    let vals: Vec<Complex64> = g_true.iter().cloned().collect();
    let g_const = CTensor::constant(&tape, g_hat.shape(), &vals)?;
    let d = g_hat.sub(&g_const)?;
    let energy = d.re.mul(&d.re)?.add(&d.im.mul(&d.im)?)?.mean_reduce();
    Ok(energy.scalar_mul(numel as f64 / ref_energy))
}

/// Classical receiver without a tape: numerically the same chain as
/// `forward_e2e` with every block off, at a fraction of the cost. Used by the
/// Monte Carlo evaluators.
pub fn classical_chain(
    ctx: &ChainContext,
    trial: &Trial,
    sigma_n2: f64,
    estimator: EstimatorKind,
) -> Result<(Vec<u8>, Array2<Complex64>)> {
    use crate::grid::{unvec_cm as unvec_mat, unvec_frame, vec_frame};
    use crate::receivers::{cancel_pilot, fixed_threshold, lmmse_detect, separate_pilot};
    use crate::transforms::{remove_cp, zak};

    let cfg = &ctx.spec.cfg;
    let data = map_bits(&trial.bits, &ctx.constellation, cfg)?;
    let tx = insert_pilot(&data, &ctx.spec.pilot, cfg)?;
    let x = vec_frame(&tx, cfg)?;

    // y = G x + noise carried through the same receive transforms.
    let mut y = crate::linalg::cmatvec(&trial.g_true, &x);
    if sigma_n2 > 0.0 {
        let sigma = sigma_n2.sqrt();
        let w_serial = trial.noise_unit.mapv(|z| z * sigma);
        let w_blocks = unvec_mat(&w_serial, cfg.frame_len() / cfg.n, cfg.n);
        let w_dd = zak(&remove_cp(&w_blocks, cfg)?, &ctx.pulses, cfg)?;
        y = y + vec_frame(&w_dd, cfg)?;
    }

    let y_frame = unvec_frame(&y, cfg)?;
    let lambda = fixed_threshold(&y_frame, BASELINE_ALPHA);
    let y_p = separate_pilot(&y_frame, lambda);

    let g_hat = match estimator {
        EstimatorKind::Perfect => trial.g_true.clone(),
        EstimatorKind::Omp => {
            let y_p_vec = vec_frame(&y_p, cfg)?;
            omp_estimate(&y_p_vec, &ctx.dict, ctx.spec.omp_sparsity)?.g_hat
        }
        other => {
            return Err(Error::config(format!(
                "classical chain supports perfect or omp, got {}",
                other.as_str()
            )))
        }
    };

    let y_d = cancel_pilot(&y, &g_hat, &ctx.spec.pilot, cfg)?;
    let x_hat = lmmse_detect(&y_d, &g_hat, sigma_n2.max(1e-12))?;
    Ok((hard_demap(&x_hat, &ctx.constellation), g_hat))
}
