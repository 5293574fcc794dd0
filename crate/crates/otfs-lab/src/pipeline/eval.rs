//! Monte Carlo evaluation: BER and channel-estimate NMSE per method over an
//! SNR grid, plus resource-overhead accounting for both pilot schemes.
//!
//! All methods at one (snr, trial) coordinate consume the same drawn bits,
//! channel, and noise, so method comparisons are paired and the per-trial
//! differences carry the statistical weight.

use ndarray::Array1;

use crate::autodiff::optim::ParamStore;
use crate::autodiff::Tape;
use crate::channel::{ChannelStats, NoiseModel};
use crate::grid::{unvec_cm, unvec_frame, vec_frame};
use crate::modem::{hard_demap, EpLayout};
use crate::pipeline::model::{
    classical_chain, draw_trial, forward_e2e, ChainConfig, ChainContext, Trainability, Trial,
};
use crate::receivers::{cancel_pilot, ep_lmmse_estimate, lmmse_detect, EstimatorKind, TapDictionary};
use crate::rng::RngFactory;
use crate::transforms::{remove_cp, zak};
use crate::{Error, Result};
use rand::Rng;

// Evaluation stream ids sit above both training epochs and validation draws.
const EVAL_STREAM_BASE: u64 = 1 << 41;

/// What to sweep: SNR points, trial count per point, and the channel family.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPlan {
    pub snrs_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub channel: ChannelStats,
}

impl EvalPlan {
    pub fn validate(&self) -> Result<()> {
        if self.snrs_db.is_empty() {
            return Err(Error::config("evaluation needs at least one SNR point"));
        }
        if self.trials == 0 {
            return Err(Error::config("evaluation needs at least one trial"));
        }
        Ok(())
    }

    fn stream_id(&self, snr_idx: usize, trial: usize) -> u64 {
        EVAL_STREAM_BASE + ((snr_idx as u64) << 32) + trial as u64
    }
}

/// One aggregated sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub snr_db: f64,
    pub method: EstimatorKind,
    pub ber: f64,
    /// Wilson 95% interval half-width around `ber`.
    pub ber_ci: f64,
    pub nmse: f64,
    pub trials: usize,
    pub seed: u64,
    pub pilot_energy: f64,
    pub grid: (usize, usize),
}

/// Per-trial tallies; methods are compared pairwise on these.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrialOutcome {
    pub bit_errors: usize,
    pub bits: usize,
    pub err_energy: f64,
    pub ref_energy: f64,
}

impl TrialOutcome {
    pub fn nmse(&self) -> f64 {
        if self.ref_energy == 0.0 {
            if self.err_energy == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.err_energy / self.ref_energy
        }
    }
}

/// Run one method on one trial. `learned` supplies parameters and which
/// blocks run in learned form; it is required for (and only used by) the
/// learned method.
pub fn run_trial_method(
    ctx: &ChainContext,
    trial: &Trial,
    sigma_n2: f64,
    method: EstimatorKind,
    learned: Option<(&ParamStore, Trainability)>,
) -> Result<TrialOutcome> {
    let (hard_bits, g_hat) = match method {
        EstimatorKind::Perfect | EstimatorKind::Omp => {
            classical_chain(ctx, trial, sigma_n2, method)?
        }
        EstimatorKind::Learned => {
            let (params, flags) = learned.ok_or_else(|| {
                Error::config("learned method needs trained parameters".to_string())
            })?;
            let tape = Tape::new();
            let bound = params.bind_all(&tape)?;
            let chain = ChainConfig::learned_with(flags);
            let out = forward_e2e(&tape, ctx, trial, sigma_n2, &bound, &chain)?;
            (out.hard_bits, out.g_hat)
        }
        EstimatorKind::EpLmmse => {
            return Err(Error::config(
                "embedded-pilot evaluation uses its own sweep".to_string(),
            ))
        }
    };
    let bit_errors = hard_bits.iter().zip(&trial.bits).filter(|(a, b)| a != b).count();
    let mut err_energy = 0.0;
    let mut ref_energy = 0.0;
    for (g, gh) in trial.g_true.iter().zip(g_hat.iter()) {
        err_energy += (g - gh).norm_sqr();
        ref_energy += g.norm_sqr();
    }
    Ok(TrialOutcome { bit_errors, bits: trial.bits.len(), err_energy, ref_energy })
}

/// Sweep every method over the SNR grid with shared per-trial randomness.
/// Records come back grouped by method, each group in SNR order.
pub fn eval_ber_nmse(
    ctx: &ChainContext,
    plan: &EvalPlan,
    methods: &[EstimatorKind],
    learned: Option<(&ParamStore, Trainability)>,
) -> Result<Vec<MetricsRecord>> {
    plan.validate()?;
    if methods.is_empty() {
        return Err(Error::config("select at least one method"));
    }
    let factory = RngFactory::new(plan.seed);
    // totals[method][snr] accumulated over trials.
    let mut totals = vec![vec![TrialOutcome::default(); plan.snrs_db.len()]; methods.len()];
    for (s, &snr_db) in plan.snrs_db.iter().enumerate() {
        let sigma_n2 = NoiseModel::Snr { snr_db, symbol_energy: 1.0 }.sigma2();
        for t in 0..plan.trials {
            let mut rng = factory.stream(plan.stream_id(s, t));
            let trial = draw_trial(ctx, &plan.channel, &mut rng)?;
            for (mi, &method) in methods.iter().enumerate() {
                let out = run_trial_method(ctx, &trial, sigma_n2, method, learned)?;
                let acc = &mut totals[mi][s];
                acc.bit_errors += out.bit_errors;
                acc.bits += out.bits;
                acc.err_energy += out.err_energy;
                acc.ref_energy += out.ref_energy;
            }
        }
    }
    let mut records = Vec::with_capacity(methods.len() * plan.snrs_db.len());
    for (mi, &method) in methods.iter().enumerate() {
        for (s, &snr_db) in plan.snrs_db.iter().enumerate() {
            let acc = &totals[mi][s];
            records.push(MetricsRecord {
                snr_db,
                method,
                ber: acc.bit_errors as f64 / acc.bits as f64,
                ber_ci: wilson_half_width(acc.bit_errors, acc.bits, 1.96),
                nmse: acc.nmse(),
                trials: plan.trials,
                seed: plan.seed,
                pilot_energy: ctx.spec.pilot.energy(),
                grid: (ctx.spec.cfg.m, ctx.spec.cfg.n),
            });
        }
    }
    Ok(records)
}

/// Embedded-pilot sweep: guard-region transmission, read-off estimation,
/// then the usual cancellation and linear detection on the data cells.
pub fn eval_nmse_ep(
    ctx: &ChainContext,
    plan: &EvalPlan,
    l_max: usize,
    k_max: i64,
) -> Result<Vec<MetricsRecord>> {
    plan.validate()?;
    let cfg = &ctx.spec.cfg;
    let layout = EpLayout::new(ctx.spec.pilot, l_max, k_max, cfg)?;
    let dict = if l_max == ctx.dict.l_max && k_max == ctx.dict.k_max {
        ctx.dict.clone()
    } else {
        TapDictionary::build(cfg, &ctx.pulses, &ctx.spec.pilot, l_max, k_max)?
    };
    let mask = layout.data_mask(cfg);
    let bits_per_frame = layout.data_cells(cfg) * ctx.spec.bits_per_symbol();
    let factory = RngFactory::new(plan.seed);
    let mut records = Vec::with_capacity(plan.snrs_db.len());
    for (s, &snr_db) in plan.snrs_db.iter().enumerate() {
        let sigma_n2 = NoiseModel::Snr { snr_db, symbol_energy: 1.0 }.sigma2();
        let mut acc = TrialOutcome::default();
        for t in 0..plan.trials {
            let mut rng = factory.stream(plan.stream_id(s, t));
            let bits: Vec<u8> = (0..bits_per_frame).map(|_| rng.gen_range(0..2u8)).collect();
            let channel = crate::channel::sample_channel(&plan.channel, cfg, &mut rng)?;
            let noise = crate::rng::standard_complex_gaussian(&mut rng, cfg.frame_len());
            let eq = crate::channel::equivalent_channel(&channel, &ctx.builder, cfg)?;

            let frame = layout.frame(&bits, &ctx.constellation, cfg)?;
            let x = vec_frame(&frame, cfg)?;
            let mut y = crate::linalg::cmatvec(&eq.g, &x);
            if sigma_n2 > 0.0 {
                let sigma = sigma_n2.sqrt();
                let w_serial = noise.mapv(|z| z * sigma);
                let w_blocks = unvec_cm(&w_serial, cfg.frame_len() / cfg.n, cfg.n);
                let w_dd = zak(&remove_cp(&w_blocks, cfg)?, &ctx.pulses, cfg)?;
                y = y + vec_frame(&w_dd, cfg)?;
            }

            let est = ep_lmmse_estimate(&unvec_frame(&y, cfg)?, &dict, sigma_n2)?;
            let y_d = cancel_pilot(&y, &est.g_hat, &ctx.spec.pilot, cfg)?;
            let x_hat = lmmse_detect(&y_d, &est.g_hat, sigma_n2.max(1e-12))?;
            let data_syms: Array1<_> = x_hat
                .iter()
                .zip(&mask)
                .filter(|(_, &keep)| keep)
                .map(|(z, _)| *z)
                .collect();
            let hard = hard_demap(&data_syms, &ctx.constellation);

            acc.bit_errors += hard.iter().zip(&bits).filter(|(a, b)| a != b).count();
            acc.bits += bits.len();
            for (g, gh) in eq.g.iter().zip(est.g_hat.iter()) {
                acc.err_energy += (g - gh).norm_sqr();
                acc.ref_energy += g.norm_sqr();
            }
        }
        records.push(MetricsRecord {
            snr_db,
            method: EstimatorKind::EpLmmse,
            ber: acc.bit_errors as f64 / acc.bits as f64,
            ber_ci: wilson_half_width(acc.bit_errors, acc.bits, 1.96),
            nmse: acc.nmse(),
            trials: plan.trials,
            seed: plan.seed,
            pilot_energy: ctx.spec.pilot.energy(),
            grid: (cfg.m, cfg.n),
        });
    }
    Ok(records)
}

/// Wilson score interval half-width for `errors` successes in `total`
/// Bernoulli draws at normal quantile `z`.
pub fn wilson_half_width(errors: usize, total: usize, z: f64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    (z / (n + z2)) * (n * p * (1.0 - p) + z2 / 4.0).sqrt()
}

/// Mean and one-sided t statistic of paired differences; a clearly positive
/// statistic (> 1.645 for large n) means the first method loses to the second
/// at 95% confidence.
pub fn paired_t_statistic(diffs: &[f64]) -> (f64, f64) {
    let n = diffs.len() as f64;
    if diffs.len() < 2 {
        return (diffs.first().copied().unwrap_or(0.0), 0.0);
    }
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        let t = if mean > 0.0 {
            f64::INFINITY
        } else if mean < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        return (mean, t);
    }
    (mean, mean / (var / n).sqrt())
}

/// Pilot resource fraction of the superimposed scheme: one shared cell.
pub fn overhead_sp(m: usize, n: usize) -> f64 {
    assert!(m > 0 && n > 0, "grid dimensions must be positive");
    1.0 / (m * n) as f64
}

/// Pilot-plus-guard resource fraction of the embedded scheme; the Doppler
/// guard span is clipped to the grid width.
pub fn overhead_ep(m: usize, n: usize, l_max: usize, k_max: i64) -> f64 {
    assert!(m > 0 && n > 0, "grid dimensions must be positive");
    assert!(k_max >= 0, "k_max must be nonnegative");
    let rows = 2 * l_max + 1;
    let cols = ((4 * k_max + 1) as usize).min(n);
    (rows * cols) as f64 / (m * n) as f64
}
