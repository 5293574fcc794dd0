//! Stochastic training of the learnable chain with AdamW, linear learning
//! rate decay, periodic held-out validation, and best-checkpoint saving.

use std::path::Path;

use crate::autodiff::optim::{AdamW, GradStore, ParamStore};
use crate::autodiff::Tape;
use crate::channel::{ChannelStats, NoiseModel};
use crate::neural::checkpoint::{self, Checkpoint, CheckpointMeta};
use crate::pipeline::model::{
    bce_loss, channel_fit_loss, draw_trial, forward_e2e, ChainConfig, ChainContext, Trainability,
    Trial, PARAM_CONST_IM, PARAM_CONST_RE, PARAM_PILOT_IM, PARAM_PILOT_RE,
};
use crate::rng::RngFactory;
use crate::{Error, Result};
use rand::Rng;

// Validation trials draw from stream ids far above any training epoch.
const VAL_STREAM_BASE: u64 = 1 << 40;

/// Knobs of one training run. Epoch-level randomness is derived from `seed`
/// and the epoch index alone, so a resumed run replays the exact schedule of
/// an uninterrupted one.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Leading epochs that supervise the channel estimate directly instead
    /// of the bit loss. From a cold start the bit loss alone plateaus at the
    /// coin-flip value: the demapper learns to emit 0.5 before the estimator
    /// produces anything useful, and every upstream gradient dies with it.
    pub warmup_epochs: usize,
    pub batch: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub weight_decay: f64,
    /// Validate (and consider checkpointing) every this many epochs.
    pub val_interval: usize,
    pub val_trials: usize,
    /// Per-sample SNR is uniform over this range.
    pub snr_lo_db: f64,
    pub snr_hi_db: f64,
    /// SNR used for held-out validation.
    pub val_snr_db: f64,
    pub channel: ChannelStats,
    pub trainable: Trainability,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults: short schedule, small batch, mixed-SNR sampling.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 200,
            warmup_epochs: 100,
            batch: 16,
            lr_start: 1e-3,
            lr_end: 1e-4,
            weight_decay: 1e-4,
            val_interval: 10,
            val_trials: 50,
            snr_lo_db: 0.0,
            snr_hi_db: 20.0,
            val_snr_db: 15.0,
            channel: ChannelStats { paths: 2, l_max: 3, k_max: 4, fractional: true },
            trainable: Trainability::all_on(),
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("training needs at least one epoch"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::config(format!(
                "warm-up of {} epochs exceeds the {}-epoch schedule",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return Err(Error::config(format!(
                "learning rates must be positive, got {} -> {}",
                self.lr_start, self.lr_end
            )));
        }
        if self.lr_end > self.lr_start {
            return Err(Error::config(format!(
                "final learning rate {} exceeds initial {}",
                self.lr_end, self.lr_start
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config(format!("weight decay must be nonnegative, got {}", self.weight_decay)));
        }
        if self.val_interval == 0 {
            return Err(Error::config("validation interval must be at least 1"));
        }
        if self.val_trials == 0 {
            return Err(Error::config("validation needs at least one trial"));
        }
        if self.snr_hi_db < self.snr_lo_db {
            return Err(Error::config(format!(
                "SNR range is inverted: [{}, {}]",
                self.snr_lo_db, self.snr_hi_db
            )));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub loss: f64,
    pub val_ber: Option<f64>,
    pub val_nmse: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub rows: Vec<TrainLogRow>,
    pub best_epoch: usize,
    pub best_val_ber: f64,
    pub final_epoch: usize,
}

/// Optimizer state carried across a resume.
#[derive(Debug, Clone)]
pub struct ResumeState {
    /// First epoch the resumed run executes.
    pub start_epoch: usize,
    pub adam_step: u64,
    pub adam_state: Vec<(String, Vec<f64>, Vec<f64>)>,
}

impl ResumeState {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Self {
        ResumeState {
            start_epoch: ckpt.meta.epoch + 1,
            adam_step: ckpt.adam_step,
            adam_state: ckpt.adam_state.clone(),
        }
    }
}

fn validate_params(
    ctx: &ChainContext,
    cfg: &TrainConfig,
    params: &ParamStore,
    val_set: &[Trial],
) -> Result<(f64, f64)> {
    let sigma_n2 = NoiseModel::Snr { snr_db: cfg.val_snr_db, symbol_energy: 1.0 }.sigma2();
    let chain = ChainConfig::learned_with(cfg.trainable);
    let mut bit_errors = 0usize;
    let mut bits_total = 0usize;
    let mut err_energy = 0.0;
    let mut ref_energy = 0.0;
    for trial in val_set {
        let tape = Tape::new();
        let bound = params.bind_all(&tape)?;
        let out = forward_e2e(&tape, ctx, trial, sigma_n2, &bound, &chain)?;
        bit_errors += out.hard_bits.iter().zip(&trial.bits).filter(|(a, b)| a != b).count();
        bits_total += trial.bits.len();
        for (g, gh) in trial.g_true.iter().zip(out.g_hat.iter()) {
            err_energy += (g - gh).norm_sqr();
            ref_energy += g.norm_sqr();
        }
    }
    Ok((bit_errors as f64 / bits_total as f64, err_energy / ref_energy))
}

/// Re-apply the constraints the graph does not encode: unit mean transmit
/// power and a fixed pilot magnitude.
fn project_params(ctx: &ChainContext, cfg: &TrainConfig, params: &mut ParamStore) -> Result<()> {
    if cfg.trainable.constellation {
        let power: f64 = {
            let re = &params.get(PARAM_CONST_RE)?.values;
            let im = &params.get(PARAM_CONST_IM)?.values;
            re.iter().zip(im).map(|(a, b)| a * a + b * b).sum::<f64>() / re.len() as f64
        };
        if power == 0.0 {
            return Err(Error::numerical("constellation collapsed to zero during training"));
        }
        let scale = 1.0 / power.sqrt();
        for name in [PARAM_CONST_RE, PARAM_CONST_IM] {
            for v in params.get_mut(name)?.values.iter_mut() {
                *v *= scale;
            }
        }
    }
    if cfg.trainable.pilot {
        let mag = {
            let re = params.get(PARAM_PILOT_RE)?.values[0];
            let im = params.get(PARAM_PILOT_IM)?.values[0];
            (re * re + im * im).sqrt()
        };
        if mag == 0.0 {
            return Err(Error::numerical("pilot collapsed to zero during training"));
        }
        let scale = ctx.spec.pilot.value.norm() / mag;
        params.get_mut(PARAM_PILOT_RE)?.values[0] *= scale;
        params.get_mut(PARAM_PILOT_IM)?.values[0] *= scale;
    }
    Ok(())
}

/// Run (or continue) training. Each epoch draws `batch` fresh
/// (bits, channel, SNR, noise) samples, averages gradients over the batch,
/// takes one AdamW step, and re-projects the constrained parameters. The
/// first `warmup_epochs` epochs supervise the channel estimate; the rest use
/// the bit loss. Every `val_interval` epochs (and on the final one) the
/// model is scored on a fixed held-out set; the best state by validation bit
/// error rate over the bit-loss phase goes to `ckpt_path`.
pub fn train(
    ctx: &ChainContext,
    cfg: &TrainConfig,
    params: &mut ParamStore,
    resume: Option<ResumeState>,
    ckpt_path: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let factory = RngFactory::new(cfg.seed);
    let mut adam = AdamW::new(cfg.lr_start, cfg.weight_decay);
    let start_epoch = match resume {
        Some(state) => {
            adam.import_state(state.adam_step, state.adam_state);
            state.start_epoch
        }
        None => 0,
    };
    if start_epoch >= cfg.epochs {
        return Err(Error::config(format!(
            "resume epoch {start_epoch} is beyond the configured {} epochs",
            cfg.epochs
        )));
    }

    let val_set: Vec<Trial> = (0..cfg.val_trials)
        .map(|t| draw_trial(ctx, &cfg.channel, &mut factory.stream(VAL_STREAM_BASE + t as u64)))
        .collect::<Result<_>>()?;

    let chain = ChainConfig::learned_with(cfg.trainable);
    let frozen = |name: &str| !cfg.trainable.covers(name);
    let mut rows = Vec::with_capacity(cfg.epochs - start_epoch);
    let mut best_val_ber = f64::INFINITY;
    let mut best_epoch = start_epoch;

    for epoch in start_epoch..cfg.epochs {
        let lr = crate::autodiff::optim::linear_lr(cfg.lr_start, cfg.lr_end, epoch, cfg.epochs);
        adam.lr = lr;
        let mut grads = GradStore::new();
        let mut loss_sum = 0.0;
        for i in 0..cfg.batch {
            let stream_id = epoch as u64 * cfg.batch as u64 + i as u64;
            let mut rng = factory.stream(stream_id);
            let snr_db = if cfg.snr_hi_db > cfg.snr_lo_db {
                rng.gen_range(cfg.snr_lo_db..=cfg.snr_hi_db)
            } else {
                cfg.snr_lo_db
            };
            let trial = draw_trial(ctx, &cfg.channel, &mut rng)?;
            let sigma_n2 = NoiseModel::Snr { snr_db, symbol_energy: 1.0 }.sigma2();

            let tape = Tape::new();
            let bound = params.bind(&tape, &frozen)?;
            let out = forward_e2e(&tape, ctx, &trial, sigma_n2, &bound, &chain)?;
            // Estimator-path parameters get direct supervision first; blocks
            // off that path see no gradient and keep their init.
            let loss = if epoch < cfg.warmup_epochs {
                channel_fit_loss(&out.g_hat_t, &trial.g_true)?
            } else {
                bce_loss(&out.probs, &trial.bits)?
            };
            let value = loss.scalar_value();
            if !value.is_finite() {
                return Err(Error::numerical(format!(
                    "training diverged at epoch {epoch}: loss {value}, lr {lr:.3e}, max |grad| {:.3e}",
                    grads.max_abs()
                )));
            }
            loss_sum += value;
            loss.backward()?;
            grads.accumulate(&bound);
        }
        let loss_mean = loss_sum / cfg.batch as f64;
        if grads.has_non_finite() {
            return Err(Error::numerical(format!(
                "training diverged at epoch {epoch}: non-finite gradient, lr {lr:.3e}, loss {loss_mean}",
            )));
        }
        if cfg.trainable.any() {
            adam.step(params, &grads)?;
            project_params(ctx, cfg, params)?;
        }

        let validate_now = (epoch + 1) % cfg.val_interval == 0 || epoch + 1 == cfg.epochs;
        let (mut val_ber, mut val_nmse) = (None, None);
        if validate_now {
            let (ber, nmse) = validate_params(ctx, cfg, params, &val_set)?;
            val_ber = Some(ber);
            val_nmse = Some(nmse);
            // Bit error rate only ranks checkpoints once the bit loss is
            // live; during warm-up the demapper is still at init. The final
            // epoch always ranks so even an all-warm-up schedule leaves a
            // loadable checkpoint behind.
            let ranks = epoch >= cfg.warmup_epochs || epoch + 1 == cfg.epochs;
            if ranks && ber < best_val_ber {
                best_val_ber = ber;
                best_epoch = epoch;
                if let Some(path) = ckpt_path {
                    let ckpt = Checkpoint {
                        meta: CheckpointMeta {
                            m: ctx.spec.cfg.m,
                            n: ctx.spec.cfg.n,
                            bits_per_symbol: ctx.spec.bits_per_symbol(),
                            epoch,
                            arch: ctx.spec.arch_string(),
                        },
                        params: params.clone(),
                        adam_step: adam.step_count(),
                        adam_state: adam.export_state(),
                    };
                    checkpoint::save(&ckpt, path)?;
                }
            }
        }
        rows.push(TrainLogRow { epoch, loss: loss_mean, val_ber, val_nmse, lr });
    }

    Ok(TrainOutcome { rows, best_epoch, best_val_ber, final_epoch: cfg.epochs - 1 })
}
