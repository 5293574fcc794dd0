//! Command-line drivers. The binary is a thin wrapper over `run`; everything
//! here is library code so integration tests can drive the exact same paths.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use crate::channel::{equivalent_channel, ChannelPath, ChannelRealization, GBuilder};
use crate::config::{out_dir_from_env, RunConfig};
use crate::neural::checkpoint;
use crate::pipeline::{
    eval_ber_nmse, eval_nmse_ep, overhead_ep, overhead_sp, train, ChainContext, MetricsRecord,
    ResumeState, Trainability,
};
use crate::receivers::EstimatorKind;
use crate::report::{write_metrics_csv, write_train_log_csv, Manifest};
use crate::transforms::PulseShapes;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "otfs-lab",
    about = "Delay-Doppler link simulator with classical and learned receivers",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo BER/NMSE sweep over the configured SNR grid and methods.
    Simulate(SimulateArgs),
    /// Train the learnable receiver chain; writes a checkpoint and a log.
    Train(TrainArgs),
    /// Dump one channel realization and its equivalent matrix as CSV grids.
    ChannelDump(ChannelDumpArgs),
    /// Print the pilot-overhead table for both pilot schemes.
    Overhead(OverheadArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML run configuration; built-in defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. --set eval.trials=200 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory (falls back to config, then OTFS_LAB_OUT_DIR).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Trained checkpoint; required when the methods include "learned".
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Resume from this checkpoint instead of fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChannelDumpArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Integer path delays in samples.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 3.0])]
    pub delays: Vec<f64>,
    /// Real path gains.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.3])]
    pub gains: Vec<f64>,
    /// Doppler shifts in bins; fractional parts allowed.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 3.5])]
    pub dopplers: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct OverheadArgs {
    /// Delay guard span of the embedded scheme.
    #[arg(long, default_value_t = 3)]
    pub l_max: usize,
    /// Doppler guard span of the embedded scheme.
    #[arg(long, default_value_t = 4)]
    pub k_max: i64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Train(args) => train_cmd(args),
        Command::ChannelDump(args) => channel_dump(args),
        Command::Overhead(args) => overhead(args),
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load_with_overrides(p, overrides),
        None => RunConfig::from_toml_with_overrides("", overrides),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref(), &args.set)?;
    let out = out_dir_from_env(args.out_dir.as_deref(), &cfg);
    ensure_dir(&out)?;
    let methods = cfg.methods()?;
    let plan = cfg.eval_plan()?;
    let ctx = ChainContext::new(cfg.model_spec()?)?;

    // The learned method needs trained parameters; everything else is
    // self-contained.
    let learned_params = if methods.contains(&EstimatorKind::Learned) {
        let path = args.checkpoint.as_deref().ok_or_else(|| {
            Error::config("method \"learned\" needs --checkpoint pointing at a trained model")
        })?;
        let ckpt = checkpoint::load_matching(
            path,
            ctx.spec.cfg.m,
            ctx.spec.cfg.n,
            &ctx.spec.arch_string(),
        )?;
        Some(ckpt.params)
    } else {
        None
    };
    let trainable: Trainability = cfg.train.trainable.into();
    let learned = learned_params.as_ref().map(|p| (p, trainable));

    let standard: Vec<EstimatorKind> =
        methods.iter().copied().filter(|m| *m != EstimatorKind::EpLmmse).collect();
    let mut records: Vec<MetricsRecord> = Vec::new();
    if !standard.is_empty() {
        records.extend(eval_ber_nmse(&ctx, &plan, &standard, learned)?);
    }
    if methods.contains(&EstimatorKind::EpLmmse) {
        records.extend(eval_nmse_ep(
            &ctx,
            &plan,
            cfg.estimator.dict_l_max,
            cfg.estimator.dict_k_max,
        )?);
    }

    let mut outputs = Vec::new();
    for method in &methods {
        let rows: Vec<MetricsRecord> =
            records.iter().filter(|r| r.method == *method).cloned().collect();
        let name = format!("metrics_{}.csv", method.as_str());
        write_metrics_csv(&out.join(&name), &rows)?;
        println!("wrote {}", out.join(&name).display());
        outputs.push(name);
    }
    let manifest = Manifest::new(&cfg, outputs)?;
    manifest.write(&out.join("manifest.json"))?;
    println!("wrote {}", out.join("manifest.json").display());
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref(), &args.set)?;
    let out = out_dir_from_env(args.out_dir.as_deref(), &cfg);
    ensure_dir(&out)?;
    let train_cfg = cfg.train_config()?;
    let ctx = ChainContext::new(cfg.model_spec()?)?;

    let (mut params, resume) = match args.resume.as_deref() {
        Some(path) => {
            let ckpt = checkpoint::load_matching(
                path,
                ctx.spec.cfg.m,
                ctx.spec.cfg.n,
                &ctx.spec.arch_string(),
            )?;
            let state = ResumeState::from_checkpoint(&ckpt);
            (ckpt.params, Some(state))
        }
        None => (crate::pipeline::init_all_params(&ctx.spec, train_cfg.seed)?, None),
    };

    let ckpt_path = out.join("checkpoint.bin");
    let outcome = train(&ctx, &train_cfg, &mut params, resume, Some(&ckpt_path))?;
    write_train_log_csv(&out.join("train_log.csv"), &outcome.rows)?;
    let manifest =
        Manifest::new(&cfg, vec!["checkpoint.bin".into(), "train_log.csv".into()])?;
    manifest.write(&out.join("manifest.json"))?;
    println!("wrote {}", out.join("train_log.csv").display());
    println!("wrote {}", ckpt_path.display());
    println!(
        "best validation BER {} at epoch {}",
        outcome.best_val_ber, outcome.best_epoch
    );
    Ok(())
}

fn channel_dump(args: ChannelDumpArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref(), &args.set)?;
    let out = out_dir_from_env(args.out_dir.as_deref(), &cfg);
    ensure_dir(&out)?;
    let grid = cfg.grid_config()?;

    if args.delays.len() != args.gains.len() || args.delays.len() != args.dopplers.len() {
        return Err(Error::config(format!(
            "path lists disagree: {} delays, {} gains, {} dopplers",
            args.delays.len(),
            args.gains.len(),
            args.dopplers.len()
        )));
    }
    if args.delays.is_empty() {
        return Err(Error::config("channel needs at least one path"));
    }
    let mut paths = Vec::with_capacity(args.delays.len());
    for ((&d, &g), &nu) in args.delays.iter().zip(&args.gains).zip(&args.dopplers) {
        if d < 0.0 || d.fract() != 0.0 {
            return Err(Error::config(format!("delay {d} is not a nonnegative integer tap")));
        }
        let k = nu.round();
        paths.push(ChannelPath::new(Complex64::new(g, 0.0), d as usize, k as i64, nu - k));
    }
    let chan = ChannelRealization { paths };
    chan.validate(&grid)?;

    let pulses = PulseShapes::identity(&grid);
    let builder = GBuilder::new(&grid, &pulses);
    let eq = equivalent_channel(&chan, &builder, &grid)?;

    let mn = grid.mn();
    let mut mag = String::new();
    let mut phase = String::new();
    for r in 0..mn {
        let mag_row: Vec<String> = (0..mn).map(|c| format!("{}", eq.g[(r, c)].norm())).collect();
        let ph_row: Vec<String> = (0..mn).map(|c| format!("{}", eq.g[(r, c)].arg())).collect();
        mag.push_str(&mag_row.join(","));
        mag.push('\n');
        phase.push_str(&ph_row.join(","));
        phase.push('\n');
    }
    std::fs::write(out.join("channel.json"), serde_json::to_string_pretty(&chan)?)?;
    std::fs::write(out.join("g_magnitude.csv"), mag)?;
    std::fs::write(out.join("g_phase.csv"), phase)?;
    let manifest = Manifest::new(
        &cfg,
        vec!["channel.json".into(), "g_magnitude.csv".into(), "g_phase.csv".into()],
    )?;
    manifest.write(&out.join("manifest.json"))?;
    for name in ["channel.json", "g_magnitude.csv", "g_phase.csv", "manifest.json"] {
        println!("wrote {}", out.join(name).display());
    }
    Ok(())
}

/// Percent formatting that matches the reference table's precision: two
/// decimals, three below 0.1%.
fn fmt_percent(fraction: f64) -> String {
    let pct = fraction * 100.0;
    if pct >= 0.1 {
        format!("{pct:.2}")
    } else {
        format!("{pct:.3}")
    }
}

fn overhead(args: OverheadArgs) -> Result<()> {
    if args.k_max < 0 {
        return Err(Error::config(format!("k_max must be nonnegative, got {}", args.k_max)));
    }
    println!("grid,sp_percent,ep_percent");
    for size in [8usize, 16, 32, 64] {
        let sp = overhead_sp(size, size);
        let ep = overhead_ep(size, size, args.l_max, args.k_max);
        println!("{size}x{size},{},{}", fmt_percent(sp), fmt_percent(ep));
    }
    Ok(())
}
