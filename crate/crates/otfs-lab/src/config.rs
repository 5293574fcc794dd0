//! Run configuration: a sectioned TOML file covering the grid, waveform,
//! channel, training, and evaluation knobs, with `key.path=value` overrides.
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelStats;
use crate::grid::GridConfig;
use crate::modem::PilotSpec;
use crate::pipeline::{EvalPlan, ModelSpec, TrainConfig, Trainability};
use crate::receivers::EstimatorKind;
use crate::{Error, Result};

/// Default output directory when neither flag, config, nor environment says
/// otherwise.
pub const DEFAULT_OUT_DIR: &str = "runs";
/// Environment variable consulted for the default output directory.
pub const OUT_DIR_ENV: &str = "OTFS_LAB_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub m: usize,
    pub n: usize,
    pub delta_f_hz: f64,
    pub l_cp: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { m: 8, n: 8, delta_f_hz: 15e3, l_cp: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModulationSection {
    /// Constellation order: 2 (BPSK) or 4 (QPSK).
    pub order: usize,
}

impl Default for ModulationSection {
    fn default() -> Self {
        ModulationSection { order: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PilotSection {
    pub energy: f64,
    /// Grid cell `[l, k]`; omitted means the grid centre.
    pub position: Option<[usize; 2]>,
}

impl Default for PilotSection {
    fn default() -> Self {
        PilotSection { energy: 10.0, position: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub paths: usize,
    pub l_max: usize,
    pub k_max: i64,
    pub fractional: bool,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection { paths: 2, l_max: 3, k_max: 4, fractional: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub dict_l_max: usize,
    pub dict_k_max: i64,
    /// Taps the matching-pursuit baseline may pick; omitted means the channel
    /// path count.
    pub omp_sparsity: Option<usize>,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection { dict_l_max: 3, dict_k_max: 4, omp_sparsity: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainableSection {
    pub constellation: bool,
    pub pilot: bool,
    pub dlzak: bool,
    pub threshold: bool,
    pub cenet: bool,
    pub demapper: bool,
}

impl Default for TrainableSection {
    fn default() -> Self {
        TrainableSection {
            constellation: true,
            pilot: true,
            dlzak: true,
            threshold: true,
            cenet: true,
            demapper: true,
        }
    }
}

impl From<TrainableSection> for Trainability {
    fn from(s: TrainableSection) -> Self {
        Trainability {
            constellation: s.constellation,
            pilot: s.pilot,
            dlzak: s.dlzak,
            threshold: s.threshold,
            cenet: s.cenet,
            demapper: s.demapper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub weight_decay: f64,
    pub val_interval: usize,
    pub val_trials: usize,
    pub snr_lo_db: f64,
    pub snr_hi_db: f64,
    pub val_snr_db: f64,
    pub trainable: TrainableSection,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
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
            trainable: TrainableSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub snrs_db: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            snrs_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 500,
            methods: vec!["perfect".into(), "omp".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 1, out_dir: None }
    }
}

/// The whole run configuration. `Default` mirrors the reference simulation
/// table: 8x8 grid, 15 kHz spacing, CP 4, BPSK, pilot energy 10, SNR 0..20.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub modulation: ModulationSection,
    pub pilot: PilotSection,
    pub channel: ChannelSection,
    pub estimator: EstimatorSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    /// Load a file and apply `key.path=value` overrides before
    /// deserialization, so overridden documents face the same unknown-key
    /// and invariant checks.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table =
            text.parse().map_err(|e: toml::de::Error| Error::from(e))?;
        for spec in overrides {
            let (key, value) = spec.split_once('=').ok_or_else(|| {
                Error::config(format!("override {spec:?} is not of the form key.path=value"))
            })?;
            apply_override(&mut doc, key.trim(), value.trim())?;
        }
        let cfg: RunConfig = toml::Value::Table(doc).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("config serialization failed: {e}")))
    }

    pub fn grid_config(&self) -> Result<GridConfig> {
        GridConfig::new(self.grid.m, self.grid.n, self.grid.delta_f_hz, self.grid.l_cp)
    }

    pub fn pilot_spec(&self) -> Result<PilotSpec> {
        let cfg = self.grid_config()?;
        match self.pilot.position {
            Some([l, k]) => PilotSpec::at((l, k), self.pilot.energy, &cfg),
            None => PilotSpec::centred(self.pilot.energy, &cfg),
        }
    }

    pub fn channel_stats(&self) -> ChannelStats {
        ChannelStats {
            paths: self.channel.paths,
            l_max: self.channel.l_max,
            k_max: self.channel.k_max,
            fractional: self.channel.fractional,
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        ModelSpec::new(
            self.grid_config()?,
            self.modulation.order,
            self.pilot_spec()?,
            self.estimator.dict_l_max,
            self.estimator.dict_k_max,
            self.estimator.omp_sparsity.unwrap_or(self.channel.paths),
        )
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let cfg = TrainConfig {
            epochs: t.epochs,
            warmup_epochs: t.warmup_epochs,
            batch: t.batch,
            lr_start: t.lr_start,
            lr_end: t.lr_end,
            weight_decay: t.weight_decay,
            val_interval: t.val_interval,
            val_trials: t.val_trials,
            snr_lo_db: t.snr_lo_db,
            snr_hi_db: t.snr_hi_db,
            val_snr_db: t.val_snr_db,
            channel: self.channel_stats(),
            trainable: t.trainable.into(),
            seed: self.run.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eval_plan(&self) -> Result<EvalPlan> {
        let plan = EvalPlan {
            snrs_db: self.eval.snrs_db.clone(),
            trials: self.eval.trials,
            seed: self.run.seed,
            channel: self.channel_stats(),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn methods(&self) -> Result<Vec<EstimatorKind>> {
        if self.eval.methods.is_empty() {
            return Err(Error::config("eval.methods must name at least one method"));
        }
        self.eval.methods.iter().map(|m| EstimatorKind::from_str(m)).collect()
    }

    /// Check every section against the module invariants it feeds.
    pub fn validate(&self) -> Result<()> {
        let cfg = self.grid_config()?;
        self.pilot_spec()?;
        self.channel_stats().validate(&cfg)?;
        self.model_spec()?;
        self.train_config()?;
        self.eval_plan()?;
        self.methods()?;
        Ok(())
    }
}

/// Output-directory precedence: explicit flag, then config, then the
/// environment variable, then the built-in default.
pub fn resolve_out_dir(
    flag: Option<&Path>,
    cfg: &RunConfig,
    env_value: Option<&str>,
) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.run.out_dir {
        return p.clone();
    }
    if let Some(p) = env_value {
        if !p.is_empty() {
            return PathBuf::from(p);
        }
    }
    PathBuf::from(DEFAULT_OUT_DIR)
}

/// `resolve_out_dir` with the real process environment.
pub fn out_dir_from_env(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    let env = std::env::var(OUT_DIR_ENV).ok();
    resolve_out_dir(flag, cfg, env.as_deref())
}

fn parse_override_value(raw: &str) -> toml::Value {
    // Reuse the TOML value grammar; anything that fails to parse is a string.
    let doc = format!("x = {raw}");
    if let Ok(table) = doc.parse::<toml::Table>() {
        if let Some(v) = table.get("x") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}

fn apply_override(doc: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("override key {key:?} has an empty segment")));
    }
    let mut cur = doc;
    for part in &parts[..parts.len() - 1] {
        cur = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                Error::config(format!("override key {key:?} descends into a non-table value"))
            })?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_override_value(raw));
    Ok(())
}
