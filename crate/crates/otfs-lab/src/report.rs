//! Artifact writers: metrics and training-log CSVs with fixed headers, and
//! the JSON manifest that ties every output file to the exact configuration
//! and seed that produced it. Nothing here embeds wall-clock state, so a
//! rerun with the same inputs reproduces every byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::pipeline::{MetricsRecord, TrainLogRow};
use crate::Result;

pub const METRICS_HEADER: &str = "snr_db,method,ber,ber_ci,nmse,trials,seed";
pub const TRAIN_LOG_HEADER: &str = "epoch,loss,val_ber,val_nmse,lr";

/// Shortest round-trip float formatting; `Display` on `f64` is exact and
/// stable, which the byte-determinism contract relies on.
fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt(r.snr_db),
            r.method.as_str(),
            fmt(r.ber),
            fmt(r.ber_ci),
            fmt(r.nmse),
            r.trials,
            r.seed
        ));
    }
    out
}

pub fn train_log_csv(rows: &[TrainLogRow]) -> String {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for r in rows {
        let val_ber = r.val_ber.map(fmt).unwrap_or_default();
        let val_nmse = r.val_nmse.map(fmt).unwrap_or_default();
        out.push_str(&format!("{},{},{val_ber},{val_nmse},{}\n", r.epoch, fmt(r.loss), fmt(r.lr)));
    }
    out
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    std::fs::write(path, metrics_csv(records))?;
    Ok(())
}

pub fn write_train_log_csv(path: &Path, rows: &[TrainLogRow]) -> Result<()> {
    std::fs::write(path, train_log_csv(rows))?;
    Ok(())
}

pub fn sha256_hex(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(data);
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Written next to every artifact set. The embedded config text reloads to
/// the identical `RunConfig`, so a manifest alone reproduces its run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config_toml: String,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(cfg: &RunConfig, outputs: Vec<String>) -> Result<Self> {
        let config_toml = cfg.to_toml_string()?;
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.run.seed,
            config_sha256: sha256_hex(config_toml.as_bytes()),
            config_toml,
            outputs,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The run configuration this manifest captured.
    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::from_toml_str(&self.config_toml)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::receivers::EstimatorKind;

    fn record() -> MetricsRecord {
        MetricsRecord {
            snr_db: 12.5,
            method: EstimatorKind::Omp,
            ber: 0.015625,
            ber_ci: 0.003,
            nmse: 0.25,
            trials: 400,
            seed: 9,
            pilot_energy: 10.0,
            grid: (8, 8),
        }
    }

    #[test]
    fn metrics_csv_has_fixed_header_and_one_row_per_record() {
        let text = metrics_csv(&[record(), record()]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "12.5,omp,0.015625,0.003,0.25,400,9");
        assert_eq!(lines[1], lines[2]);
    }

    #[test]
    fn train_log_leaves_missing_validation_columns_empty() {
        let rows = vec![
            TrainLogRow { epoch: 0, loss: 0.7, val_ber: None, val_nmse: None, lr: 1e-3 },
            TrainLogRow {
                epoch: 1,
                loss: 0.5,
                val_ber: Some(0.125),
                val_nmse: Some(0.5),
                lr: 9e-4,
            },
        ];
        let text = train_log_csv(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRAIN_LOG_HEADER);
        assert_eq!(lines[1], "0,0.7,,,0.001");
        assert_eq!(lines[2], "1,0.5,0.125,0.5,0.0009");
    }

    #[test]
    fn float_formatting_round_trips_exactly() {
        for v in [0.1, 1.0 / 3.0, 1e-12, 123456.789, f64::MIN_POSITIVE] {
            let s = fmt(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn manifest_embeds_a_reloadable_config() {
        let cfg = RunConfig::default();
        let m = Manifest::new(&cfg, vec!["metrics_omp.csv".into()]).unwrap();
        assert_eq!(m.config().unwrap(), cfg);
        assert_eq!(m.seed, cfg.run.seed);
        assert_eq!(m.config_sha256.len(), 64);
        assert_eq!(m.config_sha256, sha256_hex(m.config_toml.as_bytes()));
    }

    #[test]
    fn manifest_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = Manifest::new(&RunConfig::default(), vec!["a.csv".into(), "b.csv".into()]).unwrap();
        m.write(&path).unwrap();
        let back = Manifest::load(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn sha256_matches_known_vector() {
        // SHA-256 of the empty string.
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
