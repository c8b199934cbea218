//! Append-only JSON Lines run ledger.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use hici_core::datagen::DatasetMeta;
use hici_core::metrics::MetricsReport;
use hici_core::model::HyperConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const LEDGER_ENV: &str = "HICI_LEDGER";
pub const DEFAULT_LEDGER: &str = "hici_ledger.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// One trained cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub dataset: String,
    pub config: HyperConfig,
    pub meta: DatasetMeta,
    pub seed: u64,
    pub split_seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Test metrics; only present for evaluated runs (single runs and grid winners).
    pub metrics: Option<MetricsReport>,
    pub best_val_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_run: Option<usize>,
    pub wall_time_s: f64,
    pub checkpoint: Option<PathBuf>,
    /// Validation counterfactual RMSE per epoch.
    pub cf_rmse_curve: Vec<Option<f64>>,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// SHA-256 over the canonical JSON of `(config, meta, seed)`.
pub fn run_id(config: &HyperConfig, meta: &DatasetMeta) -> String {
    // serde_json maps keep keys sorted, so the serialization is canonical
    let v = serde_json::json!({ "config": config, "meta": meta, "seed": config.seed });
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

/// Ledger path from `HICI_LEDGER`, falling back to `./hici_ledger.jsonl`.
pub fn default_ledger_path() -> PathBuf {
    std::env::var_os(LEDGER_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_LEDGER))
}

pub struct Ledger {
    path: PathBuf,
    lock: Mutex<()>,
}

impl Ledger {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            lock: Mutex::new(()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Every record in file order; a missing ledger reads as empty.
    pub fn read_all(&self) -> CliResult<Vec<RunRecord>> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(CliError::io(self.path.display(), e)),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| CliError::io(self.path.display(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|e| CliError::Data(format!("{} line {}: {e}", self.path.display(), i + 1)))?;
            out.push(rec);
        }
        Ok(out)
    }

    /// Successful record with this id, if any.
    pub fn find(&self, id: &str) -> CliResult<Option<RunRecord>> {
        Ok(self.read_all()?.into_iter().find(|r| r.run_id == id && r.is_ok()))
    }

    /// Appends `rec` unless a successful record with the same id exists.
    /// Returns whether a line was written.
    pub fn append(&self, rec: &RunRecord) -> CliResult<bool> {
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        if self.find(&rec.run_id)?.is_some() {
            return Ok(false);
        }
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| CliError::io(self.path.display(), e))?;
        let mut line = serde_json::to_string(rec).map_err(|e| CliError::Data(e.to_string()))?;
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(|e| CliError::io(self.path.display(), e))?;
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seed: u64) -> RunRecord {
        let config = HyperConfig {
            seed,
            ..Default::default()
        };
        let meta = DatasetMeta::syn(10, 3, 2, 1);
        RunRecord {
            run_id: run_id(&config, &meta),
            dataset: meta.name(),
            config,
            meta,
            seed,
            split_seed: 0,
            status: RunStatus::Ok,
            error: None,
            metrics: None,
            best_val_loss: Some(1.5),
            best_epoch: Some(1),
            epochs_run: Some(1),
            wall_time_s: 0.0,
            checkpoint: None,
            cf_rmse_curve: vec![Some(1.0), None],
        }
    }

    #[test]
    fn run_id_depends_on_config_meta_and_seed() {
        let a = record(1);
        assert_eq!(a.run_id, record(1).run_id);
        assert_ne!(a.run_id, record(2).run_id);
        let other_meta = DatasetMeta::syn(10, 3, 2, 9);
        assert_ne!(a.run_id, run_id(&a.config, &other_meta));
        assert_eq!(a.run_id.len(), 64);
    }

    #[test]
    fn append_is_idempotent_per_run_id() {
        let dir = tempfile::tempdir().unwrap();
        let ledger = Ledger::new(dir.path().join("l.jsonl"));
        assert!(ledger.read_all().unwrap().is_empty());
        assert!(ledger.append(&record(1)).unwrap());
        assert!(!ledger.append(&record(1)).unwrap());
        assert!(ledger.append(&record(2)).unwrap());
        let all = ledger.read_all().unwrap();
        assert_eq!(all, vec![record(1), record(2)]);
    }

    #[test]
    fn failed_records_do_not_block_a_retry() {
        let dir = tempfile::tempdir().unwrap();
        let ledger = Ledger::new(dir.path().join("l.jsonl"));
        let mut failed = record(1);
        failed.status = RunStatus::Failed;
        assert!(ledger.append(&failed).unwrap());
        assert!(ledger.append(&record(1)).unwrap());
        assert_eq!(ledger.read_all().unwrap().len(), 2);
    }

    #[test]
    fn corrupt_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.jsonl");
        std::fs::write(&path, "{}\n").unwrap();
        let err = Ledger::new(&path).read_all().unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
