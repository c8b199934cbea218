//! Training cells, grid search and ablation sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hici_core::datagen::{load_dataset_dir, split_dataset, Dataset, Split};
use hici_core::metrics::MetricsReport;
use hici_core::model::{
    evaluate, load_checkpoint, save_checkpoint, split_seed, train, EpochLog, HyperConfig, TrainResult, Variant,
};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::ledger::{run_id, Ledger, RunRecord, RunStatus};

/// Where a command reads and writes its side effects.
pub struct RunEnv<'a> {
    pub ledger: &'a Ledger,
    /// Checkpoints and per-epoch logs go here.
    pub out_dir: &'a Path,
    pub workers: usize,
}

/// Outcome of one cell.
#[derive(Debug)]
pub struct CellResult {
    pub record: RunRecord,
    /// Already present in the ledger; nothing was trained.
    pub reused: bool,
    pub failure: Option<CliError>,
}

pub fn load_data(dir: &Path) -> CliResult<Dataset> {
    load_dataset_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

/// The run's train/validation/test split.
pub fn split_for(d: &Dataset, config: &HyperConfig) -> CliResult<Split> {
    split_dataset(d, config.split_ratios(), split_seed(config.seed)).map_err(CliError::data)
}

fn blank_record(config: &HyperConfig, d: &Dataset) -> RunRecord {
    RunRecord {
        run_id: run_id(config, &d.meta),
        dataset: d.meta.name(),
        config: config.clone(),
        meta: d.meta.clone(),
        seed: config.seed,
        split_seed: split_seed(config.seed),
        status: RunStatus::Failed,
        error: None,
        metrics: None,
        best_val_loss: None,
        best_epoch: None,
        epochs_run: None,
        wall_time_s: 0.0,
        checkpoint: None,
        cf_rmse_curve: Vec::new(),
    }
}

fn write_curve(path: &Path, curve: &[EpochLog]) -> CliResult<()> {
    let mut text = String::from(EpochLog::CSV_HEADER);
    text.push('\n');
    for e in curve {
        text.push_str(&e.csv_line());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
}

fn fit(config: &HyperConfig, d: &Dataset, out_dir: &Path, rec: &mut RunRecord) -> CliResult<()> {
    let split = split_for(d, config)?;
    let (tr, va) = (d.subset(&split.train), d.subset(&split.val));
    let result: TrainResult<f64> = train(config, &tr, &va).map_err(CliError::training)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir.display(), e))?;
    let ckpt = out_dir.join(format!("{}.ckpt", rec.run_id));
    save_checkpoint(&ckpt, &result.params, config, result.best_epoch).map_err(CliError::training)?;
    write_curve(&out_dir.join(format!("{}.csv", rec.run_id)), &result.curve)?;
    rec.status = RunStatus::Ok;
    rec.best_val_loss = Some(result.best_val_loss);
    rec.best_epoch = Some(result.best_epoch);
    rec.epochs_run = Some(result.epochs_run);
    rec.checkpoint = Some(ckpt);
    rec.cf_rmse_curve = result.cf_rmse_curve();
    Ok(())
}

/// Trains one cell, or returns the ledger's record for it.
pub fn run_cell(config: &HyperConfig, d: &Dataset, env: &RunEnv<'_>) -> CellResult {
    let mut rec = blank_record(config, d);
    match env.ledger.find(&rec.run_id) {
        Ok(Some(existing)) => {
            return CellResult {
                record: existing,
                reused: true,
                failure: None,
            }
        }
        Ok(None) => {}
        Err(e) => {
            rec.error = Some(e.to_string());
            return CellResult {
                record: rec,
                reused: false,
                failure: Some(e),
            };
        }
    }
    let start = Instant::now();
    let outcome = fit(config, d, env.out_dir, &mut rec);
    rec.wall_time_s = start.elapsed().as_secs_f64();
    let failure = outcome.err();
    if let Some(e) = &failure {
        rec.status = RunStatus::Failed;
        rec.error = Some(e.to_string());
    }
    CellResult {
        record: rec,
        reused: false,
        failure,
    }
}

/// Test metrics of a checkpoint on the test split its config implies.
pub fn evaluate_checkpoint(path: &Path, d: &Dataset) -> CliResult<MetricsReport> {
    let (header, params) = load_checkpoint::<f64>(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if (header.p, header.k, header.e) != (d.meta.p, d.meta.k, d.meta.e_levels) {
        return Err(CliError::Data(format!(
            "checkpoint expects P={}, K={}, E={} but the dataset has P={}, K={}, E={}",
            header.p, header.k, header.e, d.meta.p, d.meta.k, d.meta.e_levels
        )));
    }
    let split = split_for(d, &header.config)?;
    evaluate(&params, &d.subset(&split.test)).map_err(CliError::training)
}

fn attach_metrics(cell: &mut CellResult, d: &Dataset) {
    if !cell.record.is_ok() || cell.record.metrics.is_some() {
        return;
    }
    let Some(path) = cell.record.checkpoint.clone() else {
        cell.failure = Some(CliError::Data(format!("run {} has no checkpoint", cell.record.run_id)));
        return;
    };
    match evaluate_checkpoint(&path, d) {
        Ok(m) => cell.record.metrics = Some(m),
        Err(e) => {
            if !cell.reused {
                cell.record.status = RunStatus::Failed;
                cell.record.error = Some(e.to_string());
            }
            cell.failure = Some(e);
        }
    }
}

fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))
}

fn notice_reused(cell: &CellResult) {
    if cell.reused {
        eprintln!("note: run {} ({}) already in the ledger; skipped", cell.record.run_id, cell.record.dataset);
    }
}

/// Appends the new records in job order through the single ledger writer.
fn commit(cells: &[CellResult], env: &RunEnv<'_>) -> CliResult<()> {
    for c in cells.iter().filter(|c| !c.reused) {
        env.ledger.append(&c.record)?;
    }
    Ok(())
}

pub struct SearchOutcome {
    pub winner: RunRecord,
    pub cells: Vec<CellResult>,
}

/// Trains every cell, picks the minimum validation loss (earliest cell on
/// ties), evaluates the winner on the test split and records every cell.
pub fn grid_search(cells: &[HyperConfig], d: &Dataset, env: &RunEnv<'_>) -> CliResult<SearchOutcome> {
    if cells.is_empty() {
        return Err(CliError::Usage("grid has no cells".into()));
    }
    let mut results: Vec<CellResult> =
        pool(env.workers)?.install(|| cells.par_iter().map(|c| run_cell(c, d, env)).collect());
    results.iter().for_each(notice_reused);

    let best = results
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.record.best_val_loss.filter(|_| c.record.is_ok()).map(|v| (i, v)))
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, bv)) if bv <= v => acc,
            _ => Some((i, v)),
        });
    let Some((wi, _)) = best else {
        commit(&results, env)?;
        let first = results.into_iter().find_map(|c| c.failure);
        return Err(first.unwrap_or_else(|| CliError::Numeric("every grid cell failed".into())));
    };
    if results[wi].reused && results[wi].record.metrics.is_none() {
        eprintln!(
            "note: winner {} was recorded earlier without test metrics; they are reported but not stored",
            results[wi].record.run_id
        );
    }
    attach_metrics(&mut results[wi], d);
    commit(&results, env)?;
    if let Some(e) = results[wi].failure.take() {
        return Err(e);
    }
    Ok(SearchOutcome {
        winner: results[wi].record.clone(),
        cells: results,
    })
}

/// Single run: a one-cell grid.
pub fn train_single(config: &HyperConfig, d: &Dataset, env: &RunEnv<'_>) -> CliResult<RunRecord> {
    Ok(grid_search(std::slice::from_ref(config), d, env)?.winner)
}

/// One ablation run.
#[derive(Debug)]
pub struct AblationRun {
    pub data_dir: PathBuf,
    pub variant: Variant,
    pub seed: u64,
    pub record: RunRecord,
}

/// Trains every `(dataset, seed, variant)` combination on shared splits and
/// seeds; every run is evaluated on its test split.
pub fn ablate(
    base: &HyperConfig,
    datasets: &[(PathBuf, Dataset)],
    seeds: &[u64],
    variants: &[Variant],
    env: &RunEnv<'_>,
) -> CliResult<Vec<AblationRun>> {
    let mut jobs = Vec::new();
    for (di, _) in datasets.iter().enumerate() {
        for &seed in seeds {
            for &variant in variants {
                jobs.push((di, seed, variant));
            }
        }
    }
    let mut results: Vec<CellResult> = pool(env.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(di, seed, variant)| {
                let c = HyperConfig {
                    seed,
                    variant,
                    ..base.clone()
                };
                let mut cell = run_cell(&c, &datasets[di].1, env);
                attach_metrics(&mut cell, &datasets[di].1);
                cell
            })
            .collect()
    });
    results.iter().for_each(notice_reused);
    commit(&results, env)?;
    if let Some(i) = results.iter().position(|c| c.failure.is_some()) {
        return Err(results.swap_remove(i).failure.expect("checked"));
    }
    Ok(jobs
        .into_iter()
        .zip(results)
        .map(|((di, seed, variant), c)| AblationRun {
            data_dir: datasets[di].0.clone(),
            variant,
            seed,
            record: c.record,
        })
        .collect())
}
