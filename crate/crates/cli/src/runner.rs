//! Parallel sweep execution with deterministic, per-point flushed output.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use subnyq_core::experiments::{
    run_trial, summarize_point, sweep_points, ExperimentConfig, SummaryRow, SweepPoint,
    SweepSummary, TrialRecord,
};

use crate::error::{CliError, Result};
use crate::io;

pub const THREADS_ENV: &str = "SUBNYQ_THREADS";

/// Worker count from `SUBNYQ_THREADS`; unset or 0 means one per core.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v:?} is not a thread count"))),
    }
}

/// Runs every point in order; trials of a point run in parallel and are
/// collected in trial order, so output never depends on scheduling.
///
/// `on_point` sees each finished point before the next one starts.
pub fn run_sweep<F>(cfg: &ExperimentConfig, threads: usize, mut on_point: F) -> Result<(SweepSummary, Vec<TrialRecord>)>
where
    F: FnMut(&SweepPoint, &[TrialRecord], &[SummaryRow]) -> Result<()>,
{
    cfg.validate().map_err(CliError::InvalidConfig)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let mut summary = SweepSummary::default();
    let mut all = Vec::new();
    for point in sweep_points(cfg) {
        let per_trial: Vec<Vec<TrialRecord>> = pool.install(|| {
            (0..cfg.trials_per_point)
                .into_par_iter()
                .map(|trial| {
                    let start = Instant::now();
                    let mut recs = run_trial(cfg, &point, trial)?;
                    let per_method = start.elapsed().as_secs_f64() / recs.len().max(1) as f64;
                    for r in &mut recs {
                        r.wall_time_s = Some(per_method);
                    }
                    Ok(recs)
                })
                .collect::<subnyq_core::Result<_>>()
                .map_err(CliError::InvalidConfig)
        })?;
        let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
        let rows: Vec<SummaryRow> = cfg
            .methods
            .iter()
            .map(|&m| summarize_point(cfg, &point, m, &records))
            .collect();
        on_point(&point, &records, &rows)?;
        summary.rows.extend(rows);
        all.extend(records);
    }
    Ok((summary, all))
}

/// Writes `config_echo.json`, `trials.csv` and `summary.csv` under
/// `out_dir`, flushing both CSVs after every point.
pub fn run_sweep_to_dir(cfg: &ExperimentConfig, out_dir: &Path, threads: usize) -> Result<(SweepSummary, Vec<TrialRecord>)> {
    cfg.validate().map_err(CliError::InvalidConfig)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let echo = out_dir.join("config_echo.json");
    let mut text = serde_json::to_string_pretty(cfg)?;
    text.push('\n');
    fs::write(&echo, text).map_err(|e| CliError::io(&echo, e))?;

    let trials_path = out_dir.join("trials.csv");
    let summary_path = out_dir.join("summary.csv");
    let mut trials = io::create(&trials_path)?;
    let mut summary = io::create(&summary_path)?;
    io::write_trial_header(&mut trials)?;
    io::write_summary_header(&mut summary)?;
    run_sweep(cfg, threads, |_, records, rows| {
        for r in records {
            io::write_trial(&mut trials, r)?;
        }
        for row in rows {
            io::write_summary_row(&mut summary, row)?;
        }
        trials.flush().map_err(|e| CliError::io(&trials_path, e))?;
        summary.flush().map_err(|e| CliError::io(&summary_path, e))?;
        Ok(())
    })
}
