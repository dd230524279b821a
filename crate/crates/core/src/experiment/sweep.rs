//! Sweep execution: expand the matrix, run every (cell, fold, seed) config in
//! worker threads, skip runs whose artifacts already exist with a matching
//! digest, and aggregate per-cell statistics over whatever completed.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiment::config::{RunConfig, SweepConfig};
use crate::experiment::run::{execute_run, load_completed, RunResult};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRunReport {
    pub name: String,
    pub dir: String,
    pub skipped: bool,
    pub result: Option<RunResult>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellSummary {
    pub setting: String,
    pub policy: String,
    pub mean_test_both: f64,
    pub std_test_both: f64,
    pub runs: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<SweepRunReport>,
    pub cells: Vec<CellSummary>,
}

/// Runs the sweep with up to `jobs` worker threads. Each run stays
/// single-threaded and fully seeded, so parallelism never changes results.
/// Partial failures are recorded and aggregation proceeds over completions.
pub fn execute_sweep(sweep: &SweepConfig, out_dir: &Path, jobs: usize) -> Result<SweepReport> {
    sweep.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let runs = sweep.expand();
    let jobs = jobs.max(1).min(runs.len().max(1));

    let next = AtomicUsize::new(0);
    let reports: Mutex<Vec<(usize, SweepRunReport)>> = Mutex::new(Vec::with_capacity(runs.len()));

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= runs.len() {
                    break;
                }
                let report = run_one(&runs[i], out_dir);
                reports.lock().unwrap().push((i, report));
            });
        }
    });

    let mut indexed = reports.into_inner().unwrap();
    indexed.sort_by_key(|(i, _)| *i);
    let run_reports: Vec<SweepRunReport> = indexed.into_iter().map(|(_, r)| r).collect();
    let cells = summarize(sweep, &runs, &run_reports);
    let report = SweepReport { runs: run_reports, cells };

    let file = std::fs::File::create(out_dir.join("sweep_report.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report)?;
    Ok(report)
}

fn run_one(config: &RunConfig, out_dir: &Path) -> SweepRunReport {
    let dir: PathBuf = out_dir.join(config.run_dir_name());
    let skipped = load_completed(&dir, config).is_some();
    match execute_run(config, &dir) {
        Ok(result) => SweepRunReport {
            name: config.name.clone(),
            dir: dir.to_string_lossy().into_owned(),
            skipped,
            result: Some(result),
            error: None,
        },
        Err(e) => SweepRunReport {
            name: config.name.clone(),
            dir: dir.to_string_lossy().into_owned(),
            skipped: false,
            result: None,
            error: Some(e.to_string()),
        },
    }
}

fn summarize(
    sweep: &SweepConfig,
    runs: &[RunConfig],
    reports: &[SweepRunReport],
) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    for cell in &sweep.cells {
        let mut values = Vec::new();
        let mut failed = 0;
        for (config, report) in runs.iter().zip(reports) {
            if config.setting == cell.setting && config.population.policy == cell.policy {
                match &report.result {
                    Some(r) => values.push(r.test_both),
                    None => failed += 1,
                }
            }
        }
        let n = values.len();
        let mean = if n > 0 { values.iter().sum::<f64>() / n as f64 } else { f64::NAN };
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        cells.push(CellSummary {
            setting: cell.setting.name().to_string(),
            policy: cell.policy.name().to_string(),
            mean_test_both: mean,
            std_test_both: std,
            runs: n,
            failed,
        });
    }
    cells
}
