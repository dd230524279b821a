//! Aggregation and significance testing over completed sweep runs, plus
//! figure-ready CSV/JSON bundles: per-cell accuracy bars, similarity bars,
//! similarity learning curves with event markers, and p-value matrices.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::run::{collect_rows, RunRow};
use crate::experiment::stats::{paired_ttest, PairedTTest};
use crate::metrics::SimilarityPoint;

/// Mean/std of test accuracy for one (setting, strategy) cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellStats {
    pub setting: String,
    pub policy: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Per-run rows plus per-cell aggregates; means recompute exactly from the
/// stored rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<RunRow>,
    pub cells: Vec<CellStats>,
}

pub fn build_table(sweep_dir: &Path) -> Result<ResultTable> {
    let rows = collect_rows(sweep_dir)?;
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for row in &rows {
        groups
            .entry((row.setting.clone(), row.policy.clone()))
            .or_default()
            .push(row.test_both);
    }
    let cells = groups
        .into_iter()
        .map(|((setting, policy), values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
            } else {
                0.0
            };
            CellStats { setting, policy, mean, std, n }
        })
        .collect();
    Ok(ResultTable { rows, cells })
}

/// How runs are pooled into paired samples before a t-test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Pair by (fold, seed) within one model setting.
    WithinSetting,
    /// Pair by (setting, fold, seed) across all settings.
    AcrossSettings,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub setting: Option<String>,
    pub pooling: Pooling,
    pub n: usize,
    pub test: PairedTTest,
}

fn aligned_pairs(
    rows: &[RunRow],
    key_a: &str,
    key_b: &str,
    setting: Option<&str>,
    by_policy: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    // Pair runs by identical (setting, fold, seed) coordinates.
    let mut map_a: BTreeMap<(String, usize, u64), f64> = BTreeMap::new();
    let mut map_b: BTreeMap<(String, usize, u64), f64> = BTreeMap::new();
    for row in rows {
        if let Some(s) = setting {
            if row.setting != s {
                continue;
            }
        }
        let group = if by_policy { &row.policy } else { &row.setting };
        let coord = (row.setting.clone(), row.fold, row.seed);
        let coord = if by_policy {
            coord
        } else {
            // Comparing settings: the pairing key carries the policy instead.
            (row.policy.clone(), row.fold, row.seed)
        };
        if group == key_a {
            map_a.insert(coord, row.test_both);
        } else if group == key_b {
            map_b.insert(coord, row.test_both);
        }
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (coord, va) in &map_a {
        if let Some(vb) = map_b.get(coord) {
            a.push(*va);
            b.push(*vb);
        }
    }
    if a.len() != map_a.len() || a.len() != map_b.len() {
        return Err(Error::usage(format!(
            "misaligned pairing: {} vs {} runs share only {} (fold, seed) coordinates",
            map_a.len(),
            map_b.len(),
            a.len()
        )));
    }
    Ok((a, b))
}

/// Dependent paired t-test between two replacement strategies.
pub fn compare_policies(
    rows: &[RunRow],
    policy_a: &str,
    policy_b: &str,
    setting: Option<&str>,
) -> Result<Comparison> {
    let (a, b) = aligned_pairs(rows, policy_a, policy_b, setting, true)?;
    Ok(Comparison {
        a: policy_a.to_string(),
        b: policy_b.to_string(),
        setting: setting.map(str::to_string),
        pooling: if setting.is_some() { Pooling::WithinSetting } else { Pooling::AcrossSettings },
        n: a.len(),
        test: paired_ttest(&a, &b)?,
    })
}

/// Dependent paired t-test between two model settings, pooled across
/// strategies.
pub fn compare_settings(rows: &[RunRow], setting_a: &str, setting_b: &str) -> Result<Comparison> {
    let (a, b) = aligned_pairs(rows, setting_a, setting_b, None, false)?;
    Ok(Comparison {
        a: setting_a.to_string(),
        b: setting_b.to_string(),
        setting: None,
        pooling: Pooling::AcrossSettings,
        n: a.len(),
        test: paired_ttest(&a, &b)?,
    })
}

fn unique<'a>(rows: &'a [RunRow], f: impl Fn(&'a RunRow) -> &'a str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for row in rows {
        let v = f(row);
        if !out.iter().any(|x| x == v) {
            out.push(v.to_string());
        }
    }
    out
}

/// Square p-value matrices over strategies (both pooling modes) and over
/// settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub policy_comparisons: Vec<Comparison>,
    pub setting_comparisons: Vec<Comparison>,
}

pub fn significance(rows: &[RunRow]) -> Result<SignificanceReport> {
    let policies = unique(rows, |r| &r.policy);
    let settings = unique(rows, |r| &r.setting);
    let mut policy_comparisons = Vec::new();
    for (i, a) in policies.iter().enumerate() {
        for b in policies.iter().skip(i + 1) {
            // Within each setting, then pooled across settings when several
            // settings are present.
            for s in &settings {
                if let Ok(c) = compare_policies(rows, a, b, Some(s)) {
                    policy_comparisons.push(c);
                }
            }
            if settings.len() > 1 {
                if let Ok(c) = compare_policies(rows, a, b, None) {
                    policy_comparisons.push(c);
                }
            }
        }
    }
    let mut setting_comparisons = Vec::new();
    for (i, a) in settings.iter().enumerate() {
        for b in settings.iter().skip(i + 1) {
            if let Ok(c) = compare_settings(rows, a, b) {
                setting_comparisons.push(c);
            }
        }
    }
    Ok(SignificanceReport { policy_comparisons, setting_comparisons })
}

/// Accuracy bar-chart bundle: one row per cell with mean and std.
pub fn write_accuracy_bars(table: &ResultTable, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "setting,policy,mean_test_both,std_test_both,n")?;
    for c in &table.cells {
        writeln!(out, "{},{},{},{},{}", c.setting, c.policy, c.mean, c.std, c.n)?;
    }
    out.flush()?;
    Ok(())
}

/// Per-run rows for recomputation and auditing.
pub fn write_run_rows(table: &ResultTable, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "setting,policy,fold,seed,test_both,test_one,best_validation,dir")?;
    for r in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.setting, r.policy, r.fold, r.seed, r.test_both, r.test_one, r.best_validation, r.dir
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_pvalues_csv(report: &SignificanceReport, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "kind,a,b,setting,pooling,n,t,p,degenerate")?;
    for c in report.policy_comparisons.iter() {
        writeln!(
            out,
            "policy,{},{},{},{:?},{},{},{},{}",
            c.a,
            c.b,
            c.setting.as_deref().unwrap_or("all"),
            c.pooling,
            c.n,
            c.test.t,
            c.test.p,
            c.test.degenerate
        )?;
    }
    for c in report.setting_comparisons.iter() {
        writeln!(
            out,
            "setting,{},{},all,{:?},{},{},{},{}",
            c.a, c.b, c.pooling, c.n, c.test.t, c.test.p, c.test.degenerate
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Similarity bar data (final-population D per group, including baselines).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimilarityBar {
    pub label: String,
    pub d: f64,
}

pub fn write_similarity_bars(bars: &[SimilarityBar], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "label,d")?;
    for b in bars {
        writeln!(out, "{},{}", b.label, b.d)?;
    }
    out.flush()?;
    Ok(())
}

/// Similarity learning-curve bundle with replacement-event markers.
pub fn write_similarity_curve(points: &[SimilarityPoint], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,phase,d")?;
    for p in points {
        writeln!(out, "{},{},{}", p.epoch, p.phase, p.d)?;
    }
    out.flush()?;
    Ok(())
}
