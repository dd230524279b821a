//! End-to-end artifact pipeline on miniature budgets: run directories,
//! resumability, metrics CSV determinism, and the similarity path over
//! checkpoints.

use genlang::agents::ArchDims;
use genlang::checkpoint::{list_checkpoints, read_population};
use genlang::experiment::{
    build_table, execute_run, execute_sweep, CellConfig, CheckpointConfig, RunConfig, SettingName,
    SweepConfig,
};
use genlang::metrics::{similarity_curve, CheckpointPhase, SimilarityConfig};
use genlang::population::ReplacementPolicy;
use genlang::training::TrainConfig;
use genlang::world::{make_splits, AttributeSchema};

fn tiny_config(policy: ReplacementPolicy, multi: bool, seed: u64) -> RunConfig {
    let n = if multi { 2 } else { 1 };
    RunConfig {
        name: format!("tiny_{}", policy.name()),
        arch: ArchDims { hidden: 8, embed: 4 },
        population: genlang::experiment::config::PopulationConfig {
            n_q: n,
            n_a: n,
            period: 40,
            policy,
        },
        train: TrainConfig {
            batch_size: 1,
            epochs: 100,
            patience: 1000,
            val_interval: 20,
            seed,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn run_writes_complete_artifacts_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let config = tiny_config(ReplacementPolicy::SingleRandom, false, 3);
    let result = execute_run(&config, &run_dir).unwrap();
    assert!(result.test_both >= 0.0 && result.test_both <= 1.0);
    assert!(run_dir.join("manifest.json").exists());
    assert!(run_dir.join("metrics.csv").exists());
    assert!(run_dir.join("result.json").exists());
    assert!(run_dir.join("checkpoints/best/population.json").exists());

    // Second invocation must reuse the artifacts, not retrain.
    let metrics_before = std::fs::read(run_dir.join("metrics.csv")).unwrap();
    let t0 = std::time::Instant::now();
    let again = execute_run(&config, &run_dir).unwrap();
    assert!(t0.elapsed().as_millis() < 200, "resume should skip training");
    assert_eq!(again.test_both, result.test_both);
    assert_eq!(metrics_before, std::fs::read(run_dir.join("metrics.csv")).unwrap());

    // A changed config in the same directory retrains.
    let mut changed = config.clone();
    changed.train.seed = 4;
    let other = execute_run(&changed, &run_dir).unwrap();
    let _ = other;
}

#[test]
fn metrics_csv_is_byte_identical_across_executions() {
    let config = tiny_config(ReplacementPolicy::SingleRandom, false, 9);
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let run_dir = dir.path().join("run");
        execute_run(&config, &run_dir).unwrap();
        bytes.push(std::fs::read(run_dir.join("metrics.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn metrics_csv_has_contracted_columns_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let config = tiny_config(ReplacementPolicy::SingleRandom, false, 5);
    execute_run(&config, &run_dir).unwrap();
    let text = std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "epoch,mean_reward,train_both,val_both,event");
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 100, "one row per epoch");
    // Replacement events at the period boundaries.
    for epoch in [40usize, 80] {
        let row = body[epoch - 1];
        assert!(row.contains("replaced:"), "epoch {epoch} row missing event: {row}");
    }
    // Validation column filled only on validation epochs.
    let val_field = |row: &str| row.split(',').nth(3).unwrap().to_string();
    assert!(!val_field(body[19]).is_empty());
    assert!(val_field(body[18]).is_empty());
}

#[test]
fn event_snapshots_support_similarity_curves() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let mut config = tiny_config(ReplacementPolicy::ReplaceAll, true, 11);
    config.checkpoints = CheckpointConfig { event_snapshots: true, interval: 0 };
    execute_run(&config, &run_dir).unwrap();

    let listed = list_checkpoints(&run_dir.join("checkpoints")).unwrap();
    let phases: Vec<CheckpointPhase> = listed.iter().map(|(_, p, _)| *p).collect();
    assert!(phases.contains(&CheckpointPhase::PreReplacement));
    assert!(phases.contains(&CheckpointPhase::PostReplacement));

    let schema = AttributeSchema::default();
    let split = make_splits(&schema, &config.split).unwrap();
    let mut checkpoints = Vec::new();
    for (epoch, phase, path) in listed {
        let (pop, _) = read_population(&path).unwrap();
        checkpoints.push((epoch, phase, pop.qbots, pop.abots));
    }
    let sim = SimilarityConfig { draws: 3, ..Default::default() };
    let points = similarity_curve(&checkpoints, &split.test[..30], &sim).unwrap();
    assert_eq!(points.len(), checkpoints.len());
    assert!(points.iter().all(|p| p.d.is_finite() && p.d >= 0.0));
    // The curve length matches the checkpoint count and no-replacement runs
    // would have no pre/post entries; here every event has both.
    let pre = points.iter().filter(|p| p.phase == CheckpointPhase::PreReplacement).count();
    let post = points.iter().filter(|p| p.phase == CheckpointPhase::PostReplacement).count();
    assert_eq!(pre, post);
    assert!(pre >= 2);
}

#[test]
fn sweep_runs_aggregate_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let sweep = SweepConfig {
        base: tiny_config(ReplacementPolicy::NoReplacement, false, 0),
        cells: vec![
            CellConfig {
                setting: SettingName::SmallVocab,
                policy: ReplacementPolicy::NoReplacement,
                n_q: 1,
                n_a: 1,
                period: 0,
            },
            CellConfig {
                setting: SettingName::SmallVocab,
                policy: ReplacementPolicy::SingleRandom,
                n_q: 1,
                n_a: 1,
                period: 0,
            },
        ],
        folds: vec![0, 1],
        seeds: vec![0, 1],
    };
    let report = execute_sweep(&sweep, &out, 2).unwrap();
    assert_eq!(report.runs.len(), 8);
    assert!(report.runs.iter().all(|r| r.result.is_some()));
    assert!(report.runs.iter().all(|r| !r.skipped));
    assert_eq!(report.cells.len(), 2);
    for cell in &report.cells {
        assert_eq!(cell.runs, 4);
        assert_eq!(cell.failed, 0);
        assert!(cell.mean_test_both.is_finite());
    }

    // Aggregates recompute exactly from the stored per-run rows.
    let table = build_table(&out).unwrap();
    assert_eq!(table.rows.len(), 8);
    for cell in &table.cells {
        let from_rows: Vec<f64> = table
            .rows
            .iter()
            .filter(|r| r.policy == cell.policy && r.setting == cell.setting)
            .map(|r| r.test_both)
            .collect();
        let mean = from_rows.iter().sum::<f64>() / from_rows.len() as f64;
        assert!((mean - cell.mean).abs() < 1e-12);
    }

    // Re-running the sweep reuses all 8 runs.
    let again = execute_sweep(&sweep, &out, 2).unwrap();
    assert!(again.runs.iter().all(|r| r.skipped));
    for (a, b) in report.cells.iter().zip(&again.cells) {
        assert_eq!(a.mean_test_both, b.mean_test_both);
    }
}
