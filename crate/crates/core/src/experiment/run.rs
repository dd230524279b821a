//! One run, end to end: build the split, train to early stop or budget,
//! evaluate the best population on the test split, and leave a complete
//! artifact directory behind.
//!
//! Artifact layout under the run directory:
//!
//! ```text
//! manifest.json     resolved config + split digest + status + version
//! metrics.csv       epoch,mean_reward,train_both,val_both,event
//! result.json       final accuracies and stopping bookkeeping
//! checkpoints/
//!   best/           best-validation population
//!   epoch_*_{periodic|pre|post}/   optional curve snapshots
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{checkpoint_dir_name, write_population};
use crate::dialog::{accuracy, run_batch, DecodeMode};
use crate::error::{Error, Result};
use crate::experiment::config::RunConfig;
use crate::metrics::CheckpointPhase;
use crate::population::{AgentId, Population};
use crate::rng::rng_from_seed;
use crate::training::{
    run_training, EpochMetrics, PopulationTrainConfig, RunObserver, ValidationReport,
};
use crate::world::{make_splits, AttributeSchema, DatasetSplit};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub digest: String,
    pub split_digest: String,
    pub crate_version: String,
    pub status: RunStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

/// Machine-readable outcome of one run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub test_both: f64,
    pub test_one: f64,
    pub best_validation: f64,
    pub best_epoch: u64,
    pub stop_epoch: u64,
    pub stopped_early: bool,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct ArtifactObserver<'a> {
    rows: Vec<MetricsRow>,
    checkpoint_root: PathBuf,
    config: &'a RunConfig,
    failures: Vec<Error>,
}

struct MetricsRow {
    epoch: u64,
    mean_reward: f64,
    train_both: f64,
    val_both: Option<f64>,
    event: String,
}

impl ArtifactObserver<'_> {
    fn row_mut(&mut self, epoch: u64) -> &mut MetricsRow {
        // on_epoch always precedes validation/replacement hooks at an epoch.
        debug_assert_eq!(self.rows.last().map(|r| r.epoch), Some(epoch));
        self.rows.last_mut().unwrap()
    }

    fn snapshot(&mut self, epoch: u64, phase: CheckpointPhase, population: &Population) {
        let dir = self.checkpoint_root.join(checkpoint_dir_name(epoch, phase));
        if let Err(e) = write_population(&dir, population, epoch) {
            self.failures.push(e);
        }
    }
}

impl RunObserver for ArtifactObserver<'_> {
    fn on_epoch(&mut self, epoch: u64, metrics: &EpochMetrics) {
        self.rows.push(MetricsRow {
            epoch,
            mean_reward: metrics.mean_reward,
            train_both: metrics.train_both,
            val_both: None,
            event: String::new(),
        });
    }

    fn on_validation(&mut self, epoch: u64, population: &Population, report: &ValidationReport) {
        self.row_mut(epoch).val_both = Some(report.mean);
        let interval = self.config.checkpoints.interval;
        if interval > 0 && epoch % interval == 0 {
            self.snapshot(epoch, CheckpointPhase::Periodic, population);
        }
    }

    fn pre_replacement(&mut self, epoch: u64, population: &Population) {
        if self.config.checkpoints.event_snapshots {
            self.snapshot(epoch, CheckpointPhase::PreReplacement, population);
        }
    }

    fn post_replacement(&mut self, epoch: u64, population: &Population, replaced: &[AgentId]) {
        let names: Vec<String> = replaced.iter().map(|id| id.to_string()).collect();
        self.row_mut(epoch).event = format!("replaced:{}", names.join("+"));
        if self.config.checkpoints.event_snapshots {
            self.snapshot(epoch, CheckpointPhase::PostReplacement, population);
        }
    }
}

fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "epoch,mean_reward,train_both,val_both,event")?;
    for r in rows {
        let val = r.val_both.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", r.epoch, r.mean_reward, r.train_both, val, r.event)?;
    }
    out.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

/// Test accuracy of a population: greedy decoding, averaged over every
/// questioner-answerer pair.
pub fn evaluate_population(
    population: &Population,
    states: &[crate::world::GameState],
    rounds: usize,
    reward: &crate::dialog::RewardScheme,
) -> Result<crate::dialog::Accuracy> {
    let mut rng = rng_from_seed(0);
    let mut both = 0.0;
    let mut one = 0.0;
    let pairs = (population.n_q() * population.n_a()) as f64;
    for qbot in &population.qbots {
        for abot in &population.abots {
            let ts = run_batch(qbot, abot, states, rounds, DecodeMode::Greedy, &mut rng, reward)?;
            let acc = accuracy(&ts)?;
            both += acc.both / pairs;
            one += acc.one / pairs;
        }
    }
    Ok(crate::dialog::Accuracy { both, one })
}

/// Returns a previously completed result if the directory holds one with a
/// matching config digest.
pub fn load_completed(dir: &Path, config: &RunConfig) -> Option<RunResult> {
    let manifest: RunManifest = read_json(&dir.join("manifest.json")).ok()?;
    let result: RunResult = read_json(&dir.join("result.json")).ok()?;
    (manifest.digest == config.digest()
        && manifest.status == RunStatus::Complete
        && result.status == RunStatus::Complete)
        .then_some(result)
}

/// Executes one run into `dir`, or returns the stored result when the same
/// config already completed there (resumability).
pub fn execute_run(config: &RunConfig, dir: &Path) -> Result<RunResult> {
    config.validate()?;
    if let Some(done) = load_completed(dir, config) {
        return Ok(done);
    }
    fs::create_dir_all(dir)?;

    let schema = AttributeSchema::default();
    let split = make_splits(&schema, &config.split)?;
    let mut manifest = RunManifest {
        config: config.clone(),
        digest: config.digest(),
        split_digest: split.digest(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        status: RunStatus::Running,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;

    match train_and_evaluate(config, &split, dir) {
        Ok(result) => {
            manifest.status = RunStatus::Complete;
            write_json(&dir.join("manifest.json"), &manifest)?;
            write_json(&dir.join("result.json"), &result)?;
            Ok(result)
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            let _ = write_json(&dir.join("manifest.json"), &manifest);
            let failure = RunResult {
                test_both: f64::NAN,
                test_one: f64::NAN,
                best_validation: f64::NAN,
                best_epoch: 0,
                stop_epoch: 0,
                stopped_early: false,
                status: RunStatus::Failed,
                error: Some(e.to_string()),
            };
            let _ = write_json(&dir.join("result.json"), &failure);
            Err(e)
        }
    }
}

fn train_and_evaluate(config: &RunConfig, split: &DatasetSplit, dir: &Path) -> Result<RunResult> {
    let mut population = Population::init(
        config.population.n_q,
        config.population.n_a,
        config.setting.vocab(),
        config.arch,
        crate::autodiff::AdamHyper::with_learning_rate(config.train.learning_rate),
        config.train.seed,
    )?;
    let pop_config = PopulationTrainConfig {
        policy: config.population.policy,
        period: config.population.period,
    };
    let mut observer = ArtifactObserver {
        rows: Vec::new(),
        checkpoint_root: dir.join("checkpoints"),
        config,
        failures: Vec::new(),
    };
    let outcome = run_training(&mut population, split, &config.train, &pop_config, &mut observer)?;
    if let Some(e) = observer.failures.into_iter().next() {
        return Err(e);
    }
    write_metrics_csv(&dir.join("metrics.csv"), &observer.rows)?;
    write_population(&dir.join("checkpoints").join("best"), &outcome.best, outcome.best_epoch)?;

    let test_acc = evaluate_population(
        &outcome.best,
        &split.test,
        config.train.rounds,
        &config.train.reward,
    )?;
    Ok(RunResult {
        test_both: test_acc.both,
        test_one: test_acc.one,
        best_validation: outcome.best_validation,
        best_epoch: outcome.best_epoch,
        stop_epoch: outcome.stop_epoch,
        stopped_early: outcome.stopped_early,
        status: RunStatus::Complete,
        error: None,
    })
}

/// Row of the aggregate table: one completed run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRow {
    pub setting: String,
    pub policy: String,
    pub fold: usize,
    pub seed: u64,
    pub test_both: f64,
    pub test_one: f64,
    pub best_validation: f64,
    pub dir: String,
}

/// Loads every completed run row under a sweep directory.
pub fn collect_rows(sweep_dir: &Path) -> Result<Vec<RunRow>> {
    let mut rows = Vec::new();
    if !sweep_dir.exists() {
        return Ok(rows);
    }
    let mut entries: Vec<PathBuf> =
        fs::read_dir(sweep_dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for dir in entries {
        if !dir.is_dir() {
            continue;
        }
        let Ok(manifest) = read_json::<RunManifest>(&dir.join("manifest.json")) else {
            continue;
        };
        let Ok(result) = read_json::<RunResult>(&dir.join("result.json")) else {
            continue;
        };
        if manifest.status != RunStatus::Complete || result.status != RunStatus::Complete {
            continue;
        }
        rows.push(RunRow {
            setting: manifest.config.setting.name().to_string(),
            policy: manifest.config.population.policy.name().to_string(),
            fold: manifest.config.split.fold,
            seed: manifest.config.train.seed,
            test_both: result.test_both,
            test_one: result.test_one,
            best_validation: result.best_validation,
            dir: dir.to_string_lossy().into_owned(),
        });
    }
    Ok(rows)
}
