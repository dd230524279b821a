//! Run and sweep configuration. Files are TOML; every field has a default so
//! configs only state what they change. Resolved configs are echoed into run
//! manifests verbatim, along with a digest that keys the run directory.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{ArchDims, VocabSetting};
use crate::error::{Error, Result};
use crate::metrics::SimilarityConfig;
use crate::population::ReplacementPolicy;
use crate::training::TrainConfig;
use crate::world::SplitConfig;

/// Scale label echoed into manifests so desk-scale numbers are never
/// mistaken for full-scale ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetLabel {
    Full,
    Desk,
    Custom,
}

impl std::fmt::Display for PresetLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PresetLabel::Full => write!(f, "full"),
            PresetLabel::Desk => write!(f, "desk"),
            PresetLabel::Custom => write!(f, "custom"),
        }
    }
}

/// The four model settings studied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingName {
    SmallVocab,
    MemorylessSmallVocab,
    Overcomplete,
    MemorylessOvercomplete,
}

impl SettingName {
    pub fn vocab(&self) -> VocabSetting {
        match self {
            SettingName::SmallVocab => VocabSetting::small_vocab(),
            SettingName::MemorylessSmallVocab => VocabSetting::memoryless_small_vocab(),
            SettingName::Overcomplete => VocabSetting::overcomplete(),
            SettingName::MemorylessOvercomplete => VocabSetting::memoryless_overcomplete(),
        }
    }

    pub fn all() -> [SettingName; 4] {
        [
            SettingName::SmallVocab,
            SettingName::MemorylessSmallVocab,
            SettingName::Overcomplete,
            SettingName::MemorylessOvercomplete,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            SettingName::SmallVocab => "small_vocab",
            SettingName::MemorylessSmallVocab => "memoryless_small_vocab",
            SettingName::Overcomplete => "overcomplete",
            SettingName::MemorylessOvercomplete => "memoryless_overcomplete",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    pub n_q: usize,
    pub n_a: usize,
    /// Replacement period E.
    pub period: u64,
    pub policy: ReplacementPolicy,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            n_q: 1,
            n_a: 1,
            period: 5000,
            policy: ReplacementPolicy::NoReplacement,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckpointConfig {
    /// Snapshot the population just before and just after every replacement
    /// event (enables similarity learning curves around events).
    pub event_snapshots: bool,
    /// Periodic snapshot interval in epochs; 0 disables. Snapshots are taken
    /// at validation epochs, so this should be a multiple of
    /// `train.val_interval`.
    pub interval: u64,
}

impl Default for CheckpointConfig {
    fn default() -> Self {
        CheckpointConfig { event_snapshots: false, interval: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub name: String,
    pub preset: PresetLabel,
    pub setting: SettingName,
    pub arch: ArchDims,
    pub population: PopulationConfig,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub checkpoints: CheckpointConfig,
    pub similarity: SimilarityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "run".to_string(),
            preset: PresetLabel::Custom,
            setting: SettingName::SmallVocab,
            arch: ArchDims::default(),
            population: PopulationConfig::default(),
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            checkpoints: CheckpointConfig::default(),
            similarity: SimilarityConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.setting.vocab().validate()?;
        self.arch.validate()?;
        self.train.validate()?;
        self.split.validate()?;
        self.similarity.validate()?;
        self.population.policy.validate(self.population.n_q, self.population.n_a)?;
        if self.population.period == 0 {
            return Err(Error::config("population.period must be positive".to_string()));
        }
        Ok(())
    }

    /// Stable hex digest of the resolved config; keys the run directory and
    /// guards sweep resumption.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let out = hasher.finalize();
        out.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Directory name for this run's artifacts.
    pub fn run_dir_name(&self) -> String {
        format!(
            "{}_{}_f{}_s{}_{}",
            self.setting.name(),
            self.population.policy.name(),
            self.split.fold,
            self.train.seed,
            self.digest()
        )
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("config parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Full-scale defaults for one (setting, policy) cell.
pub fn full_run(setting: SettingName, policy: ReplacementPolicy, multi: bool) -> RunConfig {
    let (n, period) = if multi { (5, 25_000) } else { (1, 5_000) };
    RunConfig {
        name: format!("{}_{}", setting.name(), policy.name()),
        preset: PresetLabel::Full,
        setting,
        population: PopulationConfig { n_q: n, n_a: n, period, policy },
        ..Default::default()
    }
}

/// Desk-scale defaults: smaller nets, 10x shorter budget and patience, the
/// train pool taken once per batch, and proportionally shorter replacement
/// periods.
pub fn desk_run(setting: SettingName, policy: ReplacementPolicy, multi: bool) -> RunConfig {
    let (n, period) = if multi { (5, 10_000) } else { (1, 2_000) };
    RunConfig {
        name: format!("desk_{}_{}", setting.name(), policy.name()),
        preset: PresetLabel::Desk,
        setting,
        arch: ArchDims { hidden: 16, embed: 8 },
        population: PopulationConfig { n_q: n, n_a: n, period, policy },
        train: TrainConfig {
            batch_size: 1, // the pool once per epoch
            epochs: 200_000,
            patience: 20_000,
            val_interval: 500,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// One sweep cell: a (setting, strategy) pair expanded over folds and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub setting: SettingName,
    pub policy: ReplacementPolicy,
    #[serde(default = "default_cell_size")]
    pub n_q: usize,
    #[serde(default = "default_cell_size")]
    pub n_a: usize,
    /// Replacement period; 0 means "use the base config's period".
    #[serde(default)]
    pub period: u64,
}

fn default_cell_size() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Template applied to every run; cells override setting/policy/sizes.
    pub base: RunConfig,
    pub cells: Vec<CellConfig>,
    pub folds: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            base: RunConfig::default(),
            cells: vec![],
            folds: vec![0, 1, 2, 3],
            seeds: vec![0, 1, 2, 3],
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: SweepConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("sweep parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::config("sweep has no cells".to_string()));
        }
        if self.folds.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("sweep needs at least one fold and one seed".to_string()));
        }
        if self.folds.iter().any(|&f| f >= crate::world::FOLD_COUNT) {
            return Err(Error::config("sweep fold out of range".to_string()));
        }
        for run in self.expand() {
            run.validate()?;
        }
        Ok(())
    }

    /// All (cell, fold, seed) run configs, in deterministic order.
    pub fn expand(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for cell in &self.cells {
            for &fold in &self.folds {
                for &seed in &self.seeds {
                    let mut run = self.base.clone();
                    run.setting = cell.setting;
                    run.population.policy = cell.policy;
                    run.population.n_q = cell.n_q;
                    run.population.n_a = cell.n_a;
                    if cell.period > 0 {
                        run.population.period = cell.period;
                    }
                    run.split.fold = fold;
                    run.train.seed = seed;
                    run.name = format!(
                        "{}_{}_f{fold}_s{seed}",
                        cell.setting.name(),
                        cell.policy.name()
                    );
                    out.push(run);
                }
            }
        }
        out
    }
}
