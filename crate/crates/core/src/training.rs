//! REINFORCE training: one batch per epoch, one policy-gradient update of
//! both interacting agents per batch, periodic all-pairs greedy validation,
//! patience-based early stopping, and replacement events every `E` epochs.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{ABot, QBot};
use crate::autodiff::Tensor;
use crate::dialog::{
    accuracy, rollout_batch, run_batch, tile_batch, ActionSource, BatchRollout, DecodeMode,
    RewardScheme,
};
use crate::error::{Error, Result};
use crate::population::{
    apply_replacement, sample_pair, select_replacements, AgentId, Population, ReplacementPolicy,
};
use crate::rng::{self, derive_seed, rng_from_seed};
use crate::world::DatasetSplit;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Raw rewards (no variance reduction).
    None,
    /// Exponential moving average of the batch mean reward.
    MovingAverage,
}

/// Per-run optimization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Batch is the whole train pool, tiled up to this size when larger.
    pub batch_size: usize,
    /// Epoch budget (hard cap).
    pub epochs: u64,
    /// Stop after this many epochs without validation improvement.
    pub patience: u64,
    /// Validate every this many epochs.
    pub val_interval: u64,
    /// Dialog rounds per episode.
    pub rounds: usize,
    pub reward: RewardScheme,
    pub baseline: BaselineMode,
    pub baseline_decay: f64,
    /// Optional global-norm gradient guard, off by default.
    pub grad_clip: Option<f64>,
    /// Scale each batch's advantages to unit standard deviation.
    pub normalize_advantage: bool,
    /// Entropy-bonus coefficient on all policy heads; 0 disables.
    pub entropy_bonus: f64,
    /// Linearly decay an agent's entropy bonus to zero by this AGE in
    /// epochs; 0 keeps it constant. Fresh (and freshly replaced) agents
    /// explore, elders consolidate.
    pub entropy_anneal_epochs: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 1000,
            epochs: 1_000_000,
            patience: 200_000,
            val_interval: 500,
            rounds: crate::dialog::DEFAULT_ROUNDS,
            reward: RewardScheme::default(),
            baseline: BaselineMode::MovingAverage,
            baseline_decay: 0.9,
            grad_clip: None,
            normalize_advantage: false,
            entropy_bonus: 0.0,
            entropy_anneal_epochs: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Entropy coefficient in effect for an agent of the given age.
    pub fn entropy_at(&self, age: u64) -> f64 {
        if self.entropy_anneal_epochs == 0 || self.entropy_bonus == 0.0 {
            return self.entropy_bonus;
        }
        let remaining = 1.0 - (age as f64 / self.entropy_anneal_epochs as f64);
        self.entropy_bonus * remaining.max(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 && self.learning_rate != 0.0 {
            return Err(Error::config("learning rate must be non-negative".to_string()));
        }
        if self.batch_size == 0 || self.patience == 0 || self.val_interval == 0 {
            return Err(Error::config(
                "batch_size, patience and val_interval must be positive".to_string(),
            ));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds must be at least 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::config("baseline_decay must lie in [0, 1)".to_string()));
        }
        if self.entropy_bonus < 0.0 {
            return Err(Error::config("entropy_bonus must be non-negative".to_string()));
        }
        self.reward.validate()
    }
}

/// Advantage baseline. The moving average seeds itself with the first batch
/// mean, so the first update is exactly zero-advantage.
#[derive(Clone, Debug)]
pub struct RewardBaseline {
    mode: BaselineMode,
    decay: f64,
    value: Option<f64>,
}

impl RewardBaseline {
    pub fn new(mode: BaselineMode, decay: f64) -> Self {
        RewardBaseline { mode, decay, value: None }
    }

    /// Baseline to subtract from this batch's rewards.
    pub fn current(&self, batch_mean: f64) -> f64 {
        match self.mode {
            BaselineMode::None => 0.0,
            BaselineMode::MovingAverage => self.value.unwrap_or(batch_mean),
        }
    }

    pub fn update(&mut self, batch_mean: f64) {
        if self.mode == BaselineMode::MovingAverage {
            let prev = self.value.unwrap_or(batch_mean);
            self.value = Some(self.decay * prev + (1.0 - self.decay) * batch_mean);
        }
    }
}

/// REINFORCE surrogate: `-mean_b (reward_b - baseline) * sum(logprobs_b)`.
/// Rewards enter as constants; gradients flow through the log-probabilities
/// alone. Greedy rollouts carry no sampled actions and are rejected.
pub fn reinforce_loss(rollout: &mut BatchRollout, baseline: f64) -> Result<crate::autodiff::Var> {
    reinforce_loss_with_entropy(rollout, baseline, 0.0, 0.0)
}

/// REINFORCE surrogate plus optional per-role entropy bonuses: subtracting
/// `beta * mean episode entropy` from the loss keeps a policy from
/// saturating before the dialog code forms. Each agent gets its own
/// coefficient so a freshly replaced agent can explore while its elders
/// consolidate. Zero coefficients recover the plain estimator.
pub fn reinforce_loss_with_entropy(
    rollout: &mut BatchRollout,
    baseline: f64,
    beta_q: f64,
    beta_a: f64,
) -> Result<crate::autodiff::Var> {
    let logprob = rollout.episode_logprob.ok_or_else(|| {
        Error::usage("reinforce_loss: rollout has no sampled actions (greedy mode)")
    })?;
    let n = rollout.transcripts.len() as f64;
    let advantages: Vec<f64> =
        rollout.transcripts.iter().map(|t| t.reward - baseline).collect();
    let mut loss = rollout.tape.weighted_sum(logprob, &advantages, -1.0 / n)?;
    let ones = vec![1.0; rollout.transcripts.len()];
    for (beta, entropy) in [
        (beta_q, rollout.episode_entropy_q),
        (beta_a, rollout.episode_entropy_a),
    ] {
        if beta != 0.0 {
            let e = entropy.ok_or_else(|| {
                Error::usage("reinforce_loss: rollout carries no entropy terms")
            })?;
            let bonus = rollout.tape.weighted_sum(e, &ones, -beta / n)?;
            loss = rollout.tape.add(loss, bonus)?;
        }
    }
    Ok(loss)
}

/// Like `reinforce_loss_with_entropy` with advantages divided by `scale`.
fn scaled_reinforce_loss(
    rollout: &mut BatchRollout,
    baseline: f64,
    scale: f64,
    beta_q: f64,
    beta_a: f64,
) -> Result<crate::autodiff::Var> {
    let logprob = rollout.episode_logprob.ok_or_else(|| {
        Error::usage("reinforce_loss: rollout has no sampled actions (greedy mode)")
    })?;
    let n = rollout.transcripts.len() as f64;
    let advantages: Vec<f64> = rollout
        .transcripts
        .iter()
        .map(|t| (t.reward - baseline) / scale)
        .collect();
    let mut loss = rollout.tape.weighted_sum(logprob, &advantages, -1.0 / n)?;
    let ones = vec![1.0; rollout.transcripts.len()];
    for (beta, entropy) in [
        (beta_q, rollout.episode_entropy_q),
        (beta_a, rollout.episode_entropy_a),
    ] {
        if beta != 0.0 {
            let e = entropy.ok_or_else(|| {
                Error::usage("reinforce_loss: rollout carries no entropy terms")
            })?;
            let bonus = rollout.tape.weighted_sum(e, &ones, -beta / n)?;
            loss = rollout.tape.add(loss, bonus)?;
        }
    }
    Ok(loss)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub mean_reward: f64,
    pub train_both: f64,
    pub train_one: f64,
}

/// One epoch = one batch = one Adam step for each of the two interacting
/// agents.
pub fn train_epoch(
    qbot: &mut QBot,
    abot: &mut ABot,
    batch: &[crate::world::GameState],
    config: &TrainConfig,
    baseline: &mut RewardBaseline,
    rng: &mut ChaCha8Rng,
    epoch: u64,
) -> Result<EpochMetrics> {
    let mut rollout = rollout_batch(
        qbot,
        abot,
        batch,
        config.rounds,
        ActionSource::Sample(rng),
        &config.reward,
    )?;
    let acc = accuracy(&rollout.transcripts)?;
    let mean_reward = rollout.transcripts.iter().map(|t| t.reward).sum::<f64>()
        / rollout.transcripts.len() as f64;

    let base = baseline.current(mean_reward);
    let beta_q = config.entropy_at(epoch.saturating_sub(qbot.birth_epoch));
    let beta_a = config.entropy_at(epoch.saturating_sub(abot.birth_epoch));
    let loss = if config.normalize_advantage {
        let n = rollout.transcripts.len() as f64;
        let advantages: Vec<f64> =
            rollout.transcripts.iter().map(|t| t.reward - base).collect();
        let mean_adv = advantages.iter().sum::<f64>() / n;
        let var = advantages.iter().map(|a| (a - mean_adv).powi(2)).sum::<f64>() / n;
        let scale = var.sqrt().max(1e-8);
        scaled_reinforce_loss(&mut rollout, base, scale, beta_q, beta_a)?
    } else {
        reinforce_loss_with_entropy(&mut rollout, base, beta_q, beta_a)?
    };
    if !rollout.tape.value(loss).is_finite() {
        return Err(Error::numeric("reinforce loss".to_string()));
    }
    let mut grads = rollout.tape.backward(loss)?;

    let mut q_grads: Vec<Tensor> = Vec::with_capacity(rollout.q_vars.all().len());
    for (&var, param) in rollout.q_vars.all().iter().zip(qbot.params()) {
        q_grads.push(grads.take_or_zeros(var, param.shape()));
    }
    let mut a_grads: Vec<Tensor> = Vec::with_capacity(rollout.a_vars.all().len());
    for (&var, param) in rollout.a_vars.all().iter().zip(abot.params()) {
        a_grads.push(grads.take_or_zeros(var, param.shape()));
    }
    if let Some(max_norm) = config.grad_clip {
        clip_global_norm(&mut q_grads, max_norm);
        clip_global_norm(&mut a_grads, max_norm);
    }

    let grad_refs: Vec<&Tensor> = q_grads.iter().collect();
    qbot.apply_grads(&grad_refs)?;
    let grad_refs: Vec<&Tensor> = a_grads.iter().collect();
    abot.apply_grads(&grad_refs)?;

    baseline.update(mean_reward);
    Ok(EpochMetrics { mean_reward, train_both: acc.both, train_one: acc.one })
}

fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) {
    let sq: f64 = grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
}

/// All-pairs greedy validation. `per_q[i]` is the mean both-accuracy of
/// questioner `i` over every answerer partner, and symmetrically for
/// `per_a`; `mean` averages over all pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub per_q: Vec<f64>,
    pub per_a: Vec<f64>,
    pub mean: f64,
}

pub fn validate(
    population: &Population,
    states: &[crate::world::GameState],
    rounds: usize,
    reward: &RewardScheme,
) -> Result<ValidationReport> {
    let (n_q, n_a) = (population.n_q(), population.n_a());
    let mut per_q = vec![0.0; n_q];
    let mut per_a = vec![0.0; n_a];
    let mut rng = rng_from_seed(0); // greedy decoding consumes no draws
    let mut total = 0.0;
    for (i, qbot) in population.qbots.iter().enumerate() {
        for (j, abot) in population.abots.iter().enumerate() {
            let transcripts =
                run_batch(qbot, abot, states, rounds, DecodeMode::Greedy, &mut rng, reward)?;
            let acc = accuracy(&transcripts)?;
            per_q[i] += acc.both / n_a as f64;
            per_a[j] += acc.both / n_q as f64;
            total += acc.both;
        }
    }
    Ok(ValidationReport { per_q, per_a, mean: total / (n_q * n_a) as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: u64,
    pub mean_reward: f64,
    pub train_both: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValRow {
    pub epoch: u64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub epoch: u64,
    pub replaced: Vec<AgentId>,
}

/// Everything a run leaves behind in memory: per-epoch train metrics,
/// validation checks, and replacement events.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunHistory {
    pub epochs: Vec<EpochRow>,
    pub validations: Vec<ValRow>,
    pub events: Vec<EventRow>,
}

/// Patience rule over the validation series: stop once the best mean has not
/// strictly improved for `patience` epochs. Returns (stop, best epoch).
pub fn early_stop(history: &RunHistory, patience: u64) -> (bool, u64) {
    let mut best = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut last_epoch = 0;
    for v in &history.validations {
        if v.mean > best {
            best = v.mean;
            best_epoch = v.epoch;
        }
        last_epoch = v.epoch;
    }
    (last_epoch.saturating_sub(best_epoch) >= patience, best_epoch)
}

/// Hooks for artifact writers; every callback defaults to a no-op.
pub trait RunObserver {
    fn on_epoch(&mut self, _epoch: u64, _metrics: &EpochMetrics) {}
    fn on_validation(&mut self, _epoch: u64, _population: &Population, _report: &ValidationReport) {
    }
    fn pre_replacement(&mut self, _epoch: u64, _population: &Population) {}
    fn post_replacement(&mut self, _epoch: u64, _population: &Population, _replaced: &[AgentId]) {}
}

/// Observer that does nothing.
pub struct NullObserver;
impl RunObserver for NullObserver {}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationTrainConfig {
    pub policy: ReplacementPolicy,
    /// Replacement period E.
    pub period: u64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub history: RunHistory,
    /// Population snapshot at the best validation check.
    pub best: Population,
    pub best_epoch: u64,
    pub best_validation: f64,
    pub stop_epoch: u64,
    pub stopped_early: bool,
}

/// The full training loop. Per epoch: sample an interaction pair, run one
/// batch update, then (on schedule) validate and fire the replacement policy.
/// Validation runs before replacement at shared epochs so the policy sees
/// fresh accuracies and best-checkpoint snapshots are taken pre-replacement.
pub fn run_training(
    population: &mut Population,
    split: &DatasetSplit,
    config: &TrainConfig,
    pop_config: &PopulationTrainConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunOutcome> {
    config.validate()?;
    pop_config.policy.validate(population.n_q(), population.n_a())?;
    if pop_config.period == 0 {
        return Err(Error::config("replacement period must be positive".to_string()));
    }

    let master_seed = config.seed;
    let mut train_rng = rng_from_seed(derive_seed(master_seed, &[rng::streams::TRAIN]));
    let batch = tile_batch(&split.train, config.batch_size);
    let mut baseline = RewardBaseline::new(config.baseline, config.baseline_decay);

    let mut history = RunHistory::default();
    let mut best: Option<(u64, f64, Population)> = None;
    let mut stop_epoch = config.epochs;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let (i_q, i_a) = sample_pair(population.n_q(), population.n_a(), &mut train_rng);
        let metrics = train_epoch(
            &mut population.qbots[i_q],
            &mut population.abots[i_a],
            &batch,
            config,
            &mut baseline,
            &mut train_rng,
            epoch,
        )
        .map_err(|e| match e {
            Error::Numeric(c) => Error::numeric(format!("{c} (epoch {epoch})")),
            other => other,
        })?;
        history.epochs.push(EpochRow {
            epoch,
            mean_reward: metrics.mean_reward,
            train_both: metrics.train_both,
        });
        observer.on_epoch(epoch, &metrics);

        if epoch % config.val_interval == 0 {
            let report = validate(population, &split.validation, config.rounds, &config.reward)?;
            population.val_q.clone_from(&report.per_q);
            population.val_a.clone_from(&report.per_a);
            history.validations.push(ValRow { epoch, mean: report.mean });
            let improved = best.as_ref().map_or(true, |(_, b, _)| report.mean > *b);
            if improved {
                best = Some((epoch, report.mean, population.clone()));
            }
            observer.on_validation(epoch, population, &report);

            let (stop, _) = early_stop(&history, config.patience);
            if stop {
                stop_epoch = epoch;
                stopped_early = true;
                break;
            }
        }

        if epoch % pop_config.period == 0 {
            let event_index = epoch / pop_config.period;
            let replaced = select_replacements(
                &pop_config.policy,
                population,
                epoch,
                pop_config.period,
                &mut train_rng,
            )?;
            if !replaced.is_empty() {
                observer.pre_replacement(epoch, population);
                apply_replacement(population, &replaced, epoch, event_index, master_seed)?;
                history.events.push(EventRow { epoch, replaced: replaced.clone() });
                observer.post_replacement(epoch, population, &replaced);
            }
        }
    }

    // A run without any validation check falls back to the final state.
    let (best_epoch, best_validation, best_pop) = match best {
        Some((e, v, p)) => (e, v, p),
        None => (stop_epoch, f64::NAN, population.clone()),
    };
    Ok(RunOutcome {
        history,
        best: best_pop,
        best_epoch,
        best_validation,
        stop_epoch,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{ArchDims, VocabSetting};
    use crate::autodiff::AdamHyper;
    use crate::world::{make_splits, AttributeSchema, SplitConfig};

    fn small_pair(seed: u64) -> (QBot, ABot) {
        let dims = ArchDims { hidden: 8, embed: 4 };
        let setting = VocabSetting::small_vocab();
        (
            QBot::init(setting, dims, AdamHyper::default(), seed, 0),
            ABot::init(setting, dims, AdamHyper::default(), seed + 7, 0),
        )
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            batch_size: 1, // whole pool once
            epochs: 10,
            patience: 100,
            val_interval: 5,
            ..Default::default()
        }
    }

    #[test]
    fn greedy_rollout_rejected_by_reinforce_loss() {
        let (q, a) = small_pair(1);
        let states = &AttributeSchema::default().states()[..4];
        let mut rollout = rollout_batch(
            &q,
            &a,
            states,
            2,
            ActionSource::Greedy,
            &RewardScheme::default(),
        )
        .unwrap();
        assert!(matches!(reinforce_loss(&mut rollout, 0.0), Err(Error::Usage(_))));
    }

    #[test]
    fn single_episode_loss_is_negative_logprob_sum() {
        let (q, a) = small_pair(2);
        let states = &AttributeSchema::default().states()[..1];
        let mut rng = rng_from_seed(3);
        let mut rollout = rollout_batch(
            &q,
            &a,
            states,
            2,
            ActionSource::Sample(&mut rng),
            &RewardScheme { correct: 1.0, wrong: 1.0 },
        )
        .unwrap();
        let t = &rollout.transcripts[0];
        let sum_lp: f64 = t.q_logprobs.iter().sum::<f64>()
            + t.a_logprobs.iter().sum::<f64>()
            + t.pred_logprobs.iter().sum::<f64>();
        // reward 1, baseline 0 -> loss = -sum(logprobs), a positive number.
        let loss = reinforce_loss(&mut rollout, 0.0).unwrap();
        let v = rollout.tape.value(loss).data()[0];
        assert!((v + sum_lp).abs() < 1e-12);
        assert!(v > 0.0);
    }

    #[test]
    fn zero_advantage_batch_changes_nothing() {
        let (mut q, mut a) = small_pair(3);
        let q_before = q.clone();
        let states = AttributeSchema::default().states();
        let mut rng = rng_from_seed(4);
        // All rewards identical and baseline equal to them: exact zero grads,
        // and fresh Adam moments keep the update exactly zero.
        let config = TrainConfig {
            reward: RewardScheme { correct: 0.5, wrong: 0.5 },
            baseline: BaselineMode::MovingAverage,
            ..quick_config()
        };
        let mut baseline = RewardBaseline::new(config.baseline, config.baseline_decay);
        train_epoch(&mut q, &mut a, &states[..32], &config, &mut baseline, &mut rng, 1).unwrap();
        for (x, y) in q.params().into_iter().zip(q_before.params()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let dims = ArchDims { hidden: 8, embed: 4 };
        let setting = VocabSetting::small_vocab();
        let hyper = AdamHyper::with_learning_rate(0.0);
        let mut q = QBot::init(setting, dims, hyper, 5, 0);
        let mut a = ABot::init(setting, dims, hyper, 6, 0);
        let q_before = q.clone();
        let a_before = a.clone();
        let states = AttributeSchema::default().states();
        let mut rng = rng_from_seed(5);
        let config = TrainConfig { learning_rate: 0.0, ..quick_config() };
        let mut baseline = RewardBaseline::new(config.baseline, config.baseline_decay);
        train_epoch(&mut q, &mut a, &states[..32], &config, &mut baseline, &mut rng, 1).unwrap();
        for (x, y) in q.params().into_iter().zip(q_before.params()) {
            assert_eq!(x, y);
        }
        for (x, y) in a.params().into_iter().zip(a_before.params()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn adam_steps_count_epochs() {
        let (mut q, mut a) = small_pair(8);
        let states = AttributeSchema::default().states();
        let mut rng = rng_from_seed(6);
        let config = quick_config();
        let mut baseline = RewardBaseline::new(config.baseline, config.baseline_decay);
        for _ in 0..5 {
            train_epoch(&mut q, &mut a, &states[..32], &config, &mut baseline, &mut rng, 1).unwrap();
        }
        assert_eq!(q.adam.step_count(), 5);
        assert_eq!(a.adam.step_count(), 5);
    }

    #[test]
    fn single_pair_validation_is_symmetric() {
        let pop = Population::init(
            1,
            1,
            VocabSetting::small_vocab(),
            ArchDims { hidden: 8, embed: 4 },
            AdamHyper::default(),
            17,
        )
        .unwrap();
        let states = &AttributeSchema::default().states()[..48];
        let report = validate(&pop, states, 2, &RewardScheme::default()).unwrap();
        assert_eq!(report.per_q[0], report.per_a[0]);
        assert_eq!(report.per_q[0], report.mean);
    }

    #[test]
    fn population_validation_averages_all_pairs() {
        let pop = Population::init(
            2,
            3,
            VocabSetting::small_vocab(),
            ArchDims { hidden: 8, embed: 4 },
            AdamHyper::default(),
            18,
        )
        .unwrap();
        let states = &AttributeSchema::default().states()[..24];
        let report = validate(&pop, states, 2, &RewardScheme::default()).unwrap();
        let from_q: f64 = report.per_q.iter().sum::<f64>() / 2.0;
        let from_a: f64 = report.per_a.iter().sum::<f64>() / 3.0;
        assert!((from_q - report.mean).abs() < 1e-12);
        assert!((from_a - report.mean).abs() < 1e-12);
    }

    #[test]
    fn fresh_population_validates_near_chance() {
        let mut mean = 0.0;
        for seed in 0..4 {
            let pop = Population::init(
                1,
                1,
                VocabSetting::small_vocab(),
                ArchDims { hidden: 8, embed: 4 },
                AdamHyper::default(),
                100 + seed,
            )
            .unwrap();
            let states = AttributeSchema::default().states();
            mean += validate(&pop, &states, 2, &RewardScheme::default()).unwrap().mean / 4.0;
        }
        assert!((mean - 1.0 / 16.0).abs() < 0.06, "chance level {mean}");
    }

    #[test]
    fn early_stop_rules() {
        // Strictly improving: never stops.
        let mut h = RunHistory::default();
        for i in 1..=50 {
            h.validations.push(ValRow { epoch: i * 100, mean: i as f64 / 100.0 });
        }
        assert_eq!(early_stop(&h, 1000), (false, 5000));

        // Flat history spanning the patience window: stops, best = first.
        let mut h = RunHistory::default();
        for i in 1..=11 {
            h.validations.push(ValRow { epoch: i, mean: 0.5 });
        }
        assert_eq!(early_stop(&h, 10), (true, 1));
    }

    #[test]
    fn training_loop_is_reproducible() {
        let schema = AttributeSchema::default();
        let split = make_splits(&schema, &SplitConfig::default()).unwrap();
        let config = TrainConfig { epochs: 30, val_interval: 10, ..quick_config() };
        let pop_config = PopulationTrainConfig {
            policy: ReplacementPolicy::SingleRandom,
            period: 15,
        };
        let mut histories = Vec::new();
        for _ in 0..2 {
            let mut pop = Population::init(
                1,
                1,
                VocabSetting::small_vocab(),
                ArchDims { hidden: 8, embed: 4 },
                AdamHyper::default(),
                900,
            )
            .unwrap();
            let outcome =
                run_training(&mut pop, &split, &config, &pop_config, &mut NullObserver).unwrap();
            histories.push(outcome.history);
        }
        assert_eq!(
            serde_json::to_string(&histories[0]).unwrap(),
            serde_json::to_string(&histories[1]).unwrap()
        );
    }

    #[test]
    fn replacement_events_fire_on_schedule() {
        let schema = AttributeSchema::default();
        let split = make_splits(&schema, &SplitConfig::default()).unwrap();
        let config = TrainConfig { epochs: 40, val_interval: 10, ..quick_config() };
        let pop_config = PopulationTrainConfig {
            policy: ReplacementPolicy::SingleRandom,
            period: 10,
        };
        let mut pop = Population::init(
            1,
            1,
            VocabSetting::small_vocab(),
            ArchDims { hidden: 8, embed: 4 },
            AdamHyper::default(),
            901,
        )
        .unwrap();
        let outcome =
            run_training(&mut pop, &split, &config, &pop_config, &mut NullObserver).unwrap();
        let event_epochs: Vec<u64> = outcome.history.events.iter().map(|e| e.epoch).collect();
        assert_eq!(event_epochs, vec![10, 20, 30, 40]);
        for e in &outcome.history.events {
            assert_eq!(e.replaced.len(), 1);
        }
    }
}
