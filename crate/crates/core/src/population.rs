//! Rosters of questioners and answerers, interaction-pair sampling, and the
//! replacement policies that periodically re-initialize agents to force each
//! generation to learn the previous one's language.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{ABot, ArchDims, QBot, Role, VocabSetting};
use crate::autodiff::AdamHyper;
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed, uniform_f64, uniform_index};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentId {
    pub role: Role,
    pub index: usize,
}

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.role, self.index)
    }
}

/// Which agents to re-initialize every `E` epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReplacementPolicy {
    /// Never replace anyone.
    NoReplacement,
    /// Single-pair populations: replace Q or A on a fair coin.
    SingleRandom,
    /// Single-pair populations: alternate roles across events, `first` going
    /// first.
    SingleAlternate { first: Role },
    /// Replace one uniformly random Q and one uniformly random A.
    MultiUniformRandom,
    /// With probability epsilon act like `MultiUniformRandom`; otherwise
    /// replace the lowest-validation-accuracy agent of each role.
    MultiEpsilonGreedy { epsilon: f64 },
    /// Replace a uniformly chosen agent among the oldest of each role.
    MultiOldest,
    /// Replace every agent.
    ReplaceAll,
}

impl ReplacementPolicy {
    pub fn single_alternate() -> Self {
        ReplacementPolicy::SingleAlternate { first: Role::Answerer }
    }

    pub fn multi_epsilon_greedy() -> Self {
        ReplacementPolicy::MultiEpsilonGreedy { epsilon: 0.2 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ReplacementPolicy::NoReplacement => "no_replacement",
            ReplacementPolicy::SingleRandom => "single_random",
            ReplacementPolicy::SingleAlternate { .. } => "single_alternate",
            ReplacementPolicy::MultiUniformRandom => "multi_uniform_random",
            ReplacementPolicy::MultiEpsilonGreedy { .. } => "multi_epsilon_greedy",
            ReplacementPolicy::MultiOldest => "multi_oldest",
            ReplacementPolicy::ReplaceAll => "replace_all",
        }
    }

    fn is_single(&self) -> bool {
        matches!(self, ReplacementPolicy::SingleRandom | ReplacementPolicy::SingleAlternate { .. })
    }

    pub fn validate(&self, n_q: usize, n_a: usize) -> Result<()> {
        if self.is_single() && (n_q != 1 || n_a != 1) {
            return Err(Error::config(format!(
                "{} requires a single Q/A pair, got {n_q} Q-bots and {n_a} A-bots",
                self.name()
            )));
        }
        if let ReplacementPolicy::MultiEpsilonGreedy { epsilon } = self {
            if !(0.0..=1.0).contains(epsilon) {
                return Err(Error::config(format!("epsilon {epsilon} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// The two rosters plus per-agent bookkeeping the policies read.
#[derive(Clone, Debug)]
pub struct Population {
    pub qbots: Vec<QBot>,
    pub abots: Vec<ABot>,
    /// Latest validation accuracy per agent, refreshed by `validate`.
    pub val_q: Vec<f64>,
    pub val_a: Vec<f64>,
}

impl Population {
    /// Fresh rosters with per-agent seeds derived from the master seed.
    pub fn init(
        n_q: usize,
        n_a: usize,
        setting: VocabSetting,
        dims: ArchDims,
        hyper: AdamHyper,
        master_seed: u64,
    ) -> Result<Self> {
        if n_q < 1 || n_a < 1 {
            return Err(Error::config("population sizes must be at least 1".to_string()));
        }
        setting.validate()?;
        dims.validate()?;
        let qbots = (0..n_q)
            .map(|i| {
                let seed = derive_seed(master_seed, &[rng::streams::AGENT_INIT, 0, i as u64]);
                QBot::init(setting, dims, hyper, seed, 0)
            })
            .collect();
        let abots = (0..n_a)
            .map(|i| {
                let seed = derive_seed(master_seed, &[rng::streams::AGENT_INIT, 1, i as u64]);
                ABot::init(setting, dims, hyper, seed, 0)
            })
            .collect();
        Ok(Population { qbots, abots, val_q: vec![0.0; n_q], val_a: vec![0.0; n_a] })
    }

    pub fn n_q(&self) -> usize {
        self.qbots.len()
    }

    pub fn n_a(&self) -> usize {
        self.abots.len()
    }

    pub fn setting(&self) -> VocabSetting {
        self.qbots[0].setting
    }

    pub fn dims(&self) -> ArchDims {
        self.qbots[0].dims
    }

    /// Age in epochs of every agent of a role at the given epoch.
    pub fn ages(&self, role: Role, epoch: u64) -> Vec<u64> {
        match role {
            Role::Questioner => self.qbots.iter().map(|b| epoch - b.birth_epoch).collect(),
            Role::Answerer => self.abots.iter().map(|b| epoch - b.birth_epoch).collect(),
        }
    }
}

/// Uniform, independent draws of an interaction pair; resampled every epoch.
/// The answerer draws first, matching the replacement policies' draw order.
pub fn sample_pair(n_q: usize, n_a: usize, rng: &mut ChaCha8Rng) -> (usize, usize) {
    let i_a = uniform_index(rng, n_a);
    let i_q = uniform_index(rng, n_q);
    (i_q, i_a)
}

/// Uniform pick among the indices minimizing `key`.
fn argmin_uniform(keys: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let min = keys.iter().cloned().fold(f64::INFINITY, f64::min);
    let candidates: Vec<usize> =
        keys.iter().enumerate().filter(|(_, &k)| k == min).map(|(i, _)| i).collect();
    candidates[uniform_index(rng, candidates.len())]
}

/// Applies the policy at a replacement event (`epoch` is a multiple of the
/// period). Returns the agents to re-initialize; answerer ids precede
/// questioner ids, matching the draw order.
pub fn select_replacements(
    policy: &ReplacementPolicy,
    population: &Population,
    epoch: u64,
    period: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<AgentId>> {
    policy.validate(population.n_q(), population.n_a())?;
    let a_id = |index| AgentId { role: Role::Answerer, index };
    let q_id = |index| AgentId { role: Role::Questioner, index };
    let ids = match policy {
        ReplacementPolicy::NoReplacement => vec![],
        ReplacementPolicy::SingleRandom => {
            if uniform_index(rng, 2) == 0 {
                vec![a_id(0)]
            } else {
                vec![q_id(0)]
            }
        }
        ReplacementPolicy::SingleAlternate { first } => {
            let event = epoch / period; // 1-based at the first event
            let role = if event % 2 == 1 { *first } else { other(*first) };
            vec![AgentId { role, index: 0 }]
        }
        ReplacementPolicy::MultiUniformRandom => {
            let ia = uniform_index(rng, population.n_a());
            let iq = uniform_index(rng, population.n_q());
            vec![a_id(ia), q_id(iq)]
        }
        ReplacementPolicy::MultiEpsilonGreedy { epsilon } => {
            if uniform_f64(rng) < *epsilon {
                let ia = uniform_index(rng, population.n_a());
                let iq = uniform_index(rng, population.n_q());
                vec![a_id(ia), q_id(iq)]
            } else {
                let ia = argmin_uniform(&population.val_a, rng);
                let iq = argmin_uniform(&population.val_q, rng);
                vec![a_id(ia), q_id(iq)]
            }
        }
        ReplacementPolicy::MultiOldest => {
            // Oldest agent = smallest birth epoch.
            let births_a: Vec<f64> =
                population.abots.iter().map(|b| b.birth_epoch as f64).collect();
            let births_q: Vec<f64> =
                population.qbots.iter().map(|b| b.birth_epoch as f64).collect();
            let ia = argmin_uniform(&births_a, rng);
            let iq = argmin_uniform(&births_q, rng);
            vec![a_id(ia), q_id(iq)]
        }
        ReplacementPolicy::ReplaceAll => {
            let mut ids: Vec<AgentId> = (0..population.n_a()).map(a_id).collect();
            ids.extend((0..population.n_q()).map(q_id));
            ids
        }
    };
    Ok(ids)
}

fn other(role: Role) -> Role {
    match role {
        Role::Questioner => Role::Answerer,
        Role::Answerer => Role::Questioner,
    }
}

/// Re-initializes the listed agents with fresh parameters and optimizer
/// state; everyone else's parameters stay bit-identical. Each agent's seed
/// derives from (master seed, event index, role, index) so single events
/// replay independently.
pub fn apply_replacement(
    population: &mut Population,
    ids: &[AgentId],
    epoch: u64,
    event_index: u64,
    master_seed: u64,
) -> Result<()> {
    let setting = population.setting();
    let dims = population.dims();
    for id in ids {
        match id.role {
            Role::Questioner => {
                if id.index >= population.n_q() {
                    return Err(Error::usage(format!("no such agent {id}")));
                }
                let hyper = population.qbots[id.index].adam.hyper();
                let seed = derive_seed(
                    master_seed,
                    &[rng::streams::REPLACEMENT, event_index, 0, id.index as u64],
                );
                population.qbots[id.index] = QBot::init(setting, dims, hyper, seed, epoch);
            }
            Role::Answerer => {
                if id.index >= population.n_a() {
                    return Err(Error::usage(format!("no such agent {id}")));
                }
                let hyper = population.abots[id.index].adam.hyper();
                let seed = derive_seed(
                    master_seed,
                    &[rng::streams::REPLACEMENT, event_index, 1, id.index as u64],
                );
                population.abots[id.index] = ABot::init(setting, dims, hyper, seed, epoch);
            }
        }
    }
    Ok(())
}

/// Event epochs within the budget: E, 2E, ... Empty for `NoReplacement`.
pub fn replacement_schedule(
    policy: &ReplacementPolicy,
    period: u64,
    budget: u64,
) -> Vec<u64> {
    if matches!(policy, ReplacementPolicy::NoReplacement) || period == 0 {
        return vec![];
    }
    (1..=budget / period).map(|k| k * period).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn test_population(n_q: usize, n_a: usize) -> Population {
        Population::init(
            n_q,
            n_a,
            VocabSetting::small_vocab(),
            ArchDims { hidden: 8, embed: 4 },
            AdamHyper::default(),
            99,
        )
        .unwrap()
    }

    #[test]
    fn single_pair_always_samples_zero() {
        let mut rng = rng_from_seed(0);
        for _ in 0..50 {
            assert_eq!(sample_pair(1, 1, &mut rng), (0, 0));
        }
    }

    #[test]
    fn pair_sampling_is_uniform() {
        let mut rng = rng_from_seed(1);
        let n = 5;
        let draws = 100_000;
        let mut counts_q = vec![0usize; n];
        let mut counts_a = vec![0usize; n];
        for _ in 0..draws {
            let (q, a) = sample_pair(n, n, &mut rng);
            counts_q[q] += 1;
            counts_a[a] += 1;
        }
        for c in counts_q.iter().chain(&counts_a) {
            let f = *c as f64 / draws as f64;
            assert!((0.19..=0.21).contains(&f), "frequency {f}");
        }
    }

    #[test]
    fn single_policies_reject_multi_rosters() {
        let pop = test_population(2, 2);
        let mut rng = rng_from_seed(2);
        for policy in [ReplacementPolicy::SingleRandom, ReplacementPolicy::single_alternate()] {
            assert!(matches!(
                select_replacements(&policy, &pop, 5000, 5000, &mut rng),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn single_random_flips_a_fair_coin() {
        let pop = test_population(1, 1);
        let mut rng = rng_from_seed(3);
        let mut a_count = 0;
        let trials = 10_000;
        for _ in 0..trials {
            let ids =
                select_replacements(&ReplacementPolicy::SingleRandom, &pop, 5000, 5000, &mut rng)
                    .unwrap();
            assert_eq!(ids.len(), 1);
            if ids[0].role == Role::Answerer {
                a_count += 1;
            }
        }
        let f = a_count as f64 / trials as f64;
        assert!((0.48..=0.52).contains(&f), "answerer fraction {f}");
    }

    #[test]
    fn alternate_strictly_alternates_starting_with_answerer() {
        let pop = test_population(1, 1);
        let mut rng = rng_from_seed(4);
        let policy = ReplacementPolicy::single_alternate();
        let roles: Vec<Role> = (1..=6)
            .map(|k| {
                select_replacements(&policy, &pop, k * 5000, 5000, &mut rng).unwrap()[0].role
            })
            .collect();
        assert_eq!(
            roles,
            vec![
                Role::Answerer,
                Role::Questioner,
                Role::Answerer,
                Role::Questioner,
                Role::Answerer,
                Role::Questioner
            ]
        );
    }

    #[test]
    fn epsilon_zero_picks_argmin_accuracy() {
        let mut pop = test_population(5, 5);
        pop.val_q = vec![0.5, 0.2, 0.9, 0.4, 0.3];
        pop.val_a = vec![0.6, 0.7, 0.1, 0.8, 0.9];
        let mut rng = rng_from_seed(5);
        let policy = ReplacementPolicy::MultiEpsilonGreedy { epsilon: 0.0 };
        for _ in 0..20 {
            let ids = select_replacements(&policy, &pop, 25_000, 25_000, &mut rng).unwrap();
            assert_eq!(ids, vec![
                AgentId { role: Role::Answerer, index: 2 },
                AgentId { role: Role::Questioner, index: 1 },
            ]);
        }
    }

    #[test]
    fn epsilon_one_matches_uniform_random() {
        // At epsilon = 1 the greedy branch is unreachable; every index should
        // be hit roughly uniformly.
        let pop = test_population(5, 5);
        let mut rng = rng_from_seed(6);
        let policy = ReplacementPolicy::MultiEpsilonGreedy { epsilon: 1.0 };
        let mut counts = vec![0usize; 5];
        let trials = 50_000;
        for _ in 0..trials {
            let ids = select_replacements(&policy, &pop, 25_000, 25_000, &mut rng).unwrap();
            counts[ids[0].index] += 1;
        }
        for c in &counts {
            let f = *c as f64 / trials as f64;
            assert!((0.18..=0.22).contains(&f), "frequency {f}");
        }
    }

    #[test]
    fn oldest_picks_unique_max_age_without_rng_dependence() {
        let mut pop = test_population(3, 3);
        // Unique oldest: index 1 for A (born earliest), index 2 for Q.
        pop.abots[0].birth_epoch = 10_000;
        pop.abots[1].birth_epoch = 0;
        pop.abots[2].birth_epoch = 20_000;
        pop.qbots[0].birth_epoch = 5_000;
        pop.qbots[1].birth_epoch = 15_000;
        pop.qbots[2].birth_epoch = 1_000;
        let policy = ReplacementPolicy::MultiOldest;
        for seed in 0..10 {
            let mut rng = rng_from_seed(seed);
            let ids = select_replacements(&policy, &pop, 25_000, 25_000, &mut rng).unwrap();
            assert_eq!(ids, vec![
                AgentId { role: Role::Answerer, index: 1 },
                AgentId { role: Role::Questioner, index: 2 },
            ]);
        }
    }

    #[test]
    fn replace_all_returns_every_agent() {
        let pop = test_population(5, 5);
        let mut rng = rng_from_seed(7);
        let ids = select_replacements(&ReplacementPolicy::ReplaceAll, &pop, 5000, 5000, &mut rng)
            .unwrap();
        assert_eq!(ids.len(), 10);
    }

    #[test]
    fn empty_replacement_leaves_state_unchanged() {
        let mut pop = test_population(2, 2);
        let before = pop.clone();
        apply_replacement(&mut pop, &[], 5000, 1, 99).unwrap();
        for (a, b) in pop.qbots.iter().zip(&before.qbots) {
            for (x, y) in a.params().into_iter().zip(b.params()) {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn replacement_resets_target_and_preserves_others_bitwise() {
        let mut pop = test_population(3, 3);
        let before = pop.clone();
        let target = AgentId { role: Role::Answerer, index: 1 };
        apply_replacement(&mut pop, &[target], 5000, 1, 99).unwrap();
        assert_eq!(pop.abots[1].birth_epoch, 5000);
        assert_eq!(pop.abots[1].adam.step_count(), 0);
        assert_ne!(pop.abots[1].listen_embed, before.abots[1].listen_embed);
        for i in [0, 2] {
            for (x, y) in pop.abots[i].params().into_iter().zip(before.abots[i].params()) {
                let same_bits = x
                    .data()
                    .iter()
                    .zip(y.data())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                assert!(same_bits, "untouched agent drifted");
            }
        }
        // Ages: replaced agent is 0 at the event epoch, others aged.
        assert_eq!(pop.ages(Role::Answerer, 5000), vec![5000, 0, 5000]);
    }

    #[test]
    fn replacement_events_replay_identically() {
        let mut pop1 = test_population(2, 2);
        let mut pop2 = test_population(2, 2);
        let ids = vec![AgentId { role: Role::Questioner, index: 0 }];
        apply_replacement(&mut pop1, &ids, 10_000, 2, 1234).unwrap();
        apply_replacement(&mut pop2, &ids, 10_000, 2, 1234).unwrap();
        assert_eq!(pop1.qbots[0].listen_embed, pop2.qbots[0].listen_embed);
    }

    #[test]
    fn schedule_covers_budget() {
        let policy = ReplacementPolicy::SingleRandom;
        assert_eq!(
            replacement_schedule(&policy, 5000, 20_000),
            vec![5000, 10_000, 15_000, 20_000]
        );
        assert!(replacement_schedule(&ReplacementPolicy::NoReplacement, 5000, 20_000).is_empty());
    }

    #[test]
    fn multi_event_replaces_one_of_each_role() {
        let pop = test_population(5, 5);
        let mut rng = rng_from_seed(8);
        for policy in [
            ReplacementPolicy::MultiUniformRandom,
            ReplacementPolicy::multi_epsilon_greedy(),
            ReplacementPolicy::MultiOldest,
        ] {
            let ids = select_replacements(&policy, &pop, 25_000, 25_000, &mut rng).unwrap();
            assert_eq!(ids.len(), 2);
            assert_eq!(ids[0].role, Role::Answerer);
            assert_eq!(ids[1].role, Role::Questioner);
        }
    }
}
