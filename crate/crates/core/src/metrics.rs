//! Language similarity between answerers. For every (questioner k, answerer
//! i, test state, round t) context we estimate the answerer's empirical token
//! distribution from sampled dialogues, then compare answerers pairwise by KL
//! divergence averaged over contexts. Lower means more similar languages.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{ABot, QBot};
use crate::dialog::{rollout_batch, ActionSource, RewardScheme};
use crate::error::{Error, Result};
use crate::world::GameState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityConfig {
    /// Sampled dialogues per (pair, state) context.
    pub draws: usize,
    /// Additive smoothing per token before normalization; keeps KL finite at
    /// small draw counts.
    pub smoothing: f64,
    /// Dialog rounds (contexts average over all of them).
    pub rounds: usize,
    pub seed: u64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig { draws: 10, smoothing: 0.1, rounds: 2, seed: 0 }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws < 1 {
            return Err(Error::config("similarity draws must be at least 1".to_string()));
        }
        if self.smoothing < 0.0 {
            return Err(Error::config("smoothing must be non-negative".to_string()));
        }
        if self.rounds < 1 {
            return Err(Error::config("rounds must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// Smoothed empirical answerer-token distributions, indexed by
/// (questioner, answerer, state, round).
pub struct TokenDistributionTable {
    n_q: usize,
    n_a: usize,
    n_states: usize,
    rounds: usize,
    vocab: usize,
    probs: Vec<f64>,
    pub draws: usize,
    pub smoothing: f64,
}

impl TokenDistributionTable {
    fn offset(&self, k: usize, i: usize, s: usize, t: usize) -> usize {
        (((k * self.n_a + i) * self.n_states + s) * self.rounds + t) * self.vocab
    }

    pub fn distribution(&self, k: usize, i: usize, s: usize, t: usize) -> &[f64] {
        let o = self.offset(k, i, s, t);
        &self.probs[o..o + self.vocab]
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }
}

/// Estimates the table by running `draws` sampled dialogues for every
/// (questioner, answerer) pair in every test state. Pairs are visited in
/// (k, i) order on one seeded stream, so the table is reproducible.
pub fn estimate_distributions(
    qbots: &[QBot],
    abots: &[ABot],
    states: &[GameState],
    config: &SimilarityConfig,
) -> Result<TokenDistributionTable> {
    config.validate()?;
    if qbots.is_empty() || abots.is_empty() || states.is_empty() {
        return Err(Error::usage("estimate_distributions: empty population or state list"));
    }
    let vocab = abots[0].setting.v_a;
    let (n_q, n_a) = (qbots.len(), abots.len());
    let (n_states, rounds) = (states.len(), config.rounds);
    let mut counts = vec![0.0f64; n_q * n_a * n_states * rounds * vocab];
    let mut rng: ChaCha8Rng = crate::rng::rng_from_seed(config.seed);

    // One batched rollout per (k, i) pair: the state list tiled `draws`
    // times, draw-major.
    let mut batch = Vec::with_capacity(n_states * config.draws);
    for _ in 0..config.draws {
        batch.extend_from_slice(states);
    }
    let scheme = RewardScheme::default();
    let table_stride = n_states * rounds * vocab;
    for (k, qbot) in qbots.iter().enumerate() {
        for (i, abot) in abots.iter().enumerate() {
            if abot.setting.v_a != vocab {
                return Err(Error::config(
                    "estimate_distributions: answerer vocabularies differ".to_string(),
                ));
            }
            let rollout = rollout_batch(
                qbot,
                abot,
                &batch,
                rounds,
                ActionSource::Sample(&mut rng),
                &scheme,
            )?;
            let base = (k * n_a + i) * table_stride;
            for (b, transcript) in rollout.transcripts.iter().enumerate() {
                let s = b % n_states;
                for (t, &token) in transcript.a_tokens.iter().enumerate() {
                    counts[base + (s * rounds + t) * vocab + token] += 1.0;
                }
            }
        }
    }

    let denom = config.draws as f64 + config.smoothing * vocab as f64;
    for chunk in counts.chunks_exact_mut(vocab) {
        for c in chunk.iter_mut() {
            *c = (*c + config.smoothing) / denom;
        }
    }
    Ok(TokenDistributionTable {
        n_q,
        n_a,
        n_states,
        rounds,
        vocab,
        probs: counts,
        draws: config.draws,
        smoothing: config.smoothing,
    })
}

/// KL divergence between two categorical distributions on the same support.
/// Zero-probability entries of `p` contribute nothing; a zero in `q` under
/// positive `p` mass means the smoothing contract was violated.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::usage(format!("kl: support sizes differ ({} vs {})", p.len(), q.len())));
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::usage(
                    "kl: q has zero mass where p is positive (smoothing contract violated)"
                        .to_string(),
                ));
            }
            total += pi * (pi / qi).ln();
        }
    }
    Ok(total)
}

/// Mean KL from answerer `i` to answerer `j` over every (state, questioner,
/// round) context. Not symmetric.
pub fn pairwise_distance(table: &TokenDistributionTable, i: usize, j: usize) -> Result<f64> {
    if i >= table.n_a || j >= table.n_a {
        return Err(Error::usage(format!("pairwise_distance: answerer index out of range")));
    }
    let mut total = 0.0;
    let mut contexts = 0usize;
    for k in 0..table.n_q {
        for s in 0..table.n_states {
            for t in 0..table.rounds {
                total += kl(table.distribution(k, i, s, t), table.distribution(k, j, s, t))?;
                contexts += 1;
            }
        }
    }
    Ok(total / contexts as f64)
}

/// Population-level similarity: mean over ordered answerer pairs i != j.
/// Symmetric because both directions of every pair enter the average.
pub fn population_distance(table: &TokenDistributionTable) -> Result<f64> {
    if table.n_a < 2 {
        return Err(Error::usage("population_distance: needs at least 2 answerers"));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..table.n_a {
        for j in 0..table.n_a {
            if i != j {
                total += pairwise_distance(table, i, j)?;
                pairs += 1;
            }
        }
    }
    Ok(total / pairs as f64)
}

/// Full report: the D_ij matrix plus the scalar D.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub matrix: Vec<Vec<f64>>,
    pub d: f64,
    pub draws: usize,
    pub smoothing: f64,
    pub n_states: usize,
}

pub fn similarity_report(table: &TokenDistributionTable) -> Result<SimilarityReport> {
    let n = table.n_a;
    let mut matrix = vec![vec![0.0; n]; n];
    for (i, row) in matrix.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if i != j {
                *cell = pairwise_distance(table, i, j)?;
            }
        }
    }
    Ok(SimilarityReport {
        matrix,
        d: population_distance(table)?,
        draws: table.draws,
        smoothing: table.smoothing,
        n_states: table.n_states,
    })
}

/// Phase of a checkpoint relative to replacement events; pre/post pairs at
/// event epochs expose the similarity drop a fresh agent causes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointPhase {
    Periodic,
    PreReplacement,
    PostReplacement,
}

impl std::fmt::Display for CheckpointPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckpointPhase::Periodic => write!(f, "periodic"),
            CheckpointPhase::PreReplacement => write!(f, "pre"),
            CheckpointPhase::PostReplacement => write!(f, "post"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPoint {
    pub epoch: u64,
    pub phase: CheckpointPhase,
    pub d: f64,
}

/// Evaluates D at each checkpointed population, in epoch order, annotating
/// phases. Each point gets its own derived seed so curves do not depend on
/// evaluation order.
pub fn similarity_curve(
    checkpoints: &[(u64, CheckpointPhase, Vec<QBot>, Vec<ABot>)],
    states: &[GameState],
    config: &SimilarityConfig,
) -> Result<Vec<SimilarityPoint>> {
    if checkpoints.len() < 2 {
        return Err(Error::usage("similarity_curve: needs at least 2 checkpoints"));
    }
    let mut points = Vec::with_capacity(checkpoints.len());
    for (epoch, phase, qbots, abots) in checkpoints {
        let point_config = SimilarityConfig {
            seed: crate::rng::derive_seed(
                config.seed,
                &[crate::rng::streams::SIMILARITY, *epoch, *phase as u64],
            ),
            ..*config
        };
        let table = estimate_distributions(qbots, abots, states, &point_config)?;
        points.push(SimilarityPoint { epoch: *epoch, phase: *phase, d: population_distance(&table)? });
    }
    Ok(points)
}
