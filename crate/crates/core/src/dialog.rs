//! Episode rollouts: T rounds of alternating single-token exchange between a
//! questioner and an answerer over a batch of game states, followed by the
//! questioner's two-attribute prediction and reward assignment.
//!
//! A whole batch rolls forward on one tape with matrix ops. Sampling order is
//! fixed: within each action step, episodes draw in batch order.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    abot_round, qbot_listen, qbot_predict, qbot_round, ABot, AgentVars, BotState, QBot,
};
use crate::autodiff::{argmax, sample_categorical, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::world::{GameState, OBJECT_ENCODING_DIM, TASK_ENCODING_DIM};

/// Rounds per episode.
pub const DEFAULT_ROUNDS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Draw every action from its policy distribution (training).
    Sample,
    /// Argmax decoding, ties toward the lowest index (evaluation).
    Greedy,
}

/// Rewards for the "both attributes correct" criterion. A single wrong
/// attribute earns the full penalty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardScheme {
    pub correct: f64,
    pub wrong: f64,
}

impl Default for RewardScheme {
    fn default() -> Self {
        RewardScheme { correct: 1.0, wrong: -10.0 }
    }
}

impl RewardScheme {
    pub fn validate(&self) -> Result<()> {
        if self.correct <= self.wrong {
            return Err(Error::config(format!(
                "reward for correct ({}) must exceed reward for wrong ({})",
                self.correct, self.wrong
            )));
        }
        Ok(())
    }
}

/// One finished episode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Transcript {
    pub state: GameState,
    pub q_tokens: Vec<usize>,
    pub a_tokens: Vec<usize>,
    pub q_logprobs: Vec<f64>,
    pub a_logprobs: Vec<f64>,
    pub prediction: [usize; 2],
    pub pred_logprobs: [f64; 2],
    pub reward: f64,
}

impl Transcript {
    pub fn both_correct(&self) -> bool {
        let (u1, u2) = self.state.ground_truth();
        self.prediction == [u1, u2]
    }

    pub fn one_correct(&self) -> bool {
        let (u1, u2) = self.state.ground_truth();
        self.prediction[0] == u1 || self.prediction[1] == u2
    }
}

/// Where actions come from during a rollout.
pub enum ActionSource<'a> {
    Sample(&'a mut ChaCha8Rng),
    Greedy,
    /// Re-walk fixed transcripts, recomputing log-probabilities under the
    /// current parameters. Used by the finite-difference gradient oracle.
    Replay(&'a [Transcript]),
}

impl ActionSource<'_> {
    fn mode(&self) -> DecodeMode {
        match self {
            ActionSource::Sample(_) => DecodeMode::Sample,
            ActionSource::Greedy => DecodeMode::Greedy,
            ActionSource::Replay(_) => DecodeMode::Sample,
        }
    }
}

/// A rolled-out batch, still attached to its tape.
pub struct BatchRollout {
    pub tape: Tape,
    pub transcripts: Vec<Transcript>,
    /// Per-episode sum of action log-probabilities; `None` for greedy
    /// rollouts, which sample nothing.
    pub episode_logprob: Option<Var>,
    /// Per-episode sums of policy entropies over the questioner's and the
    /// answerer's action steps respectively.
    pub episode_entropy_q: Option<Var>,
    pub episode_entropy_a: Option<Var>,
    pub q_vars: AgentVars,
    pub a_vars: AgentVars,
    pub mode: DecodeMode,
}

/// Selects one action per row from row-wise log-probabilities.
fn select_actions(
    tape: &Tape,
    logp: Var,
    source: &mut ActionSource,
    fixed: impl Fn(&Transcript) -> usize,
) -> Vec<usize> {
    let t = tape.value(logp);
    let cols = t.cols();
    match source {
        ActionSource::Sample(rng) => t
            .data()
            .chunks_exact(cols)
            .map(|row| {
                let probs: Vec<f64> = row.iter().map(|&lp| lp.exp()).collect();
                sample_categorical(&probs, *rng).0
            })
            .collect(),
        ActionSource::Greedy => t.data().chunks_exact(cols).map(argmax).collect(),
        ActionSource::Replay(transcripts) => transcripts.iter().map(fixed).collect(),
    }
}

fn picked_logprobs(tape: &Tape, logp: Var, actions: &[usize]) -> Vec<f64> {
    let t = tape.value(logp);
    let cols = t.cols();
    t.data()
        .chunks_exact(cols)
        .zip(actions)
        .map(|(row, &a)| row[a])
        .collect()
}

/// Rolls out `rounds` rounds of dialog plus prediction for every state in the
/// batch.
pub fn rollout_batch(
    qbot: &QBot,
    abot: &ABot,
    states: &[GameState],
    rounds: usize,
    mut source: ActionSource,
    scheme: &RewardScheme,
) -> Result<BatchRollout> {
    if states.is_empty() {
        return Err(Error::usage("rollout_batch: empty batch"));
    }
    if rounds < 1 {
        return Err(Error::config("rollout_batch: rounds must be at least 1".to_string()));
    }
    if let ActionSource::Replay(ts) = &source {
        if ts.len() != states.len() {
            return Err(Error::usage("rollout_batch: replay transcript count != batch size"));
        }
    }
    let batch = states.len();
    let mode = source.mode();

    let mut tape = Tape::new();
    let q_vars = AgentVars::for_qbot(&mut tape, qbot);
    let a_vars = AgentVars::for_abot(&mut tape, abot);

    let mut task_data = Vec::with_capacity(batch * TASK_ENCODING_DIM);
    let mut obj_data = Vec::with_capacity(batch * OBJECT_ENCODING_DIM);
    for s in states {
        task_data.extend_from_slice(&s.task.encode());
        obj_data.extend_from_slice(&s.object.encode());
    }
    let task_enc = tape.leaf(Tensor::from_vec(&[batch, TASK_ENCODING_DIM], task_data)?);
    let obj_enc = tape.leaf(Tensor::from_vec(&[batch, OBJECT_ENCODING_DIM], obj_data)?);

    let mut q_state = BotState::zeros(&mut tape, batch, qbot.dims.hidden);
    let mut a_state = BotState::zeros(&mut tape, batch, abot.dims.hidden);

    // Row 0 of the questioner's listening table is the start-of-dialog null
    // token; answerer token a maps to a + 1 afterwards.
    let mut q_listen: Vec<usize> = vec![0; batch];

    let mut q_tokens: Vec<Vec<usize>> = Vec::with_capacity(rounds);
    let mut a_tokens: Vec<Vec<usize>> = Vec::with_capacity(rounds);
    let mut q_lps: Vec<Vec<f64>> = Vec::with_capacity(rounds);
    let mut a_lps: Vec<Vec<f64>> = Vec::with_capacity(rounds);
    let mut logprob_vars: Vec<Var> = Vec::new();
    let mut entropy_q_vars: Vec<Var> = Vec::new();
    let mut entropy_a_vars: Vec<Var> = Vec::new();

    for round in 1..=rounds {
        let (q_logp, q_next) =
            qbot_round(&mut tape, qbot, &q_vars, &q_listen, task_enc, q_state, round)?;
        q_state = q_next;
        let q_act = select_actions(&tape, q_logp, &mut source, |t| t.q_tokens[round - 1]);
        q_lps.push(picked_logprobs(&tape, q_logp, &q_act));
        if mode == DecodeMode::Sample {
            logprob_vars.push(tape.pick_per_row(q_logp, &q_act)?);
            entropy_q_vars.push(tape.entropy_rows(q_logp)?);
        }

        let a_in = if abot.setting.memoryless_a {
            BotState::zeros(&mut tape, batch, abot.dims.hidden)
        } else {
            a_state
        };
        let (a_logp, a_next) =
            abot_round(&mut tape, abot, &a_vars, &q_act, obj_enc, a_in, round)?;
        a_state = a_next;
        let a_act = select_actions(&tape, a_logp, &mut source, |t| t.a_tokens[round - 1]);
        a_lps.push(picked_logprobs(&tape, a_logp, &a_act));
        if mode == DecodeMode::Sample {
            logprob_vars.push(tape.pick_per_row(a_logp, &a_act)?);
            entropy_a_vars.push(tape.entropy_rows(a_logp)?);
        }

        q_listen = a_act.iter().map(|&a| a + 1).collect();
        q_tokens.push(q_act);
        a_tokens.push(a_act);
    }

    // The final answer must reach the questioner's memory before prediction.
    q_state =
        qbot_listen(&mut tape, qbot, &q_vars, &q_listen, task_enc, q_state, rounds + 1)?;

    let pred_logp = qbot_predict(&mut tape, qbot, &q_vars, task_enc, q_state)?;
    let mut predictions: Vec<[usize; 2]> = vec![[0, 0]; batch];
    let mut pred_lps: Vec<[f64; 2]> = vec![[0.0, 0.0]; batch];
    for (slot, logp) in pred_logp.into_iter().enumerate() {
        let acts = select_actions(&tape, logp, &mut source, |t| t.prediction[slot]);
        for (b, lp) in picked_logprobs(&tape, logp, &acts).into_iter().enumerate() {
            predictions[b][slot] = acts[b];
            pred_lps[b][slot] = lp;
        }
        if mode == DecodeMode::Sample {
            logprob_vars.push(tape.pick_per_row(logp, &acts)?);
            // Predictions are the questioner's actions.
            entropy_q_vars.push(tape.entropy_rows(logp)?);
        }
    }

    let (episode_logprob, episode_entropy_q, episode_entropy_a) =
        if mode == DecodeMode::Sample {
            let mut total = logprob_vars[0];
            for &v in &logprob_vars[1..] {
                total = tape.add(total, v)?;
            }
            let mut eq = entropy_q_vars[0];
            for &v in &entropy_q_vars[1..] {
                eq = tape.add(eq, v)?;
            }
            let mut ea = entropy_a_vars[0];
            for &v in &entropy_a_vars[1..] {
                ea = tape.add(ea, v)?;
            }
            (Some(total), Some(eq), Some(ea))
        } else {
            (None, None, None)
        };

    let transcripts: Vec<Transcript> = states
        .iter()
        .enumerate()
        .map(|(b, &state)| {
            let prediction = predictions[b];
            let (u1, u2) = state.ground_truth();
            let reward =
                if prediction == [u1, u2] { scheme.correct } else { scheme.wrong };
            Transcript {
                state,
                q_tokens: q_tokens.iter().map(|r| r[b]).collect(),
                a_tokens: a_tokens.iter().map(|r| r[b]).collect(),
                q_logprobs: q_lps.iter().map(|r| r[b]).collect(),
                a_logprobs: a_lps.iter().map(|r| r[b]).collect(),
                prediction,
                pred_logprobs: pred_lps[b],
                reward,
            }
        })
        .collect();

    Ok(BatchRollout {
        tape,
        transcripts,
        episode_logprob,
        episode_entropy_q,
        episode_entropy_a,
        q_vars,
        a_vars,
        mode,
    })
}

/// Runs one episode and returns its transcript.
pub fn run_episode(
    qbot: &QBot,
    abot: &ABot,
    state: GameState,
    rounds: usize,
    mode: DecodeMode,
    rng: &mut ChaCha8Rng,
    scheme: &RewardScheme,
) -> Result<Transcript> {
    let mut out = run_batch(qbot, abot, &[state], rounds, mode, rng, scheme)?;
    Ok(out.pop().unwrap())
}

/// Runs the batch and returns only the transcripts.
pub fn run_batch(
    qbot: &QBot,
    abot: &ABot,
    states: &[GameState],
    rounds: usize,
    mode: DecodeMode,
    rng: &mut ChaCha8Rng,
    scheme: &RewardScheme,
) -> Result<Vec<Transcript>> {
    let source = match mode {
        DecodeMode::Sample => ActionSource::Sample(rng),
        DecodeMode::Greedy => ActionSource::Greedy,
    };
    Ok(rollout_batch(qbot, abot, states, rounds, source, scheme)?.transcripts)
}

/// The batch fed to one training epoch: every train state once, extended
/// cyclically when the configured batch size exceeds the pool.
pub fn tile_batch(states: &[GameState], batch_size: usize) -> Vec<GameState> {
    let mut out = states.to_vec();
    if batch_size > states.len() {
        let mut i = 0;
        while out.len() < batch_size {
            out.push(states[i % states.len()]);
            i += 1;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    /// Fraction of episodes with both attributes correct (the reporting
    /// criterion everywhere in this crate).
    pub both: f64,
    /// Fraction with at least one attribute correct.
    pub one: f64,
}

pub fn accuracy(transcripts: &[Transcript]) -> Result<Accuracy> {
    if transcripts.is_empty() {
        return Err(Error::usage("accuracy: empty transcript list"));
    }
    let n = transcripts.len() as f64;
    let both = transcripts.iter().filter(|t| t.both_correct()).count() as f64 / n;
    let one = transcripts.iter().filter(|t| t.one_correct()).count() as f64 / n;
    Ok(Accuracy { both, one })
}
