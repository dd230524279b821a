//! The two agent roles. The questioner sees the task, speaks over `V_Q`
//! tokens, and predicts two attribute values after the final round. The
//! answerer sees the object and speaks over `V_A` tokens; its memoryless
//! variant has its recurrent state zeroed before every round.

use serde::{Deserialize, Serialize};

use crate::autodiff::{lstm_step, AdamHyper, AdamState, CellVars, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::world::{OBJECT_ENCODING_DIM, TASK_ENCODING_DIM, VALUES_PER_SLOT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Questioner,
    Answerer,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Role::Questioner => write!(f, "Q"),
            Role::Answerer => write!(f, "A"),
        }
    }
}

/// Vocabulary sizes plus the answerer-memory flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSetting {
    pub v_q: usize,
    pub v_a: usize,
    pub memoryless_a: bool,
}

impl VocabSetting {
    pub fn small_vocab() -> Self {
        VocabSetting { v_q: 3, v_a: 4, memoryless_a: false }
    }

    pub fn memoryless_small_vocab() -> Self {
        VocabSetting { v_q: 3, v_a: 4, memoryless_a: true }
    }

    pub fn overcomplete() -> Self {
        VocabSetting { v_q: 64, v_a: 64, memoryless_a: false }
    }

    pub fn memoryless_overcomplete() -> Self {
        VocabSetting { v_q: 64, v_a: 64, memoryless_a: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_q < 1 || self.v_a < 1 {
            return Err(Error::config("vocabulary sizes must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// Hidden and embedding widths. The game never pins these; they are run
/// configuration, with defaults sized for full-scale runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchDims {
    pub hidden: usize,
    pub embed: usize,
}

impl Default for ArchDims {
    fn default() -> Self {
        ArchDims { hidden: 64, embed: 32 }
    }
}

impl ArchDims {
    pub fn validate(&self) -> Result<()> {
        if self.hidden < 1 || self.embed < 1 {
            return Err(Error::config("hidden and embed dims must be at least 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
}

impl LstmParams {
    fn init(input_dim: usize, hidden: usize, rng: &mut impl rand::Rng) -> Self {
        LstmParams {
            w_ih: Tensor::uniform(&[4 * hidden, input_dim], fan_in_bound(input_dim), rng),
            w_hh: Tensor::uniform(&[4 * hidden, hidden], fan_in_bound(hidden), rng),
            bias: Tensor::uniform(&[4 * hidden], fan_in_bound(hidden), rng),
        }
    }
}

/// Uniform init bound 1/sqrt(fan-in). Keeps freshly initialized policy heads
/// close to uniform token distributions.
fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

/// Questioner network.
///
/// Listening embedding row 0 is the start-of-dialog null token; answerer
/// token `a` maps to row `a + 1`.
#[derive(Clone, Debug)]
pub struct QBot {
    pub setting: VocabSetting,
    pub dims: ArchDims,
    pub listen_embed: Tensor,
    pub task_w: Tensor,
    pub task_b: Tensor,
    pub lstm: LstmParams,
    pub speak_w: Tensor,
    pub speak_b: Tensor,
    pub pred_w: [Tensor; 2],
    pub pred_b: [Tensor; 2],
    pub adam: AdamState,
    pub birth_epoch: u64,
}

impl QBot {
    pub fn init(
        setting: VocabSetting,
        dims: ArchDims,
        hyper: AdamHyper,
        seed: u64,
        birth_epoch: u64,
    ) -> Self {
        let (h, e) = (dims.hidden, dims.embed);
        let mut rng = rng_from_seed(seed);
        let listen_embed = Tensor::uniform(&[setting.v_a + 1, e], fan_in_bound(e), &mut rng);
        let task_w =
            Tensor::uniform(&[e, TASK_ENCODING_DIM], fan_in_bound(TASK_ENCODING_DIM), &mut rng);
        let task_b = Tensor::uniform(&[e], fan_in_bound(TASK_ENCODING_DIM), &mut rng);
        let lstm = LstmParams::init(2 * e, h, &mut rng);
        let speak_w = Tensor::uniform(&[setting.v_q, h], fan_in_bound(h), &mut rng);
        let speak_b = Tensor::uniform(&[setting.v_q], fan_in_bound(h), &mut rng);
        let pred_dim = h + TASK_ENCODING_DIM;
        let pred_w = [
            Tensor::uniform(&[VALUES_PER_SLOT, pred_dim], fan_in_bound(pred_dim), &mut rng),
            Tensor::uniform(&[VALUES_PER_SLOT, pred_dim], fan_in_bound(pred_dim), &mut rng),
        ];
        let pred_b = [
            Tensor::uniform(&[VALUES_PER_SLOT], fan_in_bound(pred_dim), &mut rng),
            Tensor::uniform(&[VALUES_PER_SLOT], fan_in_bound(pred_dim), &mut rng),
        ];
        let params = [
            &listen_embed,
            &task_w,
            &task_b,
            &lstm.w_ih,
            &lstm.w_hh,
            &lstm.bias,
            &speak_w,
            &speak_b,
            &pred_w[0],
            &pred_b[0],
            &pred_w[1],
            &pred_b[1],
        ];
        let adam = AdamState::new(&params, hyper);
        QBot {
            setting,
            dims,
            listen_embed,
            task_w,
            task_b,
            lstm,
            speak_w,
            speak_b,
            pred_w,
            pred_b,
            adam,
            birth_epoch,
        }
    }

    /// Parameters in the canonical checkpoint/optimizer order.
    pub fn params(&self) -> Vec<&Tensor> {
        vec![
            &self.listen_embed,
            &self.task_w,
            &self.task_b,
            &self.lstm.w_ih,
            &self.lstm.w_hh,
            &self.lstm.bias,
            &self.speak_w,
            &self.speak_b,
            &self.pred_w[0],
            &self.pred_b[0],
            &self.pred_w[1],
            &self.pred_b[1],
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let [pw0, pw1] = &mut self.pred_w;
        let [pb0, pb1] = &mut self.pred_b;
        vec![
            &mut self.listen_embed,
            &mut self.task_w,
            &mut self.task_b,
            &mut self.lstm.w_ih,
            &mut self.lstm.w_hh,
            &mut self.lstm.bias,
            &mut self.speak_w,
            &mut self.speak_b,
            pw0,
            pb0,
            pw1,
            pb1,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// One optimizer step over the canonical parameter order.
    pub fn apply_grads(&mut self, grads: &[&Tensor]) -> Result<()> {
        let QBot {
            listen_embed,
            task_w,
            task_b,
            lstm,
            speak_w,
            speak_b,
            pred_w,
            pred_b,
            adam,
            ..
        } = self;
        let [pw0, pw1] = pred_w;
        let [pb0, pb1] = pred_b;
        let mut params: Vec<&mut Tensor> = vec![
            listen_embed,
            task_w,
            task_b,
            &mut lstm.w_ih,
            &mut lstm.w_hh,
            &mut lstm.bias,
            speak_w,
            speak_b,
            pw0,
            pb0,
            pw1,
            pb1,
        ];
        adam.update(&mut params, grads)
    }
}

/// Answerer network.
#[derive(Clone, Debug)]
pub struct ABot {
    pub setting: VocabSetting,
    pub dims: ArchDims,
    pub listen_embed: Tensor,
    pub obj_w: Tensor,
    pub obj_b: Tensor,
    pub lstm: LstmParams,
    pub speak_w: Tensor,
    pub speak_b: Tensor,
    pub adam: AdamState,
    pub birth_epoch: u64,
}

impl ABot {
    pub fn init(
        setting: VocabSetting,
        dims: ArchDims,
        hyper: AdamHyper,
        seed: u64,
        birth_epoch: u64,
    ) -> Self {
        let (h, e) = (dims.hidden, dims.embed);
        let mut rng = rng_from_seed(seed);
        let listen_embed = Tensor::uniform(&[setting.v_q, e], fan_in_bound(e), &mut rng);
        let obj_w =
            Tensor::uniform(&[e, OBJECT_ENCODING_DIM], fan_in_bound(OBJECT_ENCODING_DIM), &mut rng);
        let obj_b = Tensor::uniform(&[e], fan_in_bound(OBJECT_ENCODING_DIM), &mut rng);
        let lstm = LstmParams::init(2 * e, h, &mut rng);
        let speak_w = Tensor::uniform(&[setting.v_a, h], fan_in_bound(h), &mut rng);
        let speak_b = Tensor::uniform(&[setting.v_a], fan_in_bound(h), &mut rng);
        let params = [
            &listen_embed,
            &obj_w,
            &obj_b,
            &lstm.w_ih,
            &lstm.w_hh,
            &lstm.bias,
            &speak_w,
            &speak_b,
        ];
        let adam = AdamState::new(&params, hyper);
        ABot {
            setting,
            dims,
            listen_embed,
            obj_w,
            obj_b,
            lstm,
            speak_w,
            speak_b,
            adam,
            birth_epoch,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![
            &self.listen_embed,
            &self.obj_w,
            &self.obj_b,
            &self.lstm.w_ih,
            &self.lstm.w_hh,
            &self.lstm.bias,
            &self.speak_w,
            &self.speak_b,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.listen_embed,
            &mut self.obj_w,
            &mut self.obj_b,
            &mut self.lstm.w_ih,
            &mut self.lstm.w_hh,
            &mut self.lstm.bias,
            &mut self.speak_w,
            &mut self.speak_b,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// One optimizer step over the canonical parameter order.
    pub fn apply_grads(&mut self, grads: &[&Tensor]) -> Result<()> {
        let ABot { listen_embed, obj_w, obj_b, lstm, speak_w, speak_b, adam, .. } = self;
        let mut params: Vec<&mut Tensor> = vec![
            listen_embed,
            obj_w,
            obj_b,
            &mut lstm.w_ih,
            &mut lstm.w_hh,
            &mut lstm.bias,
            speak_w,
            speak_b,
        ];
        adam.update(&mut params, grads)
    }
}

/// Tape handles for one registered agent, aligned with `params()` order.
pub struct AgentVars {
    vars: Vec<Var>,
    lstm: CellVars,
}

impl AgentVars {
    fn register(tape: &mut Tape, params: &[&Tensor], lstm_offset: usize) -> Self {
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
        let lstm = CellVars {
            w_ih: vars[lstm_offset],
            w_hh: vars[lstm_offset + 1],
            bias: vars[lstm_offset + 2],
        };
        AgentVars { vars, lstm }
    }

    pub fn for_qbot(tape: &mut Tape, bot: &QBot) -> Self {
        AgentVars::register(tape, &bot.params(), 3)
    }

    pub fn for_abot(tape: &mut Tape, bot: &ABot) -> Self {
        AgentVars::register(tape, &bot.params(), 3)
    }

    pub fn all(&self) -> &[Var] {
        &self.vars
    }
}

/// Recurrent state carried between rounds.
#[derive(Clone, Copy)]
pub struct BotState {
    pub h: Var,
    pub c: Var,
}

impl BotState {
    pub fn zeros(tape: &mut Tape, batch: usize, hidden: usize) -> Self {
        BotState {
            h: tape.leaf(Tensor::zeros(&[batch, hidden])),
            c: tape.leaf(Tensor::zeros(&[batch, hidden])),
        }
    }
}

/// One questioner round over a batch: embed the previous answerer tokens
/// (already shifted so 0 is the null token), fold in the task encoding,
/// update memory, and return row-wise token log-probabilities.
pub fn qbot_round(
    tape: &mut Tape,
    bot: &QBot,
    vars: &AgentVars,
    listen_idx: &[usize],
    task_enc: Var,
    state: BotState,
    round: usize,
) -> Result<(Var, BotState)> {
    let v = &vars.vars;
    let tok = tape.gather_rows(v[0], listen_idx)?;
    let task = tape.affine(task_enc, v[1], v[2])?;
    let input = tape.concat_cols(tok, task)?;
    let (h, c) = lstm_step(tape, vars.lstm, input, state.h, state.c, round)?;
    let logits = tape.affine(h, v[6], v[7])?;
    let logp = tape.log_softmax(logits)?;
    debug_assert_eq!(tape.value(logp).cols(), bot.setting.v_q);
    Ok((logp, BotState { h, c }))
}

/// Listen-only questioner update, used once after the last round so the
/// final answer reaches memory before prediction. No token is emitted.
pub fn qbot_listen(
    tape: &mut Tape,
    bot: &QBot,
    vars: &AgentVars,
    listen_idx: &[usize],
    task_enc: Var,
    state: BotState,
    round: usize,
) -> Result<BotState> {
    let _ = bot;
    let v = &vars.vars;
    let tok = tape.gather_rows(v[0], listen_idx)?;
    let task = tape.affine(task_enc, v[1], v[2])?;
    let input = tape.concat_cols(tok, task)?;
    let (h, c) = lstm_step(tape, vars.lstm, input, state.h, state.c, round)?;
    Ok(BotState { h, c })
}

/// Prediction after the final listen: two independent heads over the four
/// attribute values, conditioned on (final memory, task encoding).
pub fn qbot_predict(
    tape: &mut Tape,
    bot: &QBot,
    vars: &AgentVars,
    task_enc: Var,
    state: BotState,
) -> Result<[Var; 2]> {
    let _ = bot;
    let v = &vars.vars;
    let features = tape.concat_cols(state.h, task_enc)?;
    let logits1 = tape.affine(features, v[8], v[9])?;
    let logits2 = tape.affine(features, v[10], v[11])?;
    Ok([tape.log_softmax(logits1)?, tape.log_softmax(logits2)?])
}

/// One answerer round over a batch. For the memoryless variant the caller
/// passes a fresh zero state each round.
pub fn abot_round(
    tape: &mut Tape,
    bot: &ABot,
    vars: &AgentVars,
    listen_idx: &[usize],
    obj_enc: Var,
    state: BotState,
    round: usize,
) -> Result<(Var, BotState)> {
    let v = &vars.vars;
    let tok = tape.gather_rows(v[0], listen_idx)?;
    let obj = tape.affine(obj_enc, v[1], v[2])?;
    let input = tape.concat_cols(tok, obj)?;
    let (h, c) = lstm_step(tape, vars.lstm, input, state.h, state.c, round)?;
    let logits = tape.affine(h, v[6], v[7])?;
    let logp = tape.log_softmax(logits)?;
    debug_assert_eq!(tape.value(logp).cols(), bot.setting.v_a);
    Ok((logp, BotState { h, c }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::softmax;

    fn dims() -> ArchDims {
        ArchDims::default()
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = QBot::init(VocabSetting::small_vocab(), dims(), AdamHyper::default(), 5, 0);
        let b = QBot::init(VocabSetting::small_vocab(), dims(), AdamHyper::default(), 5, 0);
        for (x, y) in a.params().into_iter().zip(b.params()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn different_seed_different_parameters() {
        let a = QBot::init(VocabSetting::small_vocab(), dims(), AdamHyper::default(), 5, 0);
        let b = QBot::init(VocabSetting::small_vocab(), dims(), AdamHyper::default(), 6, 0);
        assert_ne!(a.listen_embed, b.listen_embed);
    }

    #[test]
    fn parameter_counts_pinned() {
        // Catches silent architecture drift. Counts derive from:
        // Q: (v_a+1)e + e*6+e + 4h(2e) + 4h*h + 4h + v_q*h+v_q + 2(4(h+6)+4)
        // A: v_q*e + e*12+e + 4h(2e) + 4h*h + 4h + v_a*h+v_a
        let q = QBot::init(VocabSetting::small_vocab(), dims(), AdamHyper::default(), 0, 0);
        let a = ABot::init(VocabSetting::small_vocab(), dims(), AdamHyper::default(), 0, 0);
        assert_eq!(q.param_count(), 34_171);
        assert_eq!(a.param_count(), 33_796);

        let q = QBot::init(VocabSetting::overcomplete(), dims(), AdamHyper::default(), 0, 0);
        let a = ABot::init(VocabSetting::overcomplete(), dims(), AdamHyper::default(), 0, 0);
        assert_eq!(q.param_count(), 40_056);
        assert_eq!(a.param_count(), 39_648);
    }

    #[test]
    fn fresh_token_distributions_are_near_uniform() {
        // Monte Carlo over seeds and contexts; underpins the random-init
        // similarity baseline.
        for setting in [VocabSetting::small_vocab(), VocabSetting::overcomplete()] {
            let mut total_dev = 0.0;
            let mut contexts = 0;
            for seed in 0..8 {
                let bot = QBot::init(setting, dims(), AdamHyper::default(), seed, 0);
                let mut tape = Tape::new();
                let vars = AgentVars::for_qbot(&mut tape, &bot);
                let task = crate::world::Task::new(0, 1).unwrap();
                let enc = tape.leaf(
                    Tensor::from_vec(&[1, TASK_ENCODING_DIM], task.encode().to_vec()).unwrap(),
                );
                let state = BotState::zeros(&mut tape, 1, bot.dims.hidden);
                for listen in 0..=setting.v_a {
                    let (logp, _) =
                        qbot_round(&mut tape, &bot, &vars, &[listen], enc, state, 1).unwrap();
                    let probs = softmax(tape.value(logp).data());
                    let uniform = 1.0 / setting.v_q as f64;
                    let dev = probs
                        .iter()
                        .map(|p| (p - uniform).abs())
                        .fold(0.0f64, f64::max);
                    total_dev += dev;
                    contexts += 1;
                }
            }
            let mean_dev = total_dev / contexts as f64;
            assert!(mean_dev < 0.05, "mean max deviation {mean_dev} for {setting:?}");
        }
    }

    #[test]
    fn greedy_round_is_deterministic() {
        let bot = QBot::init(VocabSetting::small_vocab(), dims(), AdamHyper::default(), 11, 0);
        let mut pick = Vec::new();
        for _ in 0..2 {
            let mut tape = Tape::new();
            let vars = AgentVars::for_qbot(&mut tape, &bot);
            let task = crate::world::Task::new(1, 2).unwrap();
            let enc = tape.leaf(
                Tensor::from_vec(&[1, TASK_ENCODING_DIM], task.encode().to_vec()).unwrap(),
            );
            let state = BotState::zeros(&mut tape, 1, bot.dims.hidden);
            let (logp, _) = qbot_round(&mut tape, &bot, &vars, &[0], enc, state, 1).unwrap();
            pick.push(crate::autodiff::argmax(tape.value(logp).data()));
        }
        assert_eq!(pick[0], pick[1]);
    }
}
