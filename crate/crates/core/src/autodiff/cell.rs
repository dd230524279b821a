//! Gated recurrent cell (LSTM-style) composed from tape primitives.
//!
//! Gate layout along the 4h axis is `[input | forget | cell | output]`.

use crate::autodiff::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Tape handles for one cell's parameters.
#[derive(Clone, Copy)]
pub struct CellVars {
    /// [4h, input_dim]
    pub w_ih: Var,
    /// [4h, h]
    pub w_hh: Var,
    /// [4h]
    pub bias: Var,
}

/// One recurrent update: `(h', c') = cell(input, h, c)`.
///
/// `step` labels the dialog round for the numeric-failure error path.
pub fn lstm_step(
    tape: &mut Tape,
    params: CellVars,
    input: Var,
    h: Var,
    c: Var,
    step: usize,
) -> Result<(Var, Var)> {
    let hidden = tape.value(h).cols();
    let from_input = tape.affine(input, params.w_ih, params.bias)?;
    let from_hidden = tape.linear(h, params.w_hh)?;
    let gates = tape.add(from_input, from_hidden)?;
    if tape.value(gates).cols() != 4 * hidden {
        return Err(Error::shape(
            "lstm_step",
            format!("gates cols {} != 4*hidden {}", tape.value(gates).cols(), 4 * hidden),
        ));
    }

    let i_pre = tape.slice_cols(gates, 0, hidden)?;
    let f_pre = tape.slice_cols(gates, hidden, hidden)?;
    let g_pre = tape.slice_cols(gates, 2 * hidden, hidden)?;
    let o_pre = tape.slice_cols(gates, 3 * hidden, hidden)?;

    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let g = tape.tanh(g_pre);
    let o = tape.sigmoid(o_pre);

    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let c_act = tape.tanh(c_next);
    let h_next = tape.mul(o, c_act)?;

    if !tape.value(h_next).is_finite() || !tape.value(c_next).is_finite() {
        return Err(Error::numeric(format!("recurrent step {step}")));
    }
    Ok((h_next, c_next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::tensor::Tensor;

    #[test]
    fn zero_everything_gives_zero_state() {
        // All gates sit at their zero-input fixed points; tanh(0) = 0.
        let hidden = 4;
        let input_dim = 3;
        let mut tape = Tape::new();
        let params = CellVars {
            w_ih: tape.leaf(Tensor::zeros(&[4 * hidden, input_dim])),
            w_hh: tape.leaf(Tensor::zeros(&[4 * hidden, hidden])),
            bias: tape.leaf(Tensor::zeros(&[4 * hidden])),
        };
        let input = tape.leaf(Tensor::zeros(&[2, input_dim]));
        let h = tape.leaf(Tensor::zeros(&[2, hidden]));
        let c = tape.leaf(Tensor::zeros(&[2, hidden]));
        let (h1, c1) = lstm_step(&mut tape, params, input, h, c, 1).unwrap();
        assert!(tape.value(h1).data().iter().all(|&v| v == 0.0));
        assert!(tape.value(c1).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hidden_dimension_preserved() {
        let hidden = 16;
        let input_dim = 5;
        let mut rng = crate::rng::rng_from_seed(3);
        let mut tape = Tape::new();
        let params = CellVars {
            w_ih: tape.leaf(Tensor::uniform(&[4 * hidden, input_dim], 0.2, &mut rng)),
            w_hh: tape.leaf(Tensor::uniform(&[4 * hidden, hidden], 0.2, &mut rng)),
            bias: tape.leaf(Tensor::uniform(&[4 * hidden], 0.2, &mut rng)),
        };
        let input = tape.leaf(Tensor::uniform(&[3, input_dim], 1.0, &mut rng));
        let h = tape.leaf(Tensor::zeros(&[3, hidden]));
        let c = tape.leaf(Tensor::zeros(&[3, hidden]));
        let (h1, _) = lstm_step(&mut tape, params, input, h, c, 1).unwrap();
        assert_eq!(tape.value(h1).shape(), &[3, hidden]);
    }
}
