//! Minimal dense-tensor math with reverse-mode differentiation: just enough
//! for embeddings, affine layers, a gated recurrent cell, and softmax policy
//! heads, all on a single thread.

pub mod adam;
pub mod cell;
mod mat;
pub mod tape;
pub mod tensor;

pub use adam::{AdamHyper, AdamState};
pub use cell::{lstm_step, CellVars};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{argmax, log_sum_exp, sample_categorical, softmax, Tensor};
