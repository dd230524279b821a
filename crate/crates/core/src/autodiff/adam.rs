//! Adam with bias correction, one moment pair per parameter tensor.

use serde::{Deserialize, Serialize};

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamHyper { learning_rate, ..Default::default() }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState {
    hyper: AdamHyper,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[&Tensor], hyper: AdamHyper) -> Self {
        let m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        let v = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState { hyper, step: 0, m, v }
    }

    pub fn hyper(&self) -> AdamHyper {
        self.hyper
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// Rebuilds optimizer state from checkpointed moments.
    pub fn from_parts(hyper: AdamHyper, step: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Self {
        AdamState { hyper, step, m, v }
    }

    /// One Adam step over a parameter list. `params` and `grads` must align
    /// with the order this state was created from.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                "adam_update",
                format!("{} params, {} grads, state holds {}", params.len(), grads.len(), self.m.len()),
            ));
        }
        for ((p, g), (m, v)) in params.iter().zip(grads).zip(self.m.iter().zip(&self.v)) {
            if p.shape() != g.shape() || p.shape() != m.shape() || p.shape() != v.shape() {
                return Err(Error::shape(
                    "adam_update",
                    format!("param {:?} vs grad {:?}", p.shape(), g.shape()),
                ));
            }
        }
        self.step += 1;
        let AdamHyper { learning_rate, beta1, beta2, epsilon } = self.hyper;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in
            params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pi, &gi), mi), vi) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_fresh_params_unchanged() {
        let mut p = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let g = Tensor::zeros(&[3]);
        let mut adam = AdamState::new(&[&p], AdamHyper::default());
        let before = p.clone();
        adam.update(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction, step 1 with constant gradient g moves each
        // coordinate by ~lr * sign(g) (the corrected ratio is 1 up to epsilon).
        let lr = 0.01;
        let mut p = Tensor::zeros(&[4]);
        let g = Tensor::from_vec(&[4], vec![3.0, -0.2, 11.0, -7.5]).unwrap();
        let mut adam = AdamState::new(&[&p], AdamHyper::with_learning_rate(lr));
        adam.update(&mut [&mut p], &[&g]).unwrap();
        for (pi, gi) in p.data().iter().zip(g.data()) {
            let expected = -lr * gi.signum();
            assert!((pi - expected).abs() < 1e-6, "{pi} vs {expected}");
        }
    }

    #[test]
    fn default_learning_rate_is_001() {
        assert_eq!(AdamHyper::default().learning_rate, 0.01);
    }

    #[test]
    fn moments_decay_toward_zero_on_zero_gradient() {
        let mut p = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let g1 = Tensor::from_vec(&[1], vec![2.0]).unwrap();
        let g0 = Tensor::zeros(&[1]);
        let mut adam = AdamState::new(&[&p], AdamHyper::default());
        adam.update(&mut [&mut p], &[&g1]).unwrap();
        let m_after_grad = adam.m[0].data()[0];
        adam.update(&mut [&mut p], &[&g0]).unwrap();
        assert!(adam.m[0].data()[0].abs() < m_after_grad.abs());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Tensor::zeros(&[2]);
        let g = Tensor::zeros(&[3]);
        let mut adam = AdamState::new(&[&p], AdamHyper::default());
        assert!(adam.update(&mut [&mut p], &[&g]).is_err());
    }
}
