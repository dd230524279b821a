//! Dense row-major tensors plus the handful of free numeric functions the
//! policy heads need (stabilized softmax, categorical sampling, argmax).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense tensor, row-major, f64.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "from_vec",
                format!("shape {:?} needs {} values, got {}", shape, n, data.len()),
            ));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// Uniform init in `[-bound, bound]`, filled in row-major order.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound).collect();
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Rows of a rank-2 tensor; a rank-1 tensor counts as a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    /// Length of the last axis (1 for scalars).
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Max-subtracted softmax over one logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    debug_assert!(!logits.is_empty());
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// log(sum(exp(xs))), stabilized by max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Index of the maximum value; ties break toward the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Draws one index from a categorical distribution by inverse CDF. Returns the
/// index and `ln(probs[index])`. An index with zero probability is never
/// returned.
pub fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> (usize, f64) {
    debug_assert!(!probs.is_empty());
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = Some(i);
            acc += p;
            if u < acc {
                return (i, p.ln());
            }
        }
    }
    // Floating-point shortfall: the positive mass summed to slightly under u.
    let i = last_positive.expect("sample_categorical: all probabilities are zero");
    (i, probs[i].ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let p = softmax(&[0.0, 0.0, 0.0, 0.0]);
        for v in p {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_closed_form_ln3() {
        // [c, c + ln 3] -> [0.25, 0.75] for any c.
        for c in [-5.0, 0.0, 123.0] {
            let p = softmax(&[c, c + 3f64.ln()]);
            assert!((p[0] - 0.25).abs() < 1e-12, "c={c}: {p:?}");
            assert!((p[1] - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_large_logits_no_overflow() {
        let p = softmax(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_shift_invariant_and_normalized() {
        let logits = [3.0, -2.0, 0.5, 999.0, -999.0];
        let shifted: Vec<f64> = logits.iter().map(|x| x + 17.5).collect();
        let a = softmax(&logits);
        let b = softmax(&shifted);
        let sum: f64 = a.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(a.iter().all(|&v| v >= 0.0));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_degenerate_distribution() {
        let mut rng = rng_from_seed(0);
        for _ in 0..100 {
            let (i, lp) = sample_categorical(&[1.0, 0.0, 0.0], &mut rng);
            assert_eq!(i, 0);
            assert_eq!(lp, 0.0);
        }
    }

    #[test]
    fn sample_never_returns_zero_probability_index() {
        let mut rng = rng_from_seed(1);
        for _ in 0..10_000 {
            let (i, _) = sample_categorical(&[0.0, 0.5, 0.0, 0.5], &mut rng);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn sample_fair_coin_concentration() {
        // 10_000 draws from [0.5, 0.5]: each index frequency within [0.48, 0.52].
        let mut rng = rng_from_seed(2);
        let mut counts = [0usize; 2];
        for _ in 0..10_000 {
            let (i, _) = sample_categorical(&[0.5, 0.5], &mut rng);
            counts[i] += 1;
        }
        for c in counts {
            let f = c as f64 / 10_000.0;
            assert!((0.48..=0.52).contains(&f), "frequency {f}");
        }
    }

    #[test]
    fn sample_deterministic_given_seed() {
        let probs = [0.2, 0.3, 0.5];
        let mut a = rng_from_seed(9);
        let mut b = rng_from_seed(9);
        for _ in 0..200 {
            assert_eq!(sample_categorical(&probs, &mut a).0, sample_categorical(&probs, &mut b).0);
        }
    }

    #[test]
    fn argmax_ties_break_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[5.0]), 0);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }
}
