//! Dependent paired t-tests over per-run test accuracies.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub df: f64,
    pub mean_diff: f64,
    /// Zero-variance difference vectors make t blow up; such results are
    /// flagged rather than hidden.
    pub degenerate: bool,
}

/// Two-sided dependent paired t-test. Inputs must be aligned run-for-run
/// (same fold, same seed at each position).
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "paired_ttest: sample sizes differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::usage("paired_ttest: need at least 2 pairs"));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = n - 1.0;

    if var == 0.0 {
        // Identical samples: no evidence of a difference. Constant nonzero
        // difference: t diverges and p collapses to 0.
        return Ok(if mean == 0.0 {
            PairedTTest { t: 0.0, p: 1.0, df, mean_diff: 0.0, degenerate: false }
        } else {
            PairedTTest {
                t: if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                p: 0.0,
                df,
                mean_diff: mean,
                degenerate: true,
            }
        });
    }

    let t = mean / (var.sqrt() / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::usage(format!("paired_ttest: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(PairedTTest { t, p, df, mean_diff: mean, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_t_zero_p_one() {
        let a = [0.5, 0.6, 0.7, 0.8];
        let r = paired_ttest(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn constant_nonzero_difference_is_degenerate() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [0.0, 1.0, 2.0, 3.0];
        let r = paired_ttest(&a, &b).unwrap();
        assert!(r.t.is_infinite() && r.t > 0.0);
        assert_eq!(r.p, 0.0);
        assert!(r.degenerate);
    }

    #[test]
    fn pinned_four_element_oracle() {
        // differences [0.1, 0.2, 0.15, 0.05]: mean 0.125, sample sd
        // sqrt(0.0125/3), t = mean / (sd / 2) = sqrt(15).
        let b = [0.0, 0.0, 0.0, 0.0];
        let a = [0.1, 0.2, 0.15, 0.05];
        let r = paired_ttest(&a, &b).unwrap();
        assert!((r.t - 15f64.sqrt()).abs() < 1e-10, "t = {}", r.t);
        assert_eq!(r.df, 3.0);
        // Direct evaluation puts the two-sided p just above 0.03.
        assert!(r.p > 0.02 && r.p < 0.04, "p = {}", r.p);
    }

    #[test]
    fn symmetric_up_to_sign() {
        let a = [0.61, 0.55, 0.70, 0.66, 0.59];
        let b = [0.52, 0.58, 0.61, 0.60, 0.50];
        let ab = paired_ttest(&a, &b).unwrap();
        let ba = paired_ttest(&b, &a).unwrap();
        assert!((ab.t + ba.t).abs() < 1e-12);
        assert!((ab.p - ba.p).abs() < 1e-12);
    }

    #[test]
    fn misaligned_lengths_rejected() {
        assert!(matches!(paired_ttest(&[1.0, 2.0], &[1.0]), Err(Error::Usage(_))));
        assert!(matches!(paired_ttest(&[1.0], &[1.0]), Err(Error::Usage(_))));
    }
}
