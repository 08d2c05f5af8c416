//! Percentile bootstrap confidence interval of a mean.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::stats::{mean, quantile_sorted};

pub const DEFAULT_ITERATIONS: usize = 1000;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const MIN_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BootstrapError {
    #[error("cannot bootstrap an empty sample")]
    Empty,
    #[error("confidence must lie strictly between 0 and 1")]
    BadConfidence,
    #[error("at least {MIN_ITERATIONS} iterations are required, got {0}")]
    TooFewIterations(usize),
    #[error("sample contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Half the interval width.
    pub margin: f64,
    pub iterations: usize,
    pub seed: u64,
}

/// Mean of one resample. Iteration `k` draws from its own stream of the
/// seeded generator, so any subset of iterations can be recomputed alone.
pub fn resample_mean(values: &[f64], seed: u64, iteration: usize) -> f64 {
    let mut rng = rng::stream(seed, iteration as u64);
    let n = values.len();
    let sum: f64 = (0..n).map(|_| values[rng.random_range(0..n)]).sum();
    sum / n as f64
}

/// Sample mean with the percentile interval of `iterations` resampled means.
/// The interval is widened if needed so that it always contains the mean.
pub fn bootstrap_mean_ci(
    values: &[f64],
    iterations: usize,
    confidence: f64,
    seed: u64,
) -> Result<BootstrapResult, BootstrapError> {
    if values.is_empty() {
        return Err(BootstrapError::Empty);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(BootstrapError::BadConfidence);
    }
    if iterations < MIN_ITERATIONS {
        return Err(BootstrapError::TooFewIterations(iterations));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(BootstrapError::NonFinite);
    }
    let m = mean(values);
    let mut means: Vec<f64> = (0..iterations).map(|k| resample_mean(values, seed, k)).collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    let ci_low = quantile_sorted(&means, alpha).min(m);
    let ci_high = quantile_sorted(&means, 1.0 - alpha).max(m);
    Ok(BootstrapResult { mean: m, ci_low, ci_high, margin: (ci_high - ci_low) / 2.0, iterations, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn constant_sample_has_zero_margin() {
        for v in [0.0, 0.1, 0.7375, 1.0] {
            let r = bootstrap_mean_ci(&vec![v; 37], 200, 0.95, 3).unwrap();
            assert_eq!(r.margin, 0.0);
            assert_eq!((r.ci_low, r.ci_high), (r.mean, r.mean));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let values: Vec<f64> = (0..50).map(|i| (i % 7) as f64 / 7.0).collect();
        let a = bootstrap_mean_ci(&values, 500, 0.95, 11).unwrap();
        let b = bootstrap_mean_ci(&values, 500, 0.95, 11).unwrap();
        assert_eq!(a, b);
        let c = bootstrap_mean_ci(&values, 500, 0.95, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn argument_errors() {
        assert_eq!(bootstrap_mean_ci(&[], 1000, 0.95, 0), Err(BootstrapError::Empty));
        assert_eq!(bootstrap_mean_ci(&[1.0], 1000, 1.0, 0), Err(BootstrapError::BadConfidence));
        assert_eq!(bootstrap_mean_ci(&[1.0], 99, 0.95, 0), Err(BootstrapError::TooFewIterations(99)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn interval_brackets_mean(values in proptest::collection::vec(0.0f64..1.0, 1..40), seed in 0u64..1000) {
            let r = bootstrap_mean_ci(&values, 100, 0.9, seed).unwrap();
            prop_assert!(r.ci_low <= r.mean && r.mean <= r.ci_high);
            prop_assert!((r.margin - (r.ci_high - r.ci_low) / 2.0).abs() == 0.0);
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r.ci_low >= lo - 1e-12 && r.ci_high <= hi + 1e-12);
        }
    }
}
