//! The AIT index: accuracy, inverted-normalized inference time and
//! inverted-normalized token count, combined by scenario weights.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AitError {
    #[error("cannot normalize an empty list")]
    Empty,
    #[error("value at index {0} is not finite")]
    NonFinite(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("scenario `{0}` has a negative or non-finite weight")]
    BadWeight(String),
    #[error("scenario `{name}` weights sum to {sum}, not 1")]
    NotNormalized { name: String, sum: String },
    #[error("scenario `{0}` accuracy weight must be at least 0.5")]
    AccuracyNotDominant(String),
}

/// Per-record AIT inputs: correctness plus inverted costs in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AitComponents {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "T")]
    pub t: f64,
}

/// Raw measurements of one answered question.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub correct: bool,
    pub latency_ms: f64,
    pub completion_tokens: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AitScenario {
    pub name: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl AitScenario {
    pub fn new(name: impl Into<String>, a: f64, b: f64, c: f64) -> Self {
        Self { name: name.into(), a, b, c }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if [self.a, self.b, self.c].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(ScenarioError::BadWeight(self.name.clone()));
        }
        let sum = self.a + self.b + self.c;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ScenarioError::NotNormalized {
                name: self.name.clone(),
                sum: alloc::format!("{sum}"),
            });
        }
        // The Balanced and Token Size presets sit exactly at 0.5.
        if self.a < 0.5 {
            return Err(ScenarioError::AccuracyNotDominant(self.name.clone()));
        }
        Ok(())
    }
}

/// The five standard weighting strategies.
pub fn scenario_presets() -> Vec<AitScenario> {
    alloc::vec![
        AitScenario::new("Accuracy First", 0.9, 0.05, 0.05),
        AitScenario::new("Accuracy-first with cost awareness", 0.8, 0.05, 0.15),
        AitScenario::new("Inference Speed First", 0.6, 0.3, 0.1),
        AitScenario::new("Balanced Strategy", 0.5, 0.25, 0.25),
        AitScenario::new("Token Size Priority", 0.5, 0.1, 0.4),
    ]
}

/// `(x - min) / (max - min)`; every value maps to 0.5 when the range is empty.
pub fn min_max_normalize(xs: &[f64]) -> Result<Vec<f64>, AitError> {
    if xs.is_empty() {
        return Err(AitError::Empty);
    }
    if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
        return Err(AitError::NonFinite(i));
    }
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(alloc::vec![0.5; xs.len()]);
    }
    let range = max - min;
    if range.is_finite() {
        Ok(xs.iter().map(|x| (x - min) / range).collect())
    } else {
        // Halve first when the range itself overflows.
        let (lo, span) = (min / 2.0, max / 2.0 - min / 2.0);
        Ok(xs.iter().map(|x| (x / 2.0 - lo) / span).collect())
    }
}

/// Components for every record, with latency and tokens normalized over the
/// whole input and then inverted so that cheaper is closer to 1.
pub fn ait_components(records: &[CostRecord]) -> Result<Vec<AitComponents>, AitError> {
    let latency: Vec<f64> = records.iter().map(|r| r.latency_ms).collect();
    let tokens: Vec<f64> = records.iter().map(|r| r.completion_tokens).collect();
    let latency = min_max_normalize(&latency)?;
    let tokens = min_max_normalize(&tokens)?;
    Ok(records
        .iter()
        .zip(latency.iter().zip(&tokens))
        .map(|(r, (l, t))| AitComponents { a: if r.correct { 1.0 } else { 0.0 }, i: 1.0 - l, t: 1.0 - t })
        .collect())
}

pub fn ait_score(components: &AitComponents, scenario: &AitScenario) -> f64 {
    scenario.a * components.a + scenario.b * components.i + scenario.c * components.t
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(correct: bool, latency_ms: f64, completion_tokens: f64) -> CostRecord {
        CostRecord { correct, latency_ms, completion_tokens }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(min_max_normalize(&[2.0, 4.0, 6.0]).unwrap(), [0.0, 0.5, 1.0]);
        assert_eq!(min_max_normalize(&[7.0, 7.0, 7.0]).unwrap(), [0.5, 0.5, 0.5]);
        assert_eq!(min_max_normalize(&[]), Err(AitError::Empty));
        assert_eq!(min_max_normalize(&[1.0, f64::NAN]), Err(AitError::NonFinite(1)));
        assert_eq!(min_max_normalize(&[-f64::MAX, 0.0, f64::MAX]).unwrap(), [0.0, 0.5, 1.0]);
    }

    #[test]
    fn component_examples() {
        let c = ait_components(&[rec(true, 1000.0, 5.0), rec(false, 1000.0, 800.0)]).unwrap();
        assert_eq!((c[0].t, c[1].t), (1.0, 0.0));
        assert_eq!((c[0].i, c[1].i), (0.5, 0.5));
        assert_eq!((c[0].a, c[1].a), (1.0, 0.0));
        let c = ait_components(&[rec(true, 1000.0, 1.0), rec(true, 2000.0, 1.0), rec(true, 3000.0, 1.0)]).unwrap();
        let i: Vec<f64> = c.iter().map(|c| c.i).collect();
        assert_eq!(i, [1.0, 0.5, 0.0]);
    }

    #[test]
    fn score_examples() {
        let presets = scenario_presets();
        let ones = AitComponents { a: 1.0, i: 1.0, t: 1.0 };
        for s in &presets {
            s.validate().unwrap();
            assert!((ait_score(&ones, s) - 1.0).abs() < 1e-15);
        }
        let x = AitComponents { a: 1.0, i: 0.5, t: 0.5 };
        assert!((ait_score(&x, &presets[0]) - 0.95).abs() < 1e-15);
        let y = AitComponents { a: 0.0, i: 1.0, t: 1.0 };
        assert_eq!(ait_score(&y, &presets[3]), 0.5);
    }

    #[test]
    fn preset_weights() {
        let p = scenario_presets();
        assert_eq!(p.len(), 5);
        assert_eq!((p[0].a, p[0].b, p[0].c), (0.9, 0.05, 0.05));
        assert_eq!((p[1].a, p[1].b, p[1].c), (0.8, 0.05, 0.15));
        assert_eq!((p[2].a, p[2].b, p[2].c), (0.6, 0.3, 0.1));
        assert_eq!((p[3].a, p[3].b, p[3].c), (0.5, 0.25, 0.25));
        assert_eq!((p[4].a, p[4].b, p[4].c), (0.5, 0.1, 0.4));
    }

    #[test]
    fn scenario_validation() {
        assert!(AitScenario::new("x", 0.5, 0.25, 0.25).validate().is_ok());
        assert!(matches!(AitScenario::new("x", 0.4, 0.3, 0.3).validate(), Err(ScenarioError::AccuracyNotDominant(_))));
        assert!(matches!(AitScenario::new("x", 0.9, 0.1, 0.1).validate(), Err(ScenarioError::NotNormalized { .. })));
        assert!(matches!(AitScenario::new("x", 1.1, -0.1, 0.0).validate(), Err(ScenarioError::BadWeight(_))));
    }

    proptest! {
        #[test]
        fn normalize_endpoints_and_order(xs in proptest::collection::vec(-1e6f64..1e6, 2..50)) {
            let n = min_max_normalize(&xs).unwrap();
            let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (x, v) in xs.iter().zip(&n) {
                prop_assert!((0.0..=1.0).contains(v));
                if min < max {
                    if *x == min { prop_assert_eq!(*v, 0.0); }
                    if *x == max { prop_assert_eq!(*v, 1.0); }
                }
            }
            for i in 0..xs.len() {
                for j in 0..xs.len() {
                    if xs[i] < xs[j] { prop_assert!(n[i] <= n[j]); }
                }
            }
        }

        #[test]
        fn fewer_tokens_larger_t(tokens in proptest::collection::vec(0u32..10_000, 2..40)) {
            let recs: Vec<CostRecord> = tokens.iter().map(|t| rec(true, 1.0, *t as f64)).collect();
            let c = ait_components(&recs).unwrap();
            for i in 0..tokens.len() {
                for j in 0..tokens.len() {
                    if tokens[i] < tokens[j] { prop_assert!(c[i].t > c[j].t); }
                }
            }
        }

        #[test]
        fn score_monotone(a in 0u8..2, i in 0.0f64..1.0, t in 0.0f64..1.0, d in 0.0f64..0.5, k in 0usize..5) {
            let s = &scenario_presets()[k];
            let base = AitComponents { a: a as f64, i, t };
            let more_i = AitComponents { i: (i + d).min(1.0), ..base };
            let more_t = AitComponents { t: (t + d).min(1.0), ..base };
            let more_a = AitComponents { a: 1.0, ..base };
            prop_assert!(ait_score(&more_i, s) >= ait_score(&base, s));
            prop_assert!(ait_score(&more_t, s) >= ait_score(&base, s));
            prop_assert!(ait_score(&more_a, s) >= ait_score(&base, s));
        }
    }
}
