//! Side-by-side evaluation of non-thinking, thinking and dynamic runs.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ait::{ait_components, ait_score, scenario_presets, AitError, AitScenario, CostRecord, ScenarioError};
use crate::bootstrap::{bootstrap_mean_ci, BootstrapError, BootstrapResult, DEFAULT_CONFIDENCE, DEFAULT_ITERATIONS};
use crate::domain::{InferenceOutcome, ModeKind, OptionLetter};
use crate::metrics::{classification_report, MetricReport, MetricsError};
use crate::stats::mean;

/// One answered question in a per-mode run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeLogRecord {
    pub question_id: String,
    /// Mode that actually answered (for dynamic runs, the routed mode).
    pub mode: ModeKind,
    pub gold: Option<OptionLetter>,
    pub parsed_answer: Option<OptionLetter>,
    pub correct: bool,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

impl ModeLogRecord {
    pub fn from_outcome(question_id: impl Into<String>, gold: Option<OptionLetter>, outcome: &InferenceOutcome) -> Self {
        Self {
            question_id: question_id.into(),
            mode: outcome.mode,
            gold,
            parsed_answer: outcome.parsed_answer,
            correct: outcome.correct,
            completion_tokens: outcome.completion_tokens,
            latency_ms: outcome.latency_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("run logs do not cover the same question ids: {0}")]
    IdMismatch(String),
    #[error("question `{0}` has no gold answer")]
    MissingGold(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Ait(#[from] AitError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub iterations: usize,
    pub confidence: f64,
    pub seed: u64,
    pub scenarios: Vec<AitScenario>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            confidence: DEFAULT_CONFIDENCE,
            seed: 42,
            scenarios: scenario_presets(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: AitScenario,
    pub ait: BootstrapResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub name: String,
    pub n: usize,
    pub metrics: MetricReport,
    pub mean_latency_ms: f64,
    pub mean_tokens: f64,
    /// Share of questions answered in thinking mode.
    pub thinking_share: f64,
    pub ait: Vec<ScenarioResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_questions: usize,
    pub modes: Vec<ModeReport>,
    /// Relative reduction of dynamic mean tokens against thinking mode.
    pub token_reduction_vs_thinking: f64,
    pub latency_reduction_vs_thinking: f64,
    pub accuracy_gain_vs_thinking: f64,
}

impl EvalReport {
    pub fn mode(&self, name: &str) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.name == name)
    }
}

pub const MODE_NAMES: [&str; 3] = ["non_thinking", "thinking", "dynamic"];

fn id_set(log: &[ModeLogRecord]) -> Result<BTreeMap<&str, &ModeLogRecord>, EvalError> {
    let mut map = BTreeMap::new();
    for r in log {
        if map.insert(r.question_id.as_str(), r).is_some() {
            return Err(EvalError::IdMismatch(alloc::format!("duplicate id `{}`", r.question_id)));
        }
    }
    Ok(map)
}

/// Metrics, mean costs and per-scenario AIT with bootstrap intervals for the
/// three runs. Costs are normalized over the union of all three logs and
/// every mode is resampled with the same seed.
pub fn evaluate_modes(
    non_thinking: &[ModeLogRecord],
    thinking: &[ModeLogRecord],
    dynamic: &[ModeLogRecord],
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    for s in &options.scenarios {
        s.validate()?;
    }
    let base = id_set(non_thinking)?;
    let aligned: Vec<Vec<&ModeLogRecord>> = [non_thinking, thinking, dynamic]
        .iter()
        .zip(MODE_NAMES)
        .map(|(log, name)| {
            let map = id_set(log)?;
            if map.len() != base.len() || map.keys().zip(base.keys()).any(|(a, b)| a != b) {
                return Err(EvalError::IdMismatch(alloc::format!("`{name}` log differs from `non_thinking`")));
            }
            Ok(base.keys().map(|id| map[id]).collect())
        })
        .collect::<Result<_, _>>()?;

    let population: Vec<CostRecord> = aligned
        .iter()
        .flatten()
        .map(|r| CostRecord {
            correct: r.correct,
            latency_ms: r.latency_ms as f64,
            completion_tokens: r.completion_tokens as f64,
        })
        .collect();
    let components = ait_components(&population)?;
    let n = base.len();

    let mut modes = Vec::with_capacity(3);
    for (k, (records, name)) in aligned.iter().zip(MODE_NAMES).enumerate() {
        let golds: Vec<OptionLetter> = records
            .iter()
            .map(|r| r.gold.ok_or_else(|| EvalError::MissingGold(r.question_id.clone())))
            .collect::<Result<_, _>>()?;
        let preds: Vec<Option<OptionLetter>> = records.iter().map(|r| r.parsed_answer).collect();
        let metrics = classification_report(&preds, &golds)?;
        let latency: Vec<f64> = records.iter().map(|r| r.latency_ms as f64).collect();
        let tokens: Vec<f64> = records.iter().map(|r| r.completion_tokens as f64).collect();
        let thinking_count = records.iter().filter(|r| r.mode.is_thinking()).count();
        let own = &components[k * n..(k + 1) * n];
        let mut ait = Vec::with_capacity(options.scenarios.len());
        for scenario in &options.scenarios {
            let values: Vec<f64> = own.iter().map(|c| ait_score(c, scenario)).collect();
            let result = bootstrap_mean_ci(&values, options.iterations, options.confidence, options.seed)?;
            ait.push(ScenarioResult { scenario: scenario.clone(), ait: result });
        }
        modes.push(ModeReport {
            name: name.into(),
            n,
            metrics,
            mean_latency_ms: mean(&latency),
            mean_tokens: mean(&tokens),
            thinking_share: thinking_count as f64 / n.max(1) as f64,
            ait,
        });
    }
    let reduction = |dynamic: f64, thinking: f64| if thinking == 0.0 { 0.0 } else { 1.0 - dynamic / thinking };
    Ok(EvalReport {
        n_questions: n,
        token_reduction_vs_thinking: reduction(modes[2].mean_tokens, modes[1].mean_tokens),
        latency_reduction_vs_thinking: reduction(modes[2].mean_latency_ms, modes[1].mean_latency_ms),
        accuracy_gain_vs_thinking: modes[2].metrics.accuracy - modes[1].metrics.accuracy,
        modes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn log(mode: ModeKind, n: usize, correct: impl Fn(usize) -> bool, tokens: u64, latency: u64) -> Vec<ModeLogRecord> {
        (0..n)
            .map(|i| {
                let gold = OptionLetter::from_index(i % 4).unwrap();
                let ok = correct(i);
                let parsed = if ok { gold } else { OptionLetter::from_index((i + 1) % 4).unwrap() };
                ModeLogRecord {
                    question_id: format!("q{i}"),
                    mode,
                    gold: Some(gold),
                    parsed_answer: Some(parsed),
                    correct: ok,
                    completion_tokens: tokens + (i as u64 % 3),
                    latency_ms: latency + (i as u64 % 5) * 10,
                }
            })
            .collect()
    }

    fn options() -> EvalOptions {
        EvalOptions { iterations: 200, ..Default::default() }
    }

    #[test]
    fn dynamic_equal_to_thinking_gives_equal_rows() {
        let nt = log(ModeKind::NonThinking, 40, |i| i % 2 == 0, 5, 1000);
        let t = log(ModeKind::Thinking, 40, |i| i % 5 != 0, 800, 17_000);
        let r = evaluate_modes(&nt, &t, &t, &options()).unwrap();
        let (a, b) = (&r.modes[1], &r.modes[2]);
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.ait, b.ait);
        assert_eq!(r.token_reduction_vs_thinking, 0.0);
        assert_eq!(b.thinking_share, 1.0);
    }

    #[test]
    fn constant_costs_reduce_to_accuracy_difference() {
        let nt = log(ModeKind::NonThinking, 30, |i| i % 3 == 0, 0, 0);
        let t = log(ModeKind::Thinking, 30, |i| i % 3 != 0, 0, 0);
        let strip = |mut v: Vec<ModeLogRecord>| {
            for r in &mut v {
                r.completion_tokens = 7;
                r.latency_ms = 900;
            }
            v
        };
        let (nt, t) = (strip(nt), strip(t));
        let r = evaluate_modes(&nt, &t, &t, &options()).unwrap();
        let acc_diff = r.modes[1].metrics.accuracy - r.modes[0].metrics.accuracy;
        for (s0, s1) in r.modes[0].ait.iter().zip(&r.modes[1].ait) {
            let diff = s1.ait.mean - s0.ait.mean;
            assert!((diff - s0.scenario.a * acc_diff).abs() < 1e-12);
        }
    }

    #[test]
    fn id_mismatch_detected() {
        let nt = log(ModeKind::NonThinking, 5, |_| true, 5, 1000);
        let t = log(ModeKind::Thinking, 4, |_| true, 800, 17_000);
        assert!(matches!(evaluate_modes(&nt, &t, &nt, &options()), Err(EvalError::IdMismatch(_))));
        let mut dup = nt.clone();
        dup[1].question_id = "q0".into();
        assert!(matches!(evaluate_modes(&nt, &nt, &dup, &options()), Err(EvalError::IdMismatch(_))));
    }

    #[test]
    fn order_of_logs_does_not_matter() {
        let nt = log(ModeKind::NonThinking, 12, |i| i % 2 == 0, 5, 1000);
        let t = log(ModeKind::Thinking, 12, |i| i % 4 != 0, 800, 17_000);
        let mut shuffled = t.clone();
        shuffled.reverse();
        let a = evaluate_modes(&nt, &t, &t, &options()).unwrap();
        let b = evaluate_modes(&nt, &shuffled, &t, &options()).unwrap();
        assert_eq!(a, b);
    }
}
