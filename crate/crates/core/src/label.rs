//! The three-branch labeling rule, corpus statistics, and the binary
//! training view.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DualProbeRecord, LabeledQuestion, ModeKind, QuestionLabel, QuestionRecord, Source};
use crate::stats::Summary;

/// Which branch of the labeling rule fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleBranch {
    ThinkingOnlyCorrect,
    NonThinkingOnlyCorrect,
    BothCorrect,
    NeitherCorrect,
}

pub fn rule_branch(probe: &DualProbeRecord) -> RuleBranch {
    match (probe.thinking.correct, probe.non_thinking.correct) {
        (true, false) => RuleBranch::ThinkingOnlyCorrect,
        (false, true) => RuleBranch::NonThinkingOnlyCorrect,
        (true, true) => RuleBranch::BothCorrect,
        (false, false) => RuleBranch::NeitherCorrect,
    }
}

/// Labels a probed question.
///
/// When both modes are correct the question is `thinking` only if thinking
/// mode used strictly fewer tokens AND strictly less time; any other cost
/// relation (including ties) yields `non_thinking`.
pub fn label_question(probe: &DualProbeRecord) -> QuestionLabel {
    match rule_branch(probe) {
        RuleBranch::ThinkingOnlyCorrect => QuestionLabel::Thinking,
        RuleBranch::NonThinkingOnlyCorrect => QuestionLabel::NonThinking,
        RuleBranch::BothCorrect => {
            let t = &probe.thinking;
            let nt = &probe.non_thinking;
            if t.completion_tokens < nt.completion_tokens && t.latency_ms < nt.latency_ms {
                QuestionLabel::Thinking
            } else {
                QuestionLabel::NonThinking
            }
        }
        RuleBranch::NeitherCorrect => QuestionLabel::Fail,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LabelCounts {
    pub thinking: usize,
    pub non_thinking: usize,
    pub fail: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.thinking + self.non_thinking + self.fail
    }

    pub fn get(&self, label: QuestionLabel) -> usize {
        match label {
            QuestionLabel::Thinking => self.thinking,
            QuestionLabel::NonThinking => self.non_thinking,
            QuestionLabel::Fail => self.fail,
        }
    }

    fn bump(&mut self, label: QuestionLabel) {
        match label {
            QuestionLabel::Thinking => self.thinking += 1,
            QuestionLabel::NonThinking => self.non_thinking += 1,
            QuestionLabel::Fail => self.fail += 1,
        }
    }

    /// Shares in percent; all zero for an empty count.
    pub fn percentages(&self) -> LabelPercentages {
        let n = self.total();
        let pct = |c: usize| if n == 0 { 0.0 } else { c as f64 * 100.0 / n as f64 };
        LabelPercentages {
            thinking: pct(self.thinking),
            non_thinking: pct(self.non_thinking),
            fail: pct(self.fail),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LabelPercentages {
    pub thinking: f64,
    pub non_thinking: f64,
    pub fail: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ModeCostSummary {
    pub tokens: Summary,
    pub latency_ms: Summary,
}

/// Label distribution and per-mode cost summaries of a labeled corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LabelingStats {
    pub total: usize,
    pub counts: LabelCounts,
    pub percentages: LabelPercentages,
    pub per_source: BTreeMap<Source, LabelCounts>,
    pub thinking: ModeCostSummary,
    pub non_thinking: ModeCostSummary,
}

impl LabelingStats {
    pub fn compute(records: &[LabeledQuestion]) -> Self {
        let mut counts = LabelCounts::default();
        let mut per_source: BTreeMap<Source, LabelCounts> = BTreeMap::new();
        for r in records {
            counts.bump(r.label);
            per_source.entry(r.question.source).or_default().bump(r.label);
        }
        let cost = |mode: ModeKind| {
            let tokens: Vec<f64> =
                records.iter().map(|r| r.probe.outcome(mode).completion_tokens as f64).collect();
            let latency: Vec<f64> = records.iter().map(|r| r.probe.outcome(mode).latency_ms as f64).collect();
            ModeCostSummary { tokens: Summary::of(&tokens), latency_ms: Summary::of(&latency) }
        };
        Self {
            total: records.len(),
            counts,
            percentages: counts.percentages(),
            per_source,
            thinking: cost(ModeKind::Thinking),
            non_thinking: cost(ModeKind::NonThinking),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrainingViewError {
    #[error("no thinking/non-thinking records remain after dropping fail labels")]
    EmptyAfterFilter,
}

/// Drops `fail` records and maps `thinking` to 1, `non_thinking` to 0.
pub fn training_view(labeled: &[LabeledQuestion]) -> Result<Vec<(QuestionRecord, u8)>, TrainingViewError> {
    let rows: Vec<(QuestionRecord, u8)> = labeled
        .iter()
        .filter_map(|lq| match lq.label {
            QuestionLabel::Thinking => Some((lq.question.clone(), 1)),
            QuestionLabel::NonThinking => Some((lq.question.clone(), 0)),
            QuestionLabel::Fail => None,
        })
        .collect();
    if rows.is_empty() {
        return Err(TrainingViewError::EmptyAfterFilter);
    }
    Ok(rows)
}
