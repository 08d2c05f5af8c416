//! Routing decisions.

use serde::{Deserialize, Serialize};

use crate::domain::ModeKind;
use crate::embedding::ContentDigest;

/// Thinking iff `probability >= threshold`.
pub fn decide(probability: f64, threshold: f64) -> ModeKind {
    if probability >= threshold {
        ModeKind::Thinking
    } else {
        ModeKind::NonThinking
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub question_hash: ContentDigest,
    /// `None` when scoring failed and the fallback mode was used.
    pub probability_thinking: Option<f64>,
    pub threshold: f64,
    pub chosen_mode: ModeKind,
    pub fallback_used: bool,
    pub decision_latency_ms: u64,
}

impl RouteDecision {
    pub fn scored(question_hash: ContentDigest, probability: f64, threshold: f64, decision_latency_ms: u64) -> Self {
        Self {
            question_hash,
            probability_thinking: Some(probability),
            threshold,
            chosen_mode: decide(probability, threshold),
            fallback_used: false,
            decision_latency_ms,
        }
    }

    pub fn fallback(question_hash: ContentDigest, threshold: f64, mode: ModeKind, decision_latency_ms: u64) -> Self {
        Self {
            question_hash,
            probability_thinking: None,
            threshold,
            chosen_mode: mode,
            fallback_used: true,
            decision_latency_ms,
        }
    }

    /// Whether the decision agrees with its own probability and threshold.
    pub fn is_consistent(&self) -> bool {
        match self.probability_thinking {
            Some(p) if !self.fallback_used => decide(p, self.threshold) == self.chosen_mode,
            _ => self.fallback_used,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_closed_on_thinking_side() {
        assert_eq!(decide(0.9, 0.5), ModeKind::Thinking);
        assert_eq!(decide(0.2, 0.5), ModeKind::NonThinking);
        assert_eq!(decide(0.5, 0.5), ModeKind::Thinking);
        assert_eq!(decide(0.98, 0.99), ModeKind::NonThinking);
    }

    #[test]
    fn constructors_are_consistent() {
        let h = ContentDigest([7; 32]);
        assert!(RouteDecision::scored(h, 0.3, 0.4, 1).is_consistent());
        let f = RouteDecision::fallback(h, 0.4, ModeKind::Thinking, 1);
        assert!(f.is_consistent());
        assert_eq!(f.probability_thinking, None);
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<RouteDecision>(&json).unwrap(), f);
    }
}
