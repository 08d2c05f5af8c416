//! Dataset and probing records shared by every stage of the pipeline.

use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on the number of answer options in a standardized record.
pub const MAX_OPTIONS: usize = 5;

/// Answer option letter. Standardized records only ever use `A`..=`E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OptionLetter {
    A,
    B,
    C,
    D,
    E,
}

impl OptionLetter {
    pub const ALL: [OptionLetter; MAX_OPTIONS] = [
        OptionLetter::A,
        OptionLetter::B,
        OptionLetter::C,
        OptionLetter::D,
        OptionLetter::E,
    ];

    /// Zero-based position of the letter (`A` is 0).
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }

    /// Case-insensitive conversion from a single character.
    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(Self::A),
            'B' => Some(Self::B),
            'C' => Some(Self::C),
            'D' => Some(Self::D),
            'E' => Some(Self::E),
            _ => None,
        }
    }

    /// The first `n` letters (`A`, `B`, ...), capped at `E`.
    pub fn first(n: usize) -> &'static [OptionLetter] {
        &Self::ALL[..n.min(MAX_OPTIONS)]
    }
}

impl fmt::Display for OptionLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Dataset a question was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Usmle,
    Medmcqa,
    Pubmedqa,
    Careqa,
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Usmle => "usmle",
            Source::Medmcqa => "medmcqa",
            Source::Pubmedqa => "pubmedqa",
            Source::Careqa => "careqa",
            Source::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Source {
    type Err = UnknownSource;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "usmle" | "medqa" => Ok(Source::Usmle),
            "medmcqa" => Ok(Source::Medmcqa),
            "pubmedqa" => Ok(Source::Pubmedqa),
            "careqa" => Ok(Source::Careqa),
            "synthetic" => Ok(Source::Synthetic),
            _ => Err(UnknownSource(s.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown question source `{0}`")]
pub struct UnknownSource(pub String);

/// One standardized multiple-choice item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub source: Source,
    pub stem: String,
    pub options: BTreeMap<OptionLetter, String>,
    pub gold: OptionLetter,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("record has an empty id")]
    EmptyId,
    #[error("record {id} has {count} options, expected 2..=5")]
    OptionCount { id: String, count: usize },
    #[error("record {id} option letters are not consecutive from A")]
    NonConsecutiveOptions { id: String },
    #[error("record {id} gold {gold} is not one of its options")]
    GoldNotInOptions { id: String, gold: OptionLetter },
}

impl QuestionRecord {
    /// Checks the record-level invariants (option count, lettering, gold).
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.id.is_empty() {
            return Err(RecordError::EmptyId);
        }
        let count = self.options.len();
        if !(2..=MAX_OPTIONS).contains(&count) {
            return Err(RecordError::OptionCount { id: self.id.clone(), count });
        }
        if !self.options.keys().copied().eq(OptionLetter::first(count).iter().copied()) {
            return Err(RecordError::NonConsecutiveOptions { id: self.id.clone() });
        }
        if !self.options.contains_key(&self.gold) {
            return Err(RecordError::GoldNotInOptions { id: self.id.clone(), gold: self.gold });
        }
        Ok(())
    }

    /// Option letters this question accepts as an answer.
    pub fn letters(&self) -> impl Iterator<Item = OptionLetter> + '_ {
        self.options.keys().copied()
    }
}

/// Inference mode of a dual-mode model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Thinking,
    NonThinking,
}

impl ModeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeKind::Thinking => "thinking",
            ModeKind::NonThinking => "non_thinking",
        }
    }

    pub fn is_thinking(self) -> bool {
        self == ModeKind::Thinking
    }
}

impl fmt::Display for ModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for ModeKind {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "thinking" => Ok(ModeKind::Thinking),
            "non_thinking" | "non-thinking" => Ok(ModeKind::NonThinking),
            _ => Err(UnknownMode(s.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mode `{0}` (expected thinking or non_thinking)")]
pub struct UnknownMode(pub String);

/// Result of asking the model one question in one mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceOutcome {
    pub mode: ModeKind,
    pub raw_output: String,
    pub parsed_answer: Option<OptionLetter>,
    pub correct: bool,
    /// Completion tokens reported by the backend, reasoning text included.
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

impl InferenceOutcome {
    /// Builds an outcome, deriving `correct` from the parsed answer and gold.
    pub fn new(
        mode: ModeKind,
        raw_output: String,
        parsed_answer: Option<OptionLetter>,
        gold: Option<OptionLetter>,
        completion_tokens: u64,
        latency_ms: u64,
    ) -> Self {
        let correct = matches!((parsed_answer, gold), (Some(p), Some(g)) if p == g);
        Self { mode, raw_output, parsed_answer, correct, completion_tokens, latency_ms }
    }
}

/// Outcomes of both modes for one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualProbeRecord {
    pub question_id: String,
    pub thinking: InferenceOutcome,
    pub non_thinking: InferenceOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProbeError {
    #[error("probe {0}: thinking slot holds a non-thinking outcome")]
    ThinkingSlot(String),
    #[error("probe {0}: non-thinking slot holds a thinking outcome")]
    NonThinkingSlot(String),
}

impl DualProbeRecord {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.thinking.mode != ModeKind::Thinking {
            return Err(ProbeError::ThinkingSlot(self.question_id.clone()));
        }
        if self.non_thinking.mode != ModeKind::NonThinking {
            return Err(ProbeError::NonThinkingSlot(self.question_id.clone()));
        }
        Ok(())
    }

    pub fn outcome(&self, mode: ModeKind) -> &InferenceOutcome {
        match mode {
            ModeKind::Thinking => &self.thinking,
            ModeKind::NonThinking => &self.non_thinking,
        }
    }
}

/// Annotation assigned by the labeling rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionLabel {
    Thinking,
    NonThinking,
    Fail,
}

impl QuestionLabel {
    pub const ALL: [QuestionLabel; 3] =
        [QuestionLabel::Thinking, QuestionLabel::NonThinking, QuestionLabel::Fail];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionLabel::Thinking => "thinking",
            QuestionLabel::NonThinking => "non_thinking",
            QuestionLabel::Fail => "fail",
        }
    }
}

impl fmt::Display for QuestionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A question with both probe outcomes and its label. On disk the question
/// fields sit at the top level next to `probe` and `label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledQuestion {
    #[serde(flatten)]
    pub question: QuestionRecord,
    pub probe: DualProbeRecord,
    pub label: QuestionLabel,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn record(letters: &[OptionLetter], gold: OptionLetter) -> QuestionRecord {
        QuestionRecord {
            id: "q1".into(),
            source: Source::Usmle,
            stem: "stem".into(),
            options: letters.iter().map(|l| (*l, l.to_string())).collect(),
            gold,
        }
    }

    #[test]
    fn letter_roundtrip() {
        for (i, l) in OptionLetter::ALL.iter().enumerate() {
            assert_eq!(OptionLetter::from_index(i), Some(*l));
            assert_eq!(OptionLetter::from_char(l.as_char()), Some(*l));
            assert_eq!(OptionLetter::from_char(l.as_char().to_ascii_lowercase()), Some(*l));
        }
        assert_eq!(OptionLetter::from_index(5), None);
        assert_eq!(OptionLetter::from_char('F'), None);
    }

    #[test]
    fn validate_checks_invariants() {
        use OptionLetter::*;
        assert!(record(&[A, B], B).validate().is_ok());
        assert!(record(&[A, B, C, D, E], E).validate().is_ok());
        assert!(matches!(record(&[A], A).validate(), Err(RecordError::OptionCount { .. })));
        assert!(matches!(
            record(&[A, C], A).validate(),
            Err(RecordError::NonConsecutiveOptions { .. })
        ));
        assert!(matches!(record(&[A, B], C).validate(), Err(RecordError::GoldNotInOptions { .. })));
    }

    #[test]
    fn mode_serializes_as_snake_case() {
        assert_eq!(serde_json::to_string(&ModeKind::Thinking).unwrap(), "\"thinking\"");
        assert_eq!(serde_json::to_string(&ModeKind::NonThinking).unwrap(), "\"non_thinking\"");
        assert_eq!(serde_json::to_string(&QuestionLabel::Fail).unwrap(), "\"fail\"");
    }

    #[test]
    fn correctness_requires_parsed_answer() {
        let o = InferenceOutcome::new(ModeKind::Thinking, "".into(), None, Some(OptionLetter::A), 3, 1);
        assert!(!o.correct);
        let o = InferenceOutcome::new(
            ModeKind::Thinking,
            "A".into(),
            Some(OptionLetter::A),
            Some(OptionLetter::A),
            3,
            1,
        );
        assert!(o.correct);
    }

    #[test]
    fn labeled_question_json_is_flat() {
        use OptionLetter::*;
        let q = record(&[A, B, C], C);
        let outcome = |mode| InferenceOutcome::new(mode, "C".into(), Some(C), Some(C), 5, 10);
        let lq = LabeledQuestion {
            probe: DualProbeRecord {
                question_id: q.id.clone(),
                thinking: outcome(ModeKind::Thinking),
                non_thinking: outcome(ModeKind::NonThinking),
            },
            question: q,
            label: QuestionLabel::NonThinking,
        };
        let json = serde_json::to_value(&lq).unwrap();
        assert_eq!(json["id"], "q1");
        assert_eq!(json["options"]["C"], "C");
        assert_eq!(json["label"], "non_thinking");
        let back: LabeledQuestion = serde_json::from_value(json).unwrap();
        assert_eq!(back, lq);
    }
}
