//! Conversion of source-specific records into [`QuestionRecord`]s.
//!
//! Option keys are re-lettered `A..` in their original order. PubMedQA
//! items always get the fixed options `A: yes`, `B: no`, `C: maybe`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{OptionLetter, QuestionRecord, Source, MAX_OPTIONS};

const PUBMEDQA_OPTIONS: [&str; 3] = ["yes", "no", "maybe"];

/// How the raw record identifies its correct answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawGold {
    /// Key of the correct candidate, e.g. `"b"` or `"B"`.
    Key(String),
    /// Zero-based position among the candidates.
    Index(usize),
    /// Text of the correct candidate (PubMedQA: `yes` / `no` / `maybe`).
    Text(String),
}

/// Source-agnostic intermediate form produced by the per-dataset readers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawQuestion {
    pub id: String,
    pub source: Source,
    pub stem: String,
    /// `(key, text)` pairs in the order the dataset lists them.
    pub candidates: Vec<(String, String)>,
    pub gold: Option<RawGold>,
}

impl From<QuestionRecord> for RawQuestion {
    fn from(q: QuestionRecord) -> Self {
        RawQuestion {
            id: q.id,
            source: q.source,
            stem: q.stem,
            candidates: q.options.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            gold: Some(RawGold::Key(q.gold.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MalformedReason {
    EmptyId,
    EmptyStem,
    TooFewOptions(usize),
    TooManyOptions(usize),
    MissingGold,
    GoldNotAmongCandidates,
    UnknownPubmedqaAnswer(String),
}

impl fmt::Display for MalformedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MalformedReason::EmptyId => f.write_str("empty id"),
            MalformedReason::EmptyStem => f.write_str("empty question stem"),
            MalformedReason::TooFewOptions(n) => write!(f, "{n} answer candidates (need at least 2)"),
            MalformedReason::TooManyOptions(n) => {
                write!(f, "{n} answer candidates (at most {MAX_OPTIONS} supported)")
            }
            MalformedReason::MissingGold => f.write_str("missing gold answer"),
            MalformedReason::GoldNotAmongCandidates => f.write_str("gold answer is not among the candidates"),
            MalformedReason::UnknownPubmedqaAnswer(a) => {
                write!(f, "PubMedQA answer `{a}` is not yes/no/maybe")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StandardizeError {
    #[error("malformed record `{id}`: {reason}")]
    MalformedRecord { id: String, reason: MalformedReason },
}

fn malformed(id: &str, reason: MalformedReason) -> StandardizeError {
    StandardizeError::MalformedRecord { id: id.into(), reason }
}

/// Standardizes one raw record. Idempotent on its own output via
/// `RawQuestion::from(QuestionRecord)`.
pub fn standardize_record(raw: RawQuestion) -> Result<QuestionRecord, StandardizeError> {
    if raw.id.trim().is_empty() {
        return Err(malformed(&raw.id, MalformedReason::EmptyId));
    }
    if raw.stem.trim().is_empty() {
        return Err(malformed(&raw.id, MalformedReason::EmptyStem));
    }
    let gold = raw.gold.as_ref().ok_or_else(|| malformed(&raw.id, MalformedReason::MissingGold))?;

    if raw.source == Source::Pubmedqa {
        return standardize_pubmedqa(&raw, gold);
    }

    let count = raw.candidates.len();
    if count < 2 {
        return Err(malformed(&raw.id, MalformedReason::TooFewOptions(count)));
    }
    if count > MAX_OPTIONS {
        return Err(malformed(&raw.id, MalformedReason::TooManyOptions(count)));
    }
    let position = gold_position(&raw.candidates, gold)
        .ok_or_else(|| malformed(&raw.id, MalformedReason::GoldNotAmongCandidates))?;

    let options = raw
        .candidates
        .into_iter()
        .enumerate()
        .map(|(i, (_, text))| (OptionLetter::ALL[i], text))
        .collect();
    Ok(QuestionRecord {
        id: raw.id,
        source: raw.source,
        stem: raw.stem,
        options,
        gold: OptionLetter::ALL[position],
    })
}

fn gold_position(candidates: &[(String, String)], gold: &RawGold) -> Option<usize> {
    match gold {
        RawGold::Key(key) => {
            let key = key.trim();
            candidates.iter().position(|(k, _)| k.trim().eq_ignore_ascii_case(key))
        }
        RawGold::Index(i) => (*i < candidates.len()).then_some(*i),
        RawGold::Text(text) => {
            let text = text.trim();
            candidates.iter().position(|(_, t)| t.trim() == text)
        }
    }
}

fn standardize_pubmedqa(raw: &RawQuestion, gold: &RawGold) -> Result<QuestionRecord, StandardizeError> {
    let answer: String = match gold {
        RawGold::Text(t) => t.clone(),
        RawGold::Key(k) => match gold_position(&raw.candidates, gold) {
            Some(i) => raw.candidates[i].1.clone(),
            None => k.clone(),
        },
        RawGold::Index(i) => match raw.candidates.get(*i) {
            Some((_, t)) => t.clone(),
            None => PUBMEDQA_OPTIONS
                .get(*i)
                .map(|s| String::from(*s))
                .ok_or_else(|| malformed(&raw.id, MalformedReason::GoldNotAmongCandidates))?,
        },
    };
    let normalized = answer.trim().to_ascii_lowercase();
    let position = PUBMEDQA_OPTIONS
        .iter()
        .position(|o| *o == normalized)
        .ok_or_else(|| malformed(&raw.id, MalformedReason::UnknownPubmedqaAnswer(answer.clone())))?;
    Ok(QuestionRecord {
        id: raw.id.clone(),
        source: Source::Pubmedqa,
        stem: raw.stem.clone(),
        options: PUBMEDQA_OPTIONS
            .iter()
            .enumerate()
            .map(|(i, o)| (OptionLetter::ALL[i], String::from(*o)))
            .collect(),
        gold: OptionLetter::ALL[position],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn raw(source: Source, candidates: &[(&str, &str)], gold: Option<RawGold>) -> RawQuestion {
        RawQuestion {
            id: "r1".into(),
            source,
            stem: "What is it?".into(),
            candidates: candidates.iter().map(|(k, v)| ((*k).into(), (*v).into())).collect(),
            gold,
        }
    }

    #[test]
    fn pubmedqa_maybe_maps_to_c() {
        let q = standardize_record(raw(Source::Pubmedqa, &[], Some(RawGold::Text("maybe".into())))).unwrap();
        assert_eq!(q.gold, OptionLetter::C);
        assert_eq!(q.options.len(), 3);
        assert_eq!(q.options[&OptionLetter::A], "yes");
        assert_eq!(q.options[&OptionLetter::B], "no");
        assert_eq!(q.options[&OptionLetter::C], "maybe");
        let q = standardize_record(raw(Source::Pubmedqa, &[], Some(RawGold::Text("Yes".into())))).unwrap();
        assert_eq!(q.gold, OptionLetter::A);
    }

    #[test]
    fn pubmedqa_rejects_other_answers() {
        let err = standardize_record(raw(Source::Pubmedqa, &[], Some(RawGold::Text("perhaps".into()))));
        assert!(matches!(
            err,
            Err(StandardizeError::MalformedRecord { reason: MalformedReason::UnknownPubmedqaAnswer(_), .. })
        ));
    }

    #[test]
    fn lowercase_keys_are_uppercased() {
        let q = standardize_record(raw(
            Source::Usmle,
            &[("a", "one"), ("b", "two"), ("c", "three"), ("d", "four")],
            Some(RawGold::Key("c".into())),
        ))
        .unwrap();
        let keys: Vec<_> = q.options.keys().copied().collect();
        assert_eq!(keys, vec![OptionLetter::A, OptionLetter::B, OptionLetter::C, OptionLetter::D]);
        assert_eq!(q.options[&OptionLetter::D], "four");
        assert_eq!(q.gold, OptionLetter::C);
    }

    #[test]
    fn keys_are_relettered_in_order() {
        let q = standardize_record(raw(
            Source::Medmcqa,
            &[("opa", "x"), ("opb", "y"), ("opc", "z")],
            Some(RawGold::Index(1)),
        ))
        .unwrap();
        assert_eq!(q.options[&OptionLetter::A], "x");
        assert_eq!(q.gold, OptionLetter::B);
    }

    #[test]
    fn six_options_rejected() {
        let six: Vec<(&str, &str)> =
            vec![("A", "1"), ("B", "2"), ("C", "3"), ("D", "4"), ("E", "5"), ("F", "6")];
        let err = standardize_record(raw(Source::Careqa, &six, Some(RawGold::Key("A".into()))));
        assert!(matches!(
            err,
            Err(StandardizeError::MalformedRecord { reason: MalformedReason::TooManyOptions(6), .. })
        ));
    }

    #[test]
    fn missing_or_foreign_gold_rejected() {
        let err = standardize_record(raw(Source::Usmle, &[("A", "1"), ("B", "2")], None));
        assert!(matches!(
            err,
            Err(StandardizeError::MalformedRecord { reason: MalformedReason::MissingGold, .. })
        ));
        let err = standardize_record(raw(Source::Usmle, &[("A", "1"), ("B", "2")], Some(RawGold::Key("C".into()))));
        assert!(matches!(
            err,
            Err(StandardizeError::MalformedRecord { reason: MalformedReason::GoldNotAmongCandidates, .. })
        ));
        let err = standardize_record(raw(Source::Usmle, &[("A", "1"), ("B", "2")], Some(RawGold::Index(2))));
        assert!(err.is_err());
    }

    #[test]
    fn gold_by_text() {
        let q = standardize_record(raw(
            Source::Usmle,
            &[("A", "Aspirin"), ("B", "Heparin")],
            Some(RawGold::Text("Heparin".into())),
        ))
        .unwrap();
        assert_eq!(q.gold, OptionLetter::B);
    }

    fn arb_raw() -> impl Strategy<Value = RawQuestion> {
        (
            prop_oneof![
                Just(Source::Usmle),
                Just(Source::Medmcqa),
                Just(Source::Pubmedqa),
                Just(Source::Careqa),
            ],
            "[a-z]{1,12}",
            proptest::collection::vec("[a-z ]{0,10}", 2..=5),
            0usize..5,
            0usize..3,
        )
            .prop_map(|(source, stem, texts, gold, pm)| {
                let n = texts.len();
                let candidates = texts
                    .into_iter()
                    .enumerate()
                    .map(|(i, t)| (String::from((b'a' + i as u8) as char), t))
                    .collect();
                let gold = if source == Source::Pubmedqa {
                    RawGold::Text(String::from(PUBMEDQA_OPTIONS[pm]))
                } else {
                    RawGold::Index(gold % n)
                };
                RawQuestion { id: "p".into(), source, stem, candidates, gold: Some(gold) }
            })
    }

    proptest! {
        #[test]
        fn idempotent(raw in arb_raw()) {
            let once = standardize_record(raw).unwrap();
            once.validate().unwrap();
            let twice = standardize_record(RawQuestion::from(once.clone())).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
