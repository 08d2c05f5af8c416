//! Multiclass classification report over answer letters.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::OptionLetter;

/// Predicted-class name for unparseable outputs.
pub const NO_ANSWER: &str = "no_answer";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("{predictions} predictions vs {golds} gold labels")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("no instances to score")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub n: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy and macro/weighted precision, recall and F1 over gold classes.
/// Absent predictions count as a separate, always-wrong class.
pub fn classification_report(
    predictions: &[Option<OptionLetter>],
    golds: &[OptionLetter],
) -> Result<MetricReport, MetricsError> {
    if predictions.len() != golds.len() {
        return Err(MetricsError::LengthMismatch { predictions: predictions.len(), golds: golds.len() });
    }
    if golds.is_empty() {
        return Err(MetricsError::Empty);
    }
    // (true positives, predicted support, gold support)
    let mut counts: BTreeMap<OptionLetter, (usize, usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for (pred, gold) in predictions.iter().zip(golds) {
        counts.entry(*gold).or_default().2 += 1;
        if let Some(p) = pred {
            counts.entry(*p).or_default().1 += 1;
            if p == gold {
                counts.entry(*p).or_default().0 += 1;
                correct += 1;
            }
        }
    }
    let n = golds.len();
    let mut per_class = Vec::new();
    let (mut mp, mut mr, mut mf) = (0.0, 0.0, 0.0);
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    for (letter, (tp, predicted, support)) in counts.iter().filter(|(_, c)| c.2 > 0) {
        let precision = ratio(*tp, *predicted);
        let recall = ratio(*tp, *support);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        mp += precision;
        mr += recall;
        mf += f1;
        let w = *support as f64;
        wp += w * precision;
        // support * (tp / support), kept exact so it sums to the accuracy.
        wr += *tp as f64;
        wf += w * f1;
        let mut class = String::new();
        class.push(letter.as_char());
        per_class.push(ClassMetrics { class, precision, recall, f1, support: *support });
    }
    let k = per_class.len() as f64;
    let total = n as f64;
    Ok(MetricReport {
        accuracy: ratio(correct, n),
        macro_precision: mp / k,
        macro_recall: mr / k,
        macro_f1: mf / k,
        weighted_precision: wp / total,
        weighted_recall: wr / total,
        weighted_f1: wf / total,
        per_class,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use OptionLetter::*;

    #[test]
    fn perfect_predictions() {
        let golds = [A, B, C, D, A];
        let preds: Vec<_> = golds.iter().copied().map(Some).collect();
        let r = classification_report(&preds, &golds).unwrap();
        for v in [r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1, r.weighted_f1] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn two_class_hand_example() {
        let r = classification_report(&[Some(A), Some(B), Some(A), Some(B)], &[A, A, B, B]).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.macro_f1, 0.5);
        assert_eq!(r.weighted_recall, r.accuracy);
    }

    #[test]
    fn no_answer_is_wrong() {
        let r = classification_report(&[None, Some(B)], &[A, B]).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.per_class[0].class, "A");
        assert_eq!(r.per_class[0].precision, 0.0);
        assert_eq!(r.per_class[0].recall, 0.0);
        assert_eq!(r.per_class[1].precision, 1.0);
        assert_eq!(
            classification_report(&[None], &[A, B]),
            Err(MetricsError::LengthMismatch { predictions: 1, golds: 2 })
        );
    }

    #[test]
    fn predicted_only_class_lowers_precision_not_macro_count() {
        let r = classification_report(&[Some(C), Some(A)], &[A, A]).unwrap();
        assert_eq!(r.per_class.len(), 1);
        assert_eq!(r.macro_precision, 1.0);
        assert_eq!(r.macro_recall, 0.5);
    }
}
