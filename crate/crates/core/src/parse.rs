//! Extraction of the chosen option letter from free-form model output.
//!
//! Three stages are tried in order and the first hit wins:
//!
//! 1. the whole output (punctuation and whitespace trimmed) is a single
//!    allowed letter;
//! 2. the last `answer is X` / `Answer: X` anchor naming an allowed letter;
//! 3. exactly one distinct allowed standalone letter on the final line.
//!
//! A reasoning block closed by `</think>` is dropped first so that only the
//! final answer text is inspected.

use crate::domain::OptionLetter;

const THINK_CLOSE: &str = "</think>";

/// Returns the answer letter when one can be extracted unambiguously.
pub fn parse_answer_letter(raw_output: &str, allowed: &[OptionLetter]) -> Option<OptionLetter> {
    let text = match raw_output.rfind(THINK_CLOSE) {
        Some(pos) => &raw_output[pos + THINK_CLOSE.len()..],
        None => raw_output,
    };
    whole_output_letter(text, allowed)
        .or_else(|| anchored_letter(text, allowed))
        .or_else(|| final_line_letter(text, allowed))
}

fn is_trimmable(c: char) -> bool {
    c.is_whitespace() || c.is_ascii_punctuation() || c == '*'
}

fn whole_output_letter(text: &str, allowed: &[OptionLetter]) -> Option<OptionLetter> {
    let trimmed = text.trim_matches(is_trimmable);
    let mut chars = trimmed.chars();
    let c = chars.next()?;
    if chars.next().is_some() {
        return None;
    }
    OptionLetter::from_char(c).filter(|l| allowed.contains(l))
}

/// Last `answer is X` / `answer: X` with `X` an allowed uppercase letter
/// followed by a word boundary.
fn anchored_letter(text: &str, allowed: &[OptionLetter]) -> Option<OptionLetter> {
    let bytes = text.as_bytes();
    let mut found = None;
    let mut start = 0;
    while let Some(offset) = find_ascii_ci(&bytes[start..], b"answer") {
        let anchor = start + offset;
        start = anchor + 1;
        // "answer" must not be the tail of a longer word ("reanswer").
        if anchor > 0 && bytes[anchor - 1].is_ascii_alphanumeric() {
            continue;
        }
        if let Some(letter) = letter_after_anchor(&bytes[anchor + 6..]) {
            if allowed.contains(&letter) {
                found = Some(letter);
            }
        }
    }
    found
}

fn letter_after_anchor(rest: &[u8]) -> Option<OptionLetter> {
    let mut i = skip_spaces(rest, 0);
    if rest.get(i) == Some(&b':') {
        i += 1;
    } else if rest.len() >= i + 2 && rest[i..i + 2].eq_ignore_ascii_case(b"is") {
        i += 2;
        if rest.get(i).is_some_and(|b| b.is_ascii_alphanumeric()) {
            return None;
        }
        if rest.get(i) == Some(&b':') {
            i += 1;
        }
    } else {
        return None;
    }
    i = skip_spaces(rest, i);
    while matches!(rest.get(i), Some(b'(' | b'*' | b'[' | b'"' | b'\'')) {
        i += 1;
    }
    let c = *rest.get(i)?;
    if !c.is_ascii_uppercase() {
        return None;
    }
    if rest.get(i + 1).is_some_and(|b| b.is_ascii_alphanumeric()) {
        return None;
    }
    OptionLetter::from_char(c as char)
}

fn skip_spaces(bytes: &[u8], mut i: usize) -> usize {
    while bytes.get(i).is_some_and(|b| b.is_ascii_whitespace()) {
        i += 1;
    }
    i
}

fn find_ascii_ci(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w.eq_ignore_ascii_case(needle))
}

fn final_line_letter(text: &str, allowed: &[OptionLetter]) -> Option<OptionLetter> {
    let line = text.lines().rev().find(|l| !l.trim().is_empty())?;
    let mut chosen: Option<OptionLetter> = None;
    for token in line.split(|c: char| !c.is_alphanumeric()) {
        let mut chars = token.chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            continue;
        };
        if !c.is_ascii_uppercase() {
            continue;
        }
        let Some(letter) = OptionLetter::from_char(c).filter(|l| allowed.contains(l)) else {
            continue;
        };
        match chosen {
            None => chosen = Some(letter),
            Some(prev) if prev == letter => {}
            Some(_) => return None,
        }
    }
    chosen
}
