//! Deterministic dual-mode simulator.
//!
//! A [`SimProfile`] fixes, per question id, whether each mode answers
//! correctly and what it costs. Ids missing from the profile fall back to a
//! hash-seeded draw, so the profile is total over any query set.
//!
//! Costs follow the measured shape of a dual-mode model on multiple-choice
//! medical questions: thinking mode emits log-normally distributed
//! completions (median 618 tokens, clamped to 128..=8277) at about 21.6 ms
//! per token, while non-thinking mode emits a fixed 5 tokens with a
//! sub-second median latency.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{ModeKind, OptionLetter, QuestionRecord, Source};
use crate::rng;
use crate::split::apportion;

pub const THINKING_TOKENS_MIN: u64 = 128;
pub const THINKING_TOKENS_MAX: u64 = 8277;
pub const THINKING_TOKENS_MEDIAN: f64 = 618.0;
/// Log-normal shape giving a mean of roughly 800 tokens at the median above.
pub const THINKING_TOKENS_SIGMA: f64 = 0.7168;
/// Mean thinking latency per completion token (17.24 s / 799.31 tokens).
pub const THINKING_MS_PER_TOKEN: f64 = 21.57;
pub const NON_THINKING_TOKENS: u64 = 5;
pub const NON_THINKING_LATENCY_MEDIAN_MS: f64 = 850.0;
/// Log-normal shape giving a mean near 1.25 s at the median above.
pub const NON_THINKING_LATENCY_SIGMA: f64 = 0.878;
pub const NON_THINKING_LATENCY_MIN_MS: f64 = 620.0;

/// Share of synthetic questions whose wording is drawn from the other
/// style, so that text predicts the class only imperfectly.
pub const STYLE_NOISE: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeProfile {
    pub correct: bool,
    pub tokens: u64,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionProfile {
    pub thinking: ModeProfile,
    pub non_thinking: ModeProfile,
}

impl QuestionProfile {
    pub fn mode(&self, mode: ModeKind) -> &ModeProfile {
        match mode {
            ModeKind::Thinking => &self.thinking,
            ModeKind::NonThinking => &self.non_thinking,
        }
    }

    pub fn class(&self) -> SimClass {
        match (self.thinking.correct, self.non_thinking.correct) {
            (true, true) => SimClass::BothCorrect,
            (true, false) => SimClass::ThinkingOnly,
            (false, true) => SimClass::NonThinkingOnly,
            (false, false) => SimClass::Fail,
        }
    }
}

/// Fallback for ids missing from the profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefaultRule {
    pub seed: u64,
    pub thinking_accuracy: f64,
    pub non_thinking_accuracy: f64,
}

impl Default for DefaultRule {
    fn default() -> Self {
        // Whole-corpus accuracies of the two modes.
        Self { seed: 0, thinking_accuracy: 0.8272, non_thinking_accuracy: 0.5774 }
    }
}

impl DefaultRule {
    pub fn profile_for(&self, id: &str) -> QuestionProfile {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(id.as_bytes());
        let digest = hasher.finalize();
        let mut seed_bytes = [0u8; 8];
        seed_bytes.copy_from_slice(&digest[..8]);
        let mut rng = rng::seeded(u64::from_le_bytes(seed_bytes));
        let thinking_correct = rng.random::<f64>() < self.thinking_accuracy;
        let non_thinking_correct = rng.random::<f64>() < self.non_thinking_accuracy;
        draw_profile(&mut rng, thinking_correct, non_thinking_correct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SimProfile {
    pub questions: BTreeMap<String, QuestionProfile>,
    #[serde(default)]
    pub default_rule: DefaultRule,
}

impl SimProfile {
    /// Profile of `id`, falling back to the default rule.
    pub fn lookup(&self, id: &str) -> QuestionProfile {
        match self.questions.get(id) {
            Some(p) => *p,
            None => self.default_rule.profile_for(id),
        }
    }
}

/// Which modes answer a synthetic question correctly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimClass {
    NonThinkingOnly,
    ThinkingOnly,
    Fail,
    BothCorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCorpus {
    pub questions: Vec<QuestionRecord>,
    pub profile: SimProfile,
}

impl SimCorpus {
    pub fn class_counts(&self) -> BTreeMap<SimClass, usize> {
        let mut counts = BTreeMap::new();
        for q in &self.questions {
            *counts.entry(self.profile.lookup(&q.id).class()).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("class fractions must be non-negative and sum to at most 1")]
    BadFractions,
}

fn draw_profile<R: Rng + ?Sized>(rng: &mut R, thinking_correct: bool, non_thinking_correct: bool) -> QuestionProfile {
    let tokens = libm::round(rng::log_normal(rng, THINKING_TOKENS_MEDIAN, THINKING_TOKENS_SIGMA)) as u64;
    let tokens = tokens.clamp(THINKING_TOKENS_MIN, THINKING_TOKENS_MAX);
    let thinking_latency = tokens as f64 * THINKING_MS_PER_TOKEN * rng::log_normal(rng, 1.0, 0.2);
    let nt_latency = rng::log_normal(rng, NON_THINKING_LATENCY_MEDIAN_MS, NON_THINKING_LATENCY_SIGMA)
        .max(NON_THINKING_LATENCY_MIN_MS);
    QuestionProfile {
        thinking: ModeProfile {
            correct: thinking_correct,
            tokens,
            latency_ms: libm::round(thinking_latency) as u64,
        },
        non_thinking: ModeProfile {
            correct: non_thinking_correct,
            tokens: NON_THINKING_TOKENS,
            latency_ms: libm::round(nt_latency) as u64,
        },
    }
}

/// Builds a synthetic corpus of `n` questions whose class mix follows the
/// given fractions; the remainder answers correctly in both modes. Class
/// counts are apportioned by largest remainder.
pub fn sim_from_distribution(
    n: usize,
    frac_non_thinking_only: f64,
    frac_thinking_only: f64,
    frac_fail: f64,
    seed: u64,
) -> Result<SimCorpus, SimError> {
    let fractions = [frac_non_thinking_only, frac_thinking_only, frac_fail];
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(SimError::BadFractions);
    }
    let used: f64 = fractions.iter().sum();
    if used > 1.0 + 1e-9 {
        return Err(SimError::BadFractions);
    }
    let weights = [fractions[0], fractions[1], fractions[2], (1.0 - used).max(0.0)];
    let counts = apportion(&weights, n);
    let kinds = [SimClass::NonThinkingOnly, SimClass::ThinkingOnly, SimClass::Fail, SimClass::BothCorrect];

    let mut classes: Vec<SimClass> = Vec::with_capacity(n);
    for (kind, count) in kinds.iter().zip(counts) {
        classes.extend(core::iter::repeat_n(*kind, count));
    }
    let mut rng = rng::seeded(seed);
    classes.shuffle(&mut rng);

    let mut questions = Vec::with_capacity(n);
    let mut profiles = BTreeMap::new();
    for (i, class) in classes.into_iter().enumerate() {
        let id = format!("syn-{i:06}");
        let (t_ok, nt_ok) = match class {
            SimClass::NonThinkingOnly => (false, true),
            SimClass::ThinkingOnly => (true, false),
            SimClass::Fail => (false, false),
            SimClass::BothCorrect => (true, true),
        };
        profiles.insert(id.clone(), draw_profile(&mut rng, t_ok, nt_ok));
        let reasoning_style = match class {
            SimClass::ThinkingOnly => true,
            SimClass::NonThinkingOnly | SimClass::BothCorrect => false,
            SimClass::Fail => rng.random::<bool>(),
        };
        let reasoning_style = reasoning_style ^ (rng.random::<f64>() < STYLE_NOISE);
        questions.push(synthetic_question(&mut rng, id, reasoning_style));
    }
    Ok(SimCorpus {
        questions,
        profile: SimProfile { questions: profiles, default_rule: DefaultRule { seed, ..DefaultRule::default() } },
    })
}

const SEXES: &[&str] = &["man", "woman", "boy", "girl"];
const SETTINGS: &[&str] = &["emergency department", "clinic", "physician", "hospital", "urgent care center"];
const DURATIONS: &[&str] = &["a 2-day history", "a 3-week history", "a 6-month history", "a 1-hour history", "a 5-day history"];
const SYMPTOMS: &[&str] = &[
    "fever", "chest pain", "shortness of breath", "abdominal pain", "fatigue", "joint swelling",
    "headache", "weight loss", "palpitations", "productive cough", "blurred vision", "dysuria",
    "lower back pain", "night sweats", "hematuria", "confusion",
];
const HISTORIES: &[&str] = &[
    "He has a history of type 2 diabetes mellitus and hypertension",
    "She has smoked one pack of cigarettes daily for 20 years",
    "Her medications include lisinopril and metformin",
    "He returned from a trip to Southeast Asia 2 weeks ago",
    "She had a similar episode 1 year ago that resolved spontaneously",
    "His father died of colon cancer at the age of 50 years",
];
const SIGNS: &[&str] = &[
    "a grade 3/6 holosystolic murmur", "bilateral pitting edema", "hepatosplenomegaly",
    "crackles at both lung bases", "tenderness in the right upper quadrant", "a palpable purpura",
    "decreased breath sounds on the left", "jugular venous distention",
];
const LABS: &[&str] = &[
    "a leukocyte count of 15,200/mm3", "a serum creatinine of 2.4 mg/dL", "a hemoglobin of 8.9 g/dL",
    "a serum sodium of 126 mEq/L", "an elevated erythrocyte sedimentation rate",
    "a platelet count of 62,000/mm3",
];
const TARGETS: &[&str] = &[
    "diagnosis", "underlying cause of this patient's condition", "next step in management",
    "mechanism of action of the most appropriate drug", "explanation for these findings",
];
const RECALL_QUESTIONS: &[&str] = &[
    "Which of the following is the drug of choice for {}?",
    "{} is most commonly caused by:",
    "Which of the following is a characteristic feature of {}?",
    "The most common site of {} is:",
    "Which vitamin deficiency is associated with {}?",
    "{} is seen in:",
];
const CONDITIONS: &[&str] = &[
    "scurvy", "rickets", "absence seizures", "pernicious anemia", "trigeminal neuralgia",
    "gout", "tuberculosis", "syphilis", "Wilson disease", "cholera", "malaria", "anaphylaxis",
];
const OPTION_TERMS: &[&str] = &[
    "Ethosuximide", "Vitamin C", "Vitamin D", "Carbamazepine", "Penicillin G", "Allopurinol",
    "Isoniazid", "Penicillamine", "Doxycycline", "Epinephrine", "Acute pyelonephritis",
    "Infective endocarditis", "Sarcoidosis", "Multiple myeloma", "Hemolytic anemia",
    "Systemic lupus erythematosus", "Order a CT scan", "Start intravenous antibiotics",
    "Observation", "Inhibition of cell wall synthesis", "Proximal tubule", "Duodenum",
    "Vitamin B12", "Glossopharyngeal nerve", "Hyperaldosteronism", "Thiamine",
];

fn pick<'a, R: Rng + ?Sized>(rng: &mut R, list: &'a [&'a str]) -> &'a str {
    list.choose(rng).copied().unwrap_or("")
}

fn synthetic_question<R: Rng + ?Sized>(rng: &mut R, id: String, reasoning_style: bool) -> QuestionRecord {
    let stem = if reasoning_style {
        let age = rng.random_range(18..86);
        let (s1, s2) = loop {
            let a = pick(rng, SYMPTOMS);
            let b = pick(rng, SYMPTOMS);
            if a != b {
                break (a, b);
            }
        };
        format!(
            "A {age}-year-old {} presents to the {} with {} of {s1} and {s2}. {}. \
             Physical examination shows {}. Laboratory studies show {}. \
             Which of the following is the most likely {}?",
            pick(rng, SEXES),
            pick(rng, SETTINGS),
            pick(rng, DURATIONS),
            pick(rng, HISTORIES),
            pick(rng, SIGNS),
            pick(rng, LABS),
            pick(rng, TARGETS),
        )
    } else {
        pick(rng, RECALL_QUESTIONS).replacen("{}", pick(rng, CONDITIONS), 1)
    };
    let n_options = if rng.random::<f64>() < 0.2 { 5 } else { 4 };
    let mut terms: Vec<&str> = OPTION_TERMS.choose_multiple(rng, n_options).copied().collect();
    terms.shuffle(rng);
    let options = terms
        .into_iter()
        .enumerate()
        .map(|(i, t)| (OptionLetter::ALL[i], String::from(t)))
        .collect();
    let gold = OptionLetter::ALL[rng.random_range(0..n_options)];
    QuestionRecord { id, source: Source::Synthetic, stem, options, gold }
}
