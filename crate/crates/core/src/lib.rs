//! Core of the SynapseRoute mode router.
//!
//! Everything in this crate is a pure function over in-memory values and
//! builds without `std`: dataset types and standardization, answer parsing,
//! stratified splitting, the three-branch labeling rule, the logistic
//! regression router, classification metrics, the AIT index and bootstrap
//! confidence intervals, and the deterministic dual-mode simulator.
//!
//! IO, HTTP and the command line live in the `synapseroute` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ait;
pub mod bootstrap;
pub mod classifier;
pub mod domain;
pub mod embedding;
pub mod evaluate;
pub mod label;
pub mod metrics;
pub mod parse;
pub mod prompt;
pub mod route;
pub mod sim;
pub mod split;
pub mod standardize;
pub mod stats;

mod rng;

pub use ait::{ait_components, ait_score, min_max_normalize, scenario_presets, AitComponents, AitScenario};
pub use bootstrap::{bootstrap_mean_ci, BootstrapResult};
pub use classifier::{
    auc, predict_proba, select_threshold_max_f1, train_logistic, RouterModel, TrainConfig,
};
pub use domain::{
    DualProbeRecord, InferenceOutcome, LabeledQuestion, ModeKind, OptionLetter, QuestionLabel,
    QuestionRecord, Source,
};
pub use embedding::{content_hash, ContentDigest, EmbeddingVector};
pub use evaluate::{evaluate_modes, EvalOptions, EvalReport, ModeLogRecord};
pub use label::{label_question, training_view, LabelingStats};
pub use metrics::{classification_report, MetricReport};
pub use parse::parse_answer_letter;
pub use prompt::{build_prompt, BackendConfig, ChatRequest, ModeControl};
pub use route::RouteDecision;
pub use sim::{sim_from_distribution, SimCorpus, SimProfile};
pub use split::{stratified_sample, stratified_split};
pub use standardize::{standardize_record, RawGold, RawQuestion};
