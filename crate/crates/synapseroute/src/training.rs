//! Router training workflow and the model artifact format.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use synapseroute_core::classifier::{
    accuracy_at, auc, f1_at, select_threshold_max_f1, train_logistic, ClassifierError, RouterModel, TrainConfig,
    SCHEMA_VERSION,
};
use synapseroute_core::domain::{LabeledQuestion, QuestionRecord};
use synapseroute_core::embedding::EmbeddingVector;
use synapseroute_core::label::{training_view, TrainingViewError};
use synapseroute_core::prompt::feature_text;
use synapseroute_core::split::{stratified_split, SplitError};

use crate::embed::{EmbedError, Embedder};
use crate::jsonl::{read_json, write_json, FileError};

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error("model schema mismatch: {0}")]
    SchemaVersionMismatch(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

pub fn save_model(model: &RouterModel, path: &Path) -> Result<(), ModelIoError> {
    Ok(write_json(path, model)?)
}

/// Loads a model artifact. Dimension agreement with the embedder is only
/// checked when the model is first used.
pub fn load_model(path: &Path) -> Result<RouterModel, ModelIoError> {
    let value: Value = read_json(path)?;
    match value.get("schema_version").and_then(Value::as_u64) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(ModelIoError::SchemaVersionMismatch(format!("version {v}, expected {SCHEMA_VERSION}"))),
        None => return Err(ModelIoError::SchemaVersionMismatch("missing schema_version".into())),
    }
    let model: RouterModel =
        serde_json::from_value(value).map_err(|e| ModelIoError::SchemaVersionMismatch(e.to_string()))?;
    if !(0.0..=1.0).contains(&model.threshold) {
        return Err(ModelIoError::Invalid(format!("threshold {} outside [0, 1]", model.threshold)));
    }
    if model.weights.len() != model.dim {
        return Err(ModelIoError::Invalid(format!("{} weights for dim {}", model.weights.len(), model.dim)));
    }
    if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
        return Err(ModelIoError::Invalid("non-finite weights".into()));
    }
    Ok(model)
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    View(#[from] TrainingViewError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    /// Share of the labeled corpus used for training (the rest is test).
    pub train_fraction: f64,
    /// Share of the training split held out for threshold selection.
    pub validation_fraction: f64,
    pub config: TrainConfig,
    pub max_in_flight: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { train_fraction: 0.8, validation_fraction: 0.2, config: TrainConfig::default(), max_in_flight: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutMetrics {
    pub n: usize,
    pub auc: f64,
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_total: usize,
    pub test_total: usize,
    pub fit_n: usize,
    pub validation_n: usize,
    pub threshold: f64,
    pub validation_f1: f64,
    pub converged_at_iter: usize,
    pub embedding_model_id: String,
    /// Binary test metrics; absent when the test split lacks one class.
    pub test: Option<HeldOutMetrics>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RouterModel,
    pub report: TrainReport,
    pub train: Vec<LabeledQuestion>,
    pub test: Vec<LabeledQuestion>,
}

async fn features(
    embedder: &Embedder,
    rows: &[(QuestionRecord, u8)],
    max_in_flight: usize,
) -> Result<(Vec<EmbeddingVector>, Vec<u8>), EmbedError> {
    let texts: Vec<String> = rows.iter().map(|(q, _)| feature_text(q)).collect();
    let vectors = embedder.embed_batch(&texts, max_in_flight).await?;
    Ok((vectors.iter().map(|v| (**v).clone()).collect(), rows.iter().map(|(_, y)| *y).collect()))
}

fn probabilities(model: &RouterModel, xs: &[EmbeddingVector]) -> Result<Vec<f64>, ClassifierError> {
    xs.iter().map(|x| model.proba(&x.values)).collect()
}

/// Splits `labeled` by label, fits the router on part of the training
/// split, picks the F1-optimal threshold on the rest and scores the test
/// split.
pub async fn train_router(
    labeled: Vec<LabeledQuestion>,
    embedder: &Embedder,
    options: &TrainOptions,
) -> Result<TrainOutcome, TrainError> {
    let seed = options.config.seed;
    let (train, test) = stratified_split(labeled, |l| l.label, options.train_fraction, seed)?;
    let rows = training_view(&train)?;
    let (fit, validation) =
        stratified_split(rows, |r| r.1, 1.0 - options.validation_fraction, seed.wrapping_add(1))?;

    let (fit_x, fit_y) = features(embedder, &fit, options.max_in_flight).await?;
    let (val_x, val_y) = features(embedder, &validation, options.max_in_flight).await?;
    let mut model = train_logistic(&fit_x, &fit_y, &options.config)?;
    model.train_meta.timestamp = chrono::Utc::now().to_rfc3339();

    let val_p = probabilities(&model, &val_x)?;
    model.threshold = select_threshold_max_f1(&val_p, &val_y)?;
    let validation_f1 = f1_at(&val_p, &val_y, model.threshold);

    let test_rows = training_view(&test).unwrap_or_default();
    let (test_x, test_y) = features(embedder, &test_rows, options.max_in_flight).await?;
    let test_p = probabilities(&model, &test_x)?;
    let held_out = auc(&test_p, &test_y).ok().map(|a| HeldOutMetrics {
        n: test_y.len(),
        auc: a,
        accuracy: accuracy_at(&test_p, &test_y, model.threshold),
        f1: f1_at(&test_p, &test_y, model.threshold),
    });

    let report = TrainReport {
        train_total: train.len(),
        test_total: test.len(),
        fit_n: fit_y.len(),
        validation_n: val_y.len(),
        threshold: model.threshold,
        validation_f1,
        converged_at_iter: model.train_meta.converged_at_iter,
        embedding_model_id: model.embedding_model_id.clone(),
        test: held_out,
    };
    Ok(TrainOutcome { model, report, train, test })
}
