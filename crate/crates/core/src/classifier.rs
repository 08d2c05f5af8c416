//! Logistic-regression router: training, scoring, F1-optimal threshold and AUC.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;

pub const SCHEMA_VERSION: u32 = 1;
pub const POSITIVE_CLASS: &str = "thinking";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifierError {
    #[error("targets contain a single class; both 0 and 1 are required")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("length mismatch: {left} scores/features vs {right} targets")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid training config: {0}")]
    BadConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2_lambda: f64,
    pub max_iters: usize,
    /// Convergence threshold on the per-iteration loss decrease.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { l2_lambda: 1.0, max_iters: 500, tolerance: 1e-8, seed: 42 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(ClassifierError::BadConfig("l2_lambda must be finite and nonnegative"));
        }
        if self.max_iters == 0 {
            return Err(ClassifierError::BadConfig("max_iters must be positive"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(ClassifierError::BadConfig("tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub l2_lambda: f64,
    pub max_iters: usize,
    pub converged_at_iter: usize,
    pub train_size: usize,
    /// RFC 3339 time of training; filled in by the caller.
    pub timestamp: String,
}

/// Trained binary router. The positive class is always `thinking`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterModel {
    pub schema_version: u32,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub positive_class: String,
    pub embedding_model_id: String,
    pub train_meta: TrainMeta,
}

impl RouterModel {
    /// Raw score `w·x + b`.
    pub fn score(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        if x.len() != self.dim || self.weights.len() != self.dim {
            return Err(ClassifierError::DimMismatch { expected: self.dim, got: x.len() });
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    /// Probability of the thinking class for a raw feature slice.
    pub fn proba(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        self.score(x).map(sigmoid)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

pub fn predict_proba(model: &RouterModel, x: &EmbeddingVector) -> Result<f64, ClassifierError> {
    model.proba(&x.values)
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Problem<'a> {
    rows: Vec<&'a [f64]>,
    targets: &'a [u8],
    lambda: f64,
    dim: usize,
}

impl Problem<'_> {
    /// Regularized negative log-likelihood and its gradient at `theta`
    /// (weights followed by the unregularized bias).
    fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let (w, b) = theta.split_at(self.dim);
        let b = b[0];
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for (x, &y) in self.rows.iter().zip(self.targets) {
            let z = dot(w, x) + b;
            let y = y as f64;
            loss += softplus(z) - y * z;
            let r = sigmoid(z) - y;
            for (g, xi) in grad[..self.dim].iter_mut().zip(x.iter()) {
                *g += r * xi;
            }
            grad[self.dim] += r;
        }
        let mut reg = 0.0;
        for (g, wi) in grad[..self.dim].iter_mut().zip(w) {
            *g += self.lambda * wi;
            reg += wi * wi;
        }
        loss + 0.5 * self.lambda * reg
    }
}

fn check_inputs(rows: &[&[f64]], targets: &[u8]) -> Result<usize, ClassifierError> {
    if rows.len() != targets.len() {
        return Err(ClassifierError::LengthMismatch { left: rows.len(), right: targets.len() });
    }
    let has_pos = targets.contains(&1);
    let has_neg = targets.contains(&0);
    if !has_pos || !has_neg || targets.iter().any(|&t| t > 1) {
        return Err(ClassifierError::SingleClass);
    }
    let dim = rows[0].len();
    if dim == 0 {
        return Err(ClassifierError::DimMismatch { expected: 1, got: 0 });
    }
    for r in rows {
        if r.len() != dim {
            return Err(ClassifierError::DimMismatch { expected: dim, got: r.len() });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFinite);
        }
    }
    Ok(dim)
}

/// Fits the router by L-BFGS with backtracking line search, starting from
/// zero weights. Returns the model (threshold 0.5) and the loss after every
/// accepted iteration, starting with the loss at zero.
pub fn train_logistic_traced(
    features: &[EmbeddingVector],
    targets: &[u8],
    config: &TrainConfig,
) -> Result<(RouterModel, Vec<f64>), ClassifierError> {
    config.validate()?;
    if features.len() != targets.len() {
        return Err(ClassifierError::LengthMismatch { left: features.len(), right: targets.len() });
    }
    let rows: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    let dim = check_inputs(&rows, targets)?;
    let model_id = features[0].model_id.clone();
    let problem = Problem { rows, targets, lambda: config.l2_lambda, dim };
    let (theta, trace, converged_at) = lbfgs(&problem, config);
    let model = RouterModel {
        schema_version: SCHEMA_VERSION,
        dim,
        weights: theta[..dim].to_vec(),
        bias: theta[dim],
        threshold: 0.5,
        positive_class: POSITIVE_CLASS.into(),
        embedding_model_id: model_id,
        train_meta: TrainMeta {
            seed: config.seed,
            l2_lambda: config.l2_lambda,
            max_iters: config.max_iters,
            converged_at_iter: converged_at,
            train_size: targets.len(),
            timestamp: String::new(),
        },
    };
    Ok((model, trace))
}

pub fn train_logistic(
    features: &[EmbeddingVector],
    targets: &[u8],
    config: &TrainConfig,
) -> Result<RouterModel, ClassifierError> {
    train_logistic_traced(features, targets, config).map(|(m, _)| m)
}

const HISTORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn lbfgs(problem: &Problem<'_>, config: &TrainConfig) -> (Vec<f64>, Vec<f64>, usize) {
    let n = problem.dim + 1;
    let mut theta = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut loss = problem.loss_grad(&theta, &mut grad);
    let mut trace = vec![loss];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(HISTORY);
    let mut next = vec![0.0; n];
    let mut next_grad = vec![0.0; n];

    for iter in 1..=config.max_iters {
        let gnorm = libm::sqrt(dot(&grad, &grad));
        if gnorm == 0.0 {
            return (theta, trace, iter - 1);
        }
        let mut dir = two_loop(&grad, &history);
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 || !slope.is_finite() {
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }
        // First step has no curvature information; scale it to unit length.
        let mut step = if history.is_empty() { 1.0 / gnorm.max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                next[i] = theta[i] + step * dir[i];
            }
            let candidate = problem.loss_grad(&next, &mut next_grad);
            if candidate.is_finite() && candidate <= loss + ARMIJO_C1 * step * slope {
                accepted = Some(candidate);
                break;
            }
            step *= 0.5;
        }
        let Some(new_loss) = accepted else {
            return (theta, trace, iter - 1);
        };
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == HISTORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        core::mem::swap(&mut theta, &mut next);
        core::mem::swap(&mut grad, &mut next_grad);
        let decrease = loss - new_loss;
        loss = new_loss;
        trace.push(loss);
        if decrease < config.tolerance {
            return (theta, trace, iter);
        }
    }
    (theta, trace, config.max_iters)
}

fn two_loop(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn check_scores(probs: &[f64], targets: &[u8]) -> Result<(), ClassifierError> {
    if probs.len() != targets.len() {
        return Err(ClassifierError::LengthMismatch { left: probs.len(), right: targets.len() });
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(ClassifierError::NonFinite);
    }
    let pos = targets.iter().filter(|&&t| t == 1).count();
    if pos == 0 || pos == targets.len() || targets.iter().any(|&t| t > 1) {
        return Err(ClassifierError::SingleClass);
    }
    Ok(())
}

/// Positive-class F1 when predicting positive iff `p >= threshold`.
pub fn f1_at(probs: &[f64], targets: &[u8], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in probs.iter().zip(targets) {
        match (p >= threshold, t == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    f1_from_counts(tp, fp, fn_)
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Candidate thresholds: 0, every midpoint between consecutive distinct
/// probabilities, and 1, ascending.
pub fn threshold_candidates(probs: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = probs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(0.0);
    for pair in sorted.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let mut mid = lo + (hi - lo) / 2.0;
        // Adjacent floats: the only threshold separating them is `hi`.
        if mid <= lo {
            mid = hi;
        }
        out.push(mid);
    }
    out.push(1.0);
    out
}

/// Threshold maximizing positive-class F1; ties go to the larger threshold.
pub fn select_threshold_max_f1(probs: &[f64], targets: &[u8]) -> Result<f64, ClassifierError> {
    check_scores(probs, targets)?;
    let mut sorted: Vec<(f64, u8)> = probs.iter().copied().zip(targets.iter().copied()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = targets.iter().filter(|&&t| t == 1).count();
    // positives_below[i] = positives among the i smallest scores.
    let mut positives_below = Vec::with_capacity(sorted.len() + 1);
    positives_below.push(0usize);
    for (_, t) in &sorted {
        positives_below.push(positives_below.last().unwrap() + *t as usize);
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for t in threshold_candidates(probs) {
        let below = sorted.partition_point(|(p, _)| *p < t);
        let tp = positives - positives_below[below];
        let fp = (sorted.len() - below) - tp;
        let f1 = f1_from_counts(tp, fp, positives - tp);
        if f1 >= best.0 {
            best = (f1, t);
        }
    }
    Ok(best.1)
}

/// Area under the ROC curve via the midrank Mann-Whitney statistic.
pub fn auc(probs: &[f64], targets: &[u8]) -> Result<f64, ClassifierError> {
    check_scores(probs, targets)?;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    // Ranks are doubled so tied midranks stay integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u128;
        for &k in &order[i..=j] {
            if targets[k] == 1 {
                rank_sum2 += mid2;
            }
        }
        i = j + 1;
    }
    let n_pos = targets.iter().filter(|&&t| t == 1).count() as u128;
    let n_neg = targets.len() as u128 - n_pos;
    let u2 = rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// Fraction of `targets` matched by `p >= threshold`.
pub fn accuracy_at(probs: &[f64], targets: &[u8], threshold: f64) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let hits = probs.iter().zip(targets).filter(|(p, t)| (**p >= threshold) == (**t == 1)).count();
    hits as f64 / probs.len() as f64
}
