//! Dual-mode probing and labeling of a question set.

use futures::StreamExt;
use thiserror::Error;

use synapseroute_core::domain::{DualProbeRecord, LabeledQuestion, ModeKind, QuestionRecord};
use synapseroute_core::label::{label_question, LabelingStats};
use synapseroute_core::prompt::BackendConfig;

use crate::backend::{infer, BackendError, ChatBackend};
use crate::jsonl::{FileError, JsonlAppender};

pub const DEFAULT_MAX_CONSECUTIVE_ERRORS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelOptions {
    pub parallelism: usize,
    pub max_consecutive_errors: usize,
}

impl Default for LabelOptions {
    fn default() -> Self {
        Self { parallelism: 4, max_consecutive_errors: DEFAULT_MAX_CONSECUTIVE_ERRORS }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("parallelism must be at least 1")]
    BadParallelism,
    #[error("labeling aborted after {consecutive} consecutive backend errors ({completed} records kept): {last}")]
    PipelineFailed { consecutive: usize, completed: usize, last: BackendError },
    #[error(transparent)]
    File(#[from] FileError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRun {
    pub labeled: Vec<LabeledQuestion>,
    pub stats: LabelingStats,
    /// Questions whose probe failed without tripping the abort threshold.
    pub skipped: Vec<(String, BackendError)>,
}

/// Asks `question` once in each mode and applies the labeling rule.
pub async fn probe_question(
    backend: &dyn ChatBackend,
    question: &QuestionRecord,
    config: &BackendConfig,
) -> Result<LabeledQuestion, BackendError> {
    let thinking = infer(backend, question, ModeKind::Thinking, config).await?;
    let non_thinking = infer(backend, question, ModeKind::NonThinking, config).await?;
    let probe = DualProbeRecord { question_id: question.id.clone(), thinking, non_thinking };
    let label = label_question(&probe);
    Ok(LabeledQuestion { question: question.clone(), probe, label })
}

/// Labels `questions` with up to `parallelism` questions in flight. Records
/// are emitted (and appended to `sink`) in input order.
pub async fn run_labeling_pipeline(
    questions: &[QuestionRecord],
    backend: &dyn ChatBackend,
    config: &BackendConfig,
    options: LabelOptions,
    mut sink: Option<&mut JsonlAppender>,
) -> Result<LabelRun, PipelineError> {
    if options.parallelism == 0 {
        return Err(PipelineError::BadParallelism);
    }
    let mut results = futures::stream::iter(questions.iter().map(|q| async move {
        let r = probe_question(backend, q, config).await;
        (q, r)
    }))
    .buffered(options.parallelism);

    let mut labeled = Vec::with_capacity(questions.len());
    let mut skipped = Vec::new();
    let mut consecutive = 0;
    while let Some((q, result)) = results.next().await {
        match result {
            Ok(record) => {
                consecutive = 0;
                if let Some(s) = sink.as_deref_mut() {
                    s.append(&record)?;
                }
                labeled.push(record);
            }
            Err(e) => {
                consecutive += 1;
                tracing::warn!(question = %q.id, error = %e, consecutive, "probe failed");
                if consecutive >= options.max_consecutive_errors.max(1) {
                    if let Some(s) = sink.as_deref_mut() {
                        s.flush()?;
                    }
                    return Err(PipelineError::PipelineFailed { consecutive, completed: labeled.len(), last: e });
                }
                skipped.push((q.id.clone(), e));
            }
        }
    }
    if let Some(s) = sink {
        s.flush()?;
    }
    let stats = LabelingStats::compute(&labeled);
    Ok(LabelRun { labeled, stats, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::SimBackend;
    use crate::jsonl::read_jsonl;
    use synapseroute_core::domain::QuestionLabel;
    use synapseroute_core::sim::sim_from_distribution;

    #[tokio::test]
    async fn labels_follow_simulated_classes() {
        let corpus = sim_from_distribution(1000, 0.5775, 0.3474, 0.0751, 5).unwrap();
        let backend = SimBackend::from_corpus(&corpus);
        let run = run_labeling_pipeline(&corpus.questions, &backend, &BackendConfig::default(), LabelOptions::default(), None)
            .await
            .unwrap();
        let c = run.stats.counts;
        assert!(c.non_thinking.abs_diff(578) <= 1);
        assert!(c.thinking.abs_diff(347) <= 1);
        assert!(c.fail.abs_diff(75) <= 1);
        assert_eq!(backend.requests(ModeKind::Thinking) + backend.requests(ModeKind::NonThinking), 2000);
        let ids: Vec<&str> = run.labeled.iter().map(|l| l.question.id.as_str()).collect();
        let expected: Vec<&str> = corpus.questions.iter().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, expected);
    }

    #[tokio::test]
    async fn parallelism_does_not_change_output() {
        let corpus = sim_from_distribution(120, 0.5775, 0.3474, 0.0751, 9).unwrap();
        let backend = SimBackend::from_corpus(&corpus);
        let config = BackendConfig::default();
        let one = LabelOptions { parallelism: 1, ..Default::default() };
        let eight = LabelOptions { parallelism: 8, ..Default::default() };
        let a = run_labeling_pipeline(&corpus.questions, &backend, &config, one, None).await.unwrap();
        let b = run_labeling_pipeline(&corpus.questions, &backend, &config, eight, None).await.unwrap();
        assert_eq!(a, b);
    }

    #[tokio::test]
    async fn empty_corpus() {
        let backend = SimBackend::new(&[], Default::default());
        let run = run_labeling_pipeline(&[], &backend, &BackendConfig::default(), LabelOptions::default(), None)
            .await
            .unwrap();
        assert!(run.labeled.is_empty());
        assert_eq!(run.stats, LabelingStats::default());
    }

    #[tokio::test]
    async fn aborts_after_consecutive_errors_and_flushes() {
        let corpus = sim_from_distribution(30, 0.5, 0.5, 0.0, 2).unwrap();
        let backend = SimBackend::from_corpus(&corpus);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labeled.jsonl");
        let mut sink = JsonlAppender::create(&path).unwrap();
        let config = BackendConfig::default();
        let options = LabelOptions { parallelism: 1, max_consecutive_errors: 3 };
        // First five questions succeed, then every call fails.
        run_labeling_pipeline(&corpus.questions[..5], &backend, &config, options, Some(&mut sink)).await.unwrap();
        backend.inject_failures(u64::MAX);
        let err = run_labeling_pipeline(&corpus.questions[5..], &backend, &config, options, Some(&mut sink))
            .await
            .unwrap_err();
        assert!(matches!(err, PipelineError::PipelineFailed { consecutive: 3, completed: 0, .. }));
        let written: Vec<LabeledQuestion> = read_jsonl(&path).unwrap();
        assert_eq!(written.len(), 5);
        assert!(written.iter().all(|l| l.label != QuestionLabel::Fail));
    }
}
