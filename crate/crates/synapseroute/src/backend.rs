//! Dual-mode chat backends: an HTTP client for chat-completions servers and
//! an in-process simulator driven by a [`SimProfile`].

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use rand::Rng;
use serde_json::{json, Value};
use thiserror::Error;

use synapseroute_core::domain::{InferenceOutcome, ModeKind, OptionLetter, QuestionRecord};
use synapseroute_core::embedding::{content_hash, ContentDigest};
use synapseroute_core::parse::parse_answer_letter;
use synapseroute_core::prompt::{build_prompt, feature_text, query_text, BackendConfig, ChatRequest};
use synapseroute_core::sim::{SimCorpus, SimProfile};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("backend timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
}

/// What a backend returned for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub completion_tokens: u64,
    /// Latency reported by a simulated backend in place of wall-clock time.
    pub simulated_latency_ms: Option<u64>,
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;

    async fn health(&self) -> bool {
        true
    }
}

/// Turns a backend response into an outcome for a question with the given
/// option letters and (optional) gold answer.
pub fn outcome_from_response(
    mode: ModeKind,
    response: ChatResponse,
    allowed: &[OptionLetter],
    gold: Option<OptionLetter>,
    wall_ms: u64,
) -> InferenceOutcome {
    let parsed = parse_answer_letter(&response.content, allowed);
    let latency = response.simulated_latency_ms.unwrap_or(wall_ms);
    InferenceOutcome::new(mode, response.content, parsed, gold, response.completion_tokens, latency)
}

/// Asks `question` in `mode` and scores the answer.
pub async fn infer(
    backend: &dyn ChatBackend,
    question: &QuestionRecord,
    mode: ModeKind,
    config: &BackendConfig,
) -> Result<InferenceOutcome, BackendError> {
    let request = build_prompt(question, mode, config);
    let started = Instant::now();
    let response = backend.complete(&request).await?;
    let wall_ms = started.elapsed().as_millis() as u64;
    let allowed: Vec<OptionLetter> = question.letters().collect();
    Ok(outcome_from_response(mode, response, &allowed, Some(question.gold), wall_ms))
}

/// Client for an OpenAI-style `/chat/completions` endpoint.
pub struct HttpBackend {
    client: reqwest::Client,
    config: BackendConfig,
}

enum Attempt {
    Retry(BackendError),
    Fatal(BackendError),
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.request_timeout_ms))
            .build()
            .map_err(|e| BackendError::Unavailable { attempts: 0, message: e.to_string() })?;
        Ok(Self { client, config })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.endpoint_url.trim_end_matches('/'), path)
    }

    /// Request body. A dotted flag key such as
    /// `chat_template_kwargs.enable_thinking` produces a nested object.
    pub fn request_body(&self, request: &ChatRequest) -> Value {
        let mut body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        if let Some(flag) = request.thinking {
            let mut slot = &mut body;
            let mut parts = self.config.thinking_flag_key.split('.').peekable();
            while let Some(part) = parts.next() {
                if parts.peek().is_none() {
                    slot[part] = Value::Bool(flag);
                } else {
                    if !slot[part].is_object() {
                        slot[part] = json!({});
                    }
                    slot = &mut slot[part];
                }
            }
        }
        body
    }

    async fn attempt(&self, body: &Value) -> Result<ChatResponse, Attempt> {
        let resp = self.client.post(self.url("chat/completions")).json(body).send().await.map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(BackendError::Timeout { attempts: 1 })
            } else {
                Attempt::Retry(BackendError::Unavailable { attempts: 1, message: e.to_string() })
            }
        })?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retry(BackendError::Unavailable { attempts: 1, message: format!("HTTP {status}") }));
        }
        if !status.is_success() {
            let text = resp.text().await.unwrap_or_default();
            return Err(Attempt::Fatal(BackendError::Protocol(format!("HTTP {status}: {text}"))));
        }
        let value: Value = resp.json().await.map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(BackendError::Timeout { attempts: 1 })
            } else {
                Attempt::Fatal(BackendError::Protocol(e.to_string()))
            }
        })?;
        parse_completion(&value).map_err(Attempt::Fatal)
    }
}

/// Extracts the answer text and completion token count from a
/// chat-completions response body.
pub fn parse_completion(value: &Value) -> Result<ChatResponse, BackendError> {
    let message = value
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Protocol("missing choices[0].message".into()))?;
    let reasoning = message
        .get("reasoning_content")
        .or_else(|| message.get("reasoning"))
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty());
    let content = match message.get("content") {
        Some(Value::String(s)) => s.as_str(),
        Some(Value::Null) | None if reasoning.is_some() => "",
        _ => return Err(BackendError::Protocol("missing message content".into())),
    };
    let content = match reasoning {
        Some(r) => format!("<think>{r}</think>{content}"),
        None => content.to_owned(),
    };
    let completion_tokens = value
        .pointer("/usage/completion_tokens")
        .and_then(Value::as_u64)
        .ok_or_else(|| BackendError::Protocol("missing usage.completion_tokens".into()))?;
    Ok(ChatResponse { content, completion_tokens, simulated_latency_ms: None })
}

fn with_attempts(err: BackendError, attempts: u32) -> BackendError {
    match err {
        BackendError::Unavailable { message, .. } => BackendError::Unavailable { attempts, message },
        BackendError::Timeout { .. } => BackendError::Timeout { attempts },
        other => other,
    }
}

#[async_trait]
impl ChatBackend for HttpBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = self.request_body(request);
        let max_attempts = self.config.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.attempt(&body).await {
                Ok(r) => return Ok(r),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempt >= max_attempts => return Err(with_attempts(e, attempt)),
                Err(Attempt::Retry(e)) => {
                    let base = self.config.retry_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                    let jitter = rand::rng().random_range(0.5..1.5);
                    let delay = Duration::from_millis((base as f64 * jitter) as u64);
                    tracing::warn!(attempt, error = %e, ?delay, "retrying backend request");
                    tokio::time::sleep(delay).await;
                }
            }
        }
    }

    async fn health(&self) -> bool {
        match self.client.get(self.url("models")).send().await {
            Ok(r) => r.status().is_success(),
            Err(_) => false,
        }
    }
}

/// Model id used to key simulator questions by their featurized text.
const SIM_KEY: &str = "synapseroute-sim";

#[derive(Debug, Clone)]
struct SimEntry {
    id: String,
    gold: Option<OptionLetter>,
    letters: Vec<OptionLetter>,
}

/// Deterministic in-process backend. Questions are recognized by the text
/// of the user message; unknown texts use the profile's default rule.
pub struct SimBackend {
    profile: SimProfile,
    index: HashMap<ContentDigest, SimEntry>,
    requests: [AtomicU64; 2],
    tokens: [AtomicU64; 2],
    fail_next: AtomicU64,
    captured: Option<Mutex<Vec<ChatRequest>>>,
}

fn slot(mode: ModeKind) -> usize {
    match mode {
        ModeKind::Thinking => 0,
        ModeKind::NonThinking => 1,
    }
}

impl SimBackend {
    pub fn new(questions: &[QuestionRecord], profile: SimProfile) -> Self {
        let index = questions
            .iter()
            .map(|q| {
                let entry = SimEntry { id: q.id.clone(), gold: Some(q.gold), letters: q.letters().collect() };
                (content_hash(SIM_KEY, &feature_text(q)), entry)
            })
            .collect();
        Self {
            profile,
            index,
            requests: Default::default(),
            tokens: Default::default(),
            fail_next: AtomicU64::new(0),
            captured: None,
        }
    }

    pub fn from_corpus(corpus: &SimCorpus) -> Self {
        Self::new(&corpus.questions, corpus.profile.clone())
    }

    /// Records every request for later inspection.
    pub fn with_capture(mut self) -> Self {
        self.captured = Some(Mutex::new(Vec::new()));
        self
    }

    /// Makes the next `n` calls fail with [`BackendError::Unavailable`].
    pub fn inject_failures(&self, n: u64) {
        self.fail_next.store(n, Ordering::SeqCst);
    }

    pub fn requests(&self, mode: ModeKind) -> u64 {
        self.requests[slot(mode)].load(Ordering::SeqCst)
    }

    /// Completion tokens served in `mode` so far.
    pub fn tokens(&self, mode: ModeKind) -> u64 {
        self.tokens[slot(mode)].load(Ordering::SeqCst)
    }

    pub fn captured(&self) -> Vec<ChatRequest> {
        self.captured.as_ref().map(|c| c.lock().unwrap().clone()).unwrap_or_default()
    }

    pub fn profile(&self) -> &SimProfile {
        &self.profile
    }

    fn lookup(&self, user: &str) -> SimEntry {
        let digest = content_hash(SIM_KEY, query_text(user));
        match self.index.get(&digest) {
            Some(e) => e.clone(),
            None => SimEntry { id: digest.to_hex(), gold: None, letters: OptionLetter::first(4).to_vec() },
        }
    }
}

#[async_trait]
impl ChatBackend for SimBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        if let Some(c) = &self.captured {
            c.lock().unwrap().push(request.clone());
        }
        let pending = self.fail_next.load(Ordering::SeqCst);
        if pending > 0
            && self.fail_next.compare_exchange(pending, pending - 1, Ordering::SeqCst, Ordering::SeqCst).is_ok()
        {
            return Err(BackendError::Unavailable { attempts: 1, message: "injected failure".into() });
        }
        let user = request
            .last_user_content()
            .ok_or_else(|| BackendError::Protocol("request has no user message".into()))?;
        // Dual-mode models think unless told otherwise.
        let mode = request.requested_mode().unwrap_or(ModeKind::Thinking);
        let entry = self.lookup(user);
        let profile = *self.profile.lookup(&entry.id).mode(mode);
        let answer = match (profile.correct, entry.gold) {
            (true, Some(g)) => g,
            (false, Some(g)) => *entry.letters.iter().find(|l| **l != g).unwrap_or(&g),
            (true, None) => entry.letters[0],
            (false, None) => entry.letters[entry.letters.len() - 1],
        };
        let content = match mode {
            ModeKind::Thinking => format!(
                "<think>\nConsider each option against the findings and rule out the distractors.\n</think>\n\nThe answer is {answer}."
            ),
            ModeKind::NonThinking => answer.to_string(),
        };
        self.requests[slot(mode)].fetch_add(1, Ordering::SeqCst);
        self.tokens[slot(mode)].fetch_add(profile.tokens, Ordering::SeqCst);
        Ok(ChatResponse { content, completion_tokens: profile.tokens, simulated_latency_ms: Some(profile.latency_ms) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use synapseroute_core::prompt::ModeControl;
    use synapseroute_core::sim::{sim_from_distribution, ModeProfile, QuestionProfile};

    fn corpus() -> SimCorpus {
        sim_from_distribution(40, 0.5775, 0.3474, 0.0751, 7).unwrap()
    }

    #[tokio::test]
    async fn simulator_echoes_profile() {
        let c = corpus();
        let backend = SimBackend::from_corpus(&c).with_capture();
        let config = BackendConfig::default();
        for q in &c.questions {
            for mode in [ModeKind::Thinking, ModeKind::NonThinking] {
                let out = infer(&backend, q, mode, &config).await.unwrap();
                let p = c.profile.lookup(&q.id);
                let expected = p.mode(mode);
                assert_eq!(out.correct, expected.correct, "{} {mode:?}", q.id);
                assert_eq!(out.completion_tokens, expected.tokens);
                assert_eq!(out.latency_ms, expected.latency_ms);
            }
        }
        for req in backend.captured() {
            assert!(req.requested_mode().is_some());
        }
        assert_eq!(backend.requests(ModeKind::Thinking), 40);
    }

    #[tokio::test]
    async fn explicit_profile_example() {
        let q = corpus().questions[0].clone();
        let mut profile = SimProfile::default();
        profile.questions.insert(
            q.id.clone(),
            QuestionProfile {
                thinking: ModeProfile { correct: true, tokens: 800, latency_ms: 17_000 },
                non_thinking: ModeProfile { correct: false, tokens: 5, latency_ms: 1_250 },
            },
        );
        let backend = SimBackend::new(std::slice::from_ref(&q), profile);
        let config = BackendConfig { mode_control: ModeControl::PromptSuffix, ..Default::default() };
        let t = infer(&backend, &q, ModeKind::Thinking, &config).await.unwrap();
        assert_eq!((t.correct, t.completion_tokens, t.latency_ms), (true, 800, 17_000));
        let nt = infer(&backend, &q, ModeKind::NonThinking, &config).await.unwrap();
        assert_eq!((nt.correct, nt.completion_tokens), (false, 5));
        assert!(nt.parsed_answer.is_some());
    }

    #[tokio::test]
    async fn unknown_question_uses_default_rule() {
        let backend = SimBackend::new(&[], SimProfile::default());
        let q = corpus().questions[3].clone();
        let out = infer(&backend, &q, ModeKind::NonThinking, &BackendConfig::default()).await.unwrap();
        assert_eq!(out.completion_tokens, 5);
    }

    #[tokio::test]
    async fn injected_failures_then_recovery() {
        let c = corpus();
        let backend = SimBackend::from_corpus(&c);
        backend.inject_failures(2);
        let config = BackendConfig::default();
        for _ in 0..2 {
            assert!(matches!(
                infer(&backend, &c.questions[0], ModeKind::Thinking, &config).await,
                Err(BackendError::Unavailable { .. })
            ));
        }
        assert!(infer(&backend, &c.questions[0], ModeKind::Thinking, &config).await.is_ok());
    }

    #[test]
    fn request_body_flag_placement() {
        let q = corpus().questions[0].clone();
        let mut config = BackendConfig::default();
        let req = build_prompt(&q, ModeKind::NonThinking, &config);
        let body = HttpBackend::new(config.clone()).unwrap().request_body(&req);
        assert_eq!(body["enable_thinking"], Value::Bool(false));
        config.thinking_flag_key = "chat_template_kwargs.enable_thinking".into();
        let body = HttpBackend::new(config.clone()).unwrap().request_body(&req);
        assert_eq!(body["chat_template_kwargs"]["enable_thinking"], Value::Bool(false));
        config.mode_control = ModeControl::PromptSuffix;
        let req = build_prompt(&q, ModeKind::NonThinking, &config);
        let body = HttpBackend::new(config).unwrap().request_body(&req);
        assert!(body.get("chat_template_kwargs").is_none());
        assert!(body["messages"][0]["content"].as_str().unwrap().ends_with("/no_think"));
    }

    #[test]
    fn completion_parsing() {
        let ok = json!({"choices": [{"message": {"content": "B"}}], "usage": {"completion_tokens": 5}});
        assert_eq!(parse_completion(&ok).unwrap().completion_tokens, 5);
        let reasoning = json!({
            "choices": [{"message": {"content": "Answer: C", "reasoning_content": "A looks wrong"}}],
            "usage": {"completion_tokens": 40}
        });
        assert_eq!(parse_completion(&reasoning).unwrap().content, "<think>A looks wrong</think>Answer: C");
        let no_usage = json!({"choices": [{"message": {"content": "B"}}]});
        assert!(matches!(parse_completion(&no_usage), Err(BackendError::Protocol(_))));
        assert!(matches!(parse_completion(&json!({})), Err(BackendError::Protocol(_))));
    }
}
