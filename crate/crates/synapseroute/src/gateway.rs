//! Routing service and its HTTP front end.

use std::future::Future;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::State;
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use synapseroute_core::classifier::{ClassifierError, RouterModel};
use synapseroute_core::domain::{InferenceOutcome, ModeKind, OptionLetter, QuestionRecord};
use synapseroute_core::evaluate::ModeLogRecord;
use synapseroute_core::prompt::{apply_mode, build_prompt, query_text, BackendConfig, ChatMessage, ChatRequest};
use synapseroute_core::route::RouteDecision;

use crate::backend::{outcome_from_response, BackendError, ChatBackend};
use crate::embed::{EmbedError, Embedder};
use crate::jsonl::{FileError, JsonlAppender};

pub const MODE_HEADER: &str = "x-synapseroute-mode";
pub const PROB_HEADER: &str = "x-synapseroute-prob";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("embedding unavailable: {0}")]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("threshold override {0} outside [0, 1]")]
    BadThreshold(f64),
}

/// One line of the telemetry log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub timestamp: String,
    pub question_id: Option<String>,
    pub gold: Option<OptionLetter>,
    #[serde(flatten)]
    pub decision: RouteDecision,
    pub mode: ModeKind,
    pub parsed_answer: Option<OptionLetter>,
    pub correct: bool,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

impl TelemetryRecord {
    pub fn new(
        decision: &RouteDecision,
        outcome: &InferenceOutcome,
        question_id: Option<String>,
        gold: Option<OptionLetter>,
    ) -> Self {
        Self {
            timestamp: chrono::Utc::now().to_rfc3339(),
            question_id,
            gold,
            decision: decision.clone(),
            mode: outcome.mode,
            parsed_answer: outcome.parsed_answer,
            correct: outcome.correct,
            completion_tokens: outcome.completion_tokens,
            latency_ms: outcome.latency_ms,
        }
    }

    /// Per-question log row; requests without an id are keyed by their hash.
    pub fn to_mode_log(&self) -> ModeLogRecord {
        ModeLogRecord {
            question_id: self.question_id.clone().unwrap_or_else(|| self.decision.question_hash.to_hex()),
            mode: self.mode,
            gold: self.gold,
            parsed_answer: self.parsed_answer,
            correct: self.correct,
            completion_tokens: self.completion_tokens,
            latency_ms: self.latency_ms,
        }
    }
}

/// Append-only telemetry file shared by all request handlers.
pub struct TelemetrySink {
    file: Mutex<JsonlAppender>,
}

impl TelemetrySink {
    pub fn open(path: &Path) -> Result<Self, FileError> {
        Ok(Self { file: Mutex::new(JsonlAppender::open(path)?) })
    }

    pub fn append(&self, record: &TelemetryRecord) -> Result<(), FileError> {
        self.file.lock().unwrap().append(record)
    }

    pub fn flush(&self) -> Result<(), FileError> {
        self.file.lock().unwrap().flush()
    }
}

/// Caller-supplied identity of a proxied question.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestMeta {
    pub question_id: Option<String>,
    pub gold: Option<OptionLetter>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutedAnswer {
    pub decision: RouteDecision,
    pub outcome: InferenceOutcome,
}

pub struct RouterService {
    model: RouterModel,
    threshold: f64,
    embedder: Arc<Embedder>,
    backend: Arc<dyn ChatBackend>,
    backend_config: BackendConfig,
    fallback_mode: ModeKind,
    telemetry: Option<TelemetrySink>,
}

impl RouterService {
    pub fn new(
        model: RouterModel,
        embedder: Arc<Embedder>,
        backend: Arc<dyn ChatBackend>,
        backend_config: BackendConfig,
    ) -> Self {
        Self {
            threshold: model.threshold,
            model,
            embedder,
            backend,
            backend_config,
            fallback_mode: ModeKind::Thinking,
            telemetry: None,
        }
    }

    pub fn with_threshold_override(mut self, threshold: Option<f64>) -> Result<Self, GatewayError> {
        if let Some(t) = threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(GatewayError::BadThreshold(t));
            }
            self.threshold = t;
        }
        Ok(self)
    }

    pub fn with_fallback_mode(mut self, mode: ModeKind) -> Self {
        self.fallback_mode = mode;
        self
    }

    pub fn with_telemetry(mut self, sink: TelemetrySink) -> Self {
        self.telemetry = Some(sink);
        self
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn model(&self) -> &RouterModel {
        &self.model
    }

    pub fn telemetry(&self) -> Option<&TelemetrySink> {
        self.telemetry.as_ref()
    }

    /// Scores `text` without calling the backend.
    pub async fn classify_only(&self, text: &str) -> Result<RouteDecision, GatewayError> {
        let started = Instant::now();
        let text = query_text(text);
        let vector = self.embedder.embed(text).await?;
        let p = self.model.proba(&vector.values)?;
        let ms = started.elapsed().as_millis() as u64;
        Ok(RouteDecision::scored(self.embedder.key(text), p, self.threshold, ms))
    }

    async fn decide(&self, text: &str) -> RouteDecision {
        let started = Instant::now();
        match self.classify_only(text).await {
            Ok(d) => d,
            Err(e) => {
                tracing::warn!(error = %e, fallback = %self.fallback_mode, "routing fell back");
                let ms = started.elapsed().as_millis() as u64;
                RouteDecision::fallback(self.embedder.key(query_text(text)), self.threshold, self.fallback_mode, ms)
            }
        }
    }

    /// Routes a chat request: decides the mode, rewrites the request's mode
    /// control to match and forwards it.
    pub async fn route_request(
        &self,
        mut request: ChatRequest,
        meta: RequestMeta,
        allowed: &[OptionLetter],
    ) -> Result<RoutedAnswer, GatewayError> {
        let text = request
            .last_user_content()
            .ok_or_else(|| GatewayError::BadRequest("no user message".into()))?
            .to_owned();
        let decision = self.decide(&text).await;
        apply_mode(&mut request, decision.chosen_mode, self.backend_config.mode_control);
        let started = Instant::now();
        let response = self.backend.complete(&request).await?;
        let wall_ms = started.elapsed().as_millis() as u64;
        let outcome = outcome_from_response(decision.chosen_mode, response, allowed, meta.gold, wall_ms);
        if let Some(sink) = &self.telemetry {
            let record = TelemetryRecord::new(&decision, &outcome, meta.question_id, meta.gold);
            if let Err(e) = sink.append(&record) {
                tracing::error!(error = %e, "telemetry write failed");
            }
        }
        Ok(RoutedAnswer { decision, outcome })
    }

    /// Routes a known question; the gold answer is recorded in telemetry.
    pub async fn route_question(&self, question: &QuestionRecord) -> Result<RoutedAnswer, GatewayError> {
        let request = build_prompt(question, self.fallback_mode, &self.backend_config);
        let meta = RequestMeta { question_id: Some(question.id.clone()), gold: Some(question.gold) };
        let allowed: Vec<OptionLetter> = question.letters().collect();
        self.route_request(request, meta, &allowed).await
    }

    pub async fn healthy(&self) -> bool {
        self.backend.health().await
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    #[serde(default)]
    model: Option<String>,
    messages: Vec<ChatMessage>,
    #[serde(default)]
    temperature: Option<f64>,
    #[serde(default)]
    metadata: RequestMeta,
}

#[derive(Deserialize)]
struct RouteBody {
    text: String,
}

fn error_response(status: StatusCode, message: String) -> Response {
    (status, Json(json!({"error": {"message": message}}))).into_response()
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let status = match &self {
            GatewayError::BadRequest(_) => StatusCode::BAD_REQUEST,
            GatewayError::Embedding(_) => StatusCode::SERVICE_UNAVAILABLE,
            GatewayError::Backend(BackendError::Timeout { .. }) => StatusCode::GATEWAY_TIMEOUT,
            GatewayError::Backend(_) => StatusCode::BAD_GATEWAY,
            GatewayError::Classifier(_) | GatewayError::BadThreshold(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        error_response(status, self.to_string())
    }
}

async fn chat_completions(State(service): State<Arc<RouterService>>, body: Json<Value>) -> Response {
    let body: CompletionBody = match serde_json::from_value(body.0) {
        Ok(b) => b,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let model = body.model.filter(|m| !m.is_empty()).unwrap_or_else(|| service.backend_config.model_name.clone());
    let request =
        ChatRequest { model: model.clone(), messages: body.messages, thinking: None, temperature: body.temperature.unwrap_or(0.0) };
    let routed = match service.route_request(request, body.metadata, &OptionLetter::ALL).await {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    let RoutedAnswer { decision, outcome } = routed;
    let mut headers = HeaderMap::new();
    headers.insert(MODE_HEADER, HeaderValue::from_static(decision.chosen_mode.as_str()));
    let prob = decision.probability_thinking.map_or_else(|| "null".to_string(), |p| p.to_string());
    headers.insert(PROB_HEADER, HeaderValue::from_str(&prob).expect("numeric header"));
    let body = json!({
        "id": format!("chatcmpl-{}", &decision.question_hash.to_hex()[..24]),
        "object": "chat.completion",
        "created": chrono::Utc::now().timestamp(),
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": outcome.raw_output},
            "finish_reason": "stop",
        }],
        "usage": {
            "completion_tokens": outcome.completion_tokens,
            "total_tokens": outcome.completion_tokens,
        },
        "synapseroute": decision,
    });
    (headers, Json(body)).into_response()
}

async fn route(State(service): State<Arc<RouterService>>, body: Json<Value>) -> Response {
    let body: RouteBody = match serde_json::from_value(body.0) {
        Ok(b) => b,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, e.to_string()),
    };
    match service.classify_only(&body.text).await {
        Ok(d) => Json(d).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn healthz(State(service): State<Arc<RouterService>>) -> Response {
    if service.healthy().await {
        (StatusCode::OK, Json(json!({"status": "ok"}))).into_response()
    } else {
        error_response(StatusCode::SERVICE_UNAVAILABLE, "backend unreachable".into())
    }
}

pub fn app(service: Arc<RouterService>) -> Router {
    Router::new()
        .route("/v1/chat/completions", post(chat_completions))
        .route("/v1/route", post(route))
        .route("/healthz", get(healthz))
        .with_state(service)
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    service: Arc<RouterService>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app(service)).with_graceful_shutdown(shutdown).await
}
