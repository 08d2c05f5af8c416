//! Chat request construction and mode control.
//!
//! A dual-mode backend is switched either by a boolean request parameter
//! (`enable_thinking` by default) or by suffixing the system prompt with
//! `/think` / `/no_think`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ModeKind, QuestionRecord};

pub const THINK_SUFFIX: &str = "/think";
pub const NO_THINK_SUFFIX: &str = "/no_think";
pub const DEFAULT_THINKING_FLAG_KEY: &str = "enable_thinking";
pub const DEFAULT_SYSTEM_PROMPT: &str =
    "You are a medical expert. Read the multiple-choice question and choose the single best option.";
/// Closing instruction appended to every rendered question.
pub const ANSWER_INSTRUCTION: &str = "Answer with the letter of the correct option only.";

/// How the requested mode is communicated to the backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeControl {
    #[default]
    ParameterFlag,
    PromptSuffix,
}

impl core::str::FromStr for ModeControl {
    type Err = UnknownModeControl;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parameter_flag" | "flag" => Ok(ModeControl::ParameterFlag),
            "prompt_suffix" | "suffix" => Ok(ModeControl::PromptSuffix),
            _ => Err(UnknownModeControl(s.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mode control `{0}` (expected parameter_flag or prompt_suffix)")]
pub struct UnknownModeControl(pub String);

fn default_flag_key() -> String {
    DEFAULT_THINKING_FLAG_KEY.into()
}

fn default_retry_base_ms() -> u64 {
    500
}

/// Connection and prompting settings for a dual-mode chat backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default)]
    pub mode_control: ModeControl,
    pub request_timeout_ms: u64,
    pub max_retries: u32,
    pub system_prompt: String,
    /// Request key carrying the boolean thinking flag.
    #[serde(default = "default_flag_key")]
    pub thinking_flag_key: String,
    /// First backoff delay; doubles on every further retry.
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8000/v1".into(),
            model_name: "Qwen/Qwen3-30B-A3B".into(),
            mode_control: ModeControl::ParameterFlag,
            request_timeout_ms: 300_000,
            max_retries: 3,
            system_prompt: DEFAULT_SYSTEM_PROMPT.into(),
            thinking_flag_key: default_flag_key(),
            retry_base_ms: default_retry_base_ms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("request timeout must be at least 1000 ms, got {0}")]
    TimeoutTooShort(u64),
    #[error("at most 5 retries are allowed, got {0}")]
    TooManyRetries(u32),
    #[error("backend endpoint url is empty")]
    EmptyEndpoint,
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.endpoint_url.trim().is_empty() {
            return Err(ConfigError::EmptyEndpoint);
        }
        if self.request_timeout_ms < 1000 {
            return Err(ConfigError::TimeoutTooShort(self.request_timeout_ms));
        }
        if self.max_retries > 5 {
            return Err(ConfigError::TooManyRetries(self.max_retries));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
}

/// Backend-independent chat request. `thinking` is set only under
/// [`ModeControl::ParameterFlag`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub thinking: Option<bool>,
    pub temperature: f64,
}

impl ChatRequest {
    /// Content of the last user message, if any.
    pub fn last_user_content(&self) -> Option<&str> {
        self.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str())
    }

    /// Mode the request asks for: the explicit flag wins, then a prompt
    /// suffix on the system message. `None` when neither is present.
    pub fn requested_mode(&self) -> Option<ModeKind> {
        if let Some(flag) = self.thinking {
            return Some(if flag { ModeKind::Thinking } else { ModeKind::NonThinking });
        }
        let system = self.messages.iter().find(|m| m.role == Role::System)?;
        let trimmed = system.content.trim_end();
        if trimmed.ends_with(NO_THINK_SUFFIX) {
            Some(ModeKind::NonThinking)
        } else if trimmed.ends_with(THINK_SUFFIX) {
            Some(ModeKind::Thinking)
        } else {
            None
        }
    }
}

/// Stem followed by one `X. text` line per option.
pub fn feature_text(question: &QuestionRecord) -> String {
    let mut out = String::from(question.stem.trim_end());
    for (letter, text) in &question.options {
        out.push('\n');
        out.push(letter.as_char());
        out.push_str(". ");
        out.push_str(text);
    }
    out
}

/// User message sent to the backend: [`feature_text`] plus the answer
/// instruction.
pub fn user_message(question: &QuestionRecord) -> String {
    let mut out = feature_text(question);
    out.push_str("\n\n");
    out.push_str(ANSWER_INSTRUCTION);
    out
}

/// Recovers the featurized text from a user message so that serve-time
/// embeddings match the training features.
pub fn query_text(user_content: &str) -> &str {
    user_content
        .trim_end()
        .strip_suffix(ANSWER_INSTRUCTION)
        .map(str::trim_end)
        .unwrap_or(user_content)
}

fn strip_mode_suffix(prompt: &str) -> &str {
    let trimmed = prompt.trim_end();
    trimmed
        .strip_suffix(NO_THINK_SUFFIX)
        .or_else(|| trimmed.strip_suffix(THINK_SUFFIX))
        .map(str::trim_end)
        .unwrap_or(prompt)
}

/// Rewrites `request` so that it asks for `mode` under `control`. Any mode
/// suffix or flag the caller supplied is replaced.
pub fn apply_mode(request: &mut ChatRequest, mode: ModeKind, control: ModeControl) {
    let system_idx = request.messages.iter().position(|m| m.role == Role::System);
    if let Some(i) = system_idx {
        let base = String::from(strip_mode_suffix(&request.messages[i].content));
        request.messages[i].content = base;
    }
    match control {
        ModeControl::ParameterFlag => request.thinking = Some(mode.is_thinking()),
        ModeControl::PromptSuffix => {
            request.thinking = None;
            let suffix = if mode.is_thinking() { THINK_SUFFIX } else { NO_THINK_SUFFIX };
            match system_idx {
                Some(i) => {
                    let msg = &mut request.messages[i].content;
                    if !msg.is_empty() {
                        msg.push(' ');
                    }
                    msg.push_str(suffix);
                }
                None => request.messages.insert(0, ChatMessage::system(suffix)),
            }
        }
    }
}

/// Request asking `question` in `mode`.
pub fn build_prompt(question: &QuestionRecord, mode: ModeKind, config: &BackendConfig) -> ChatRequest {
    let mut request = ChatRequest {
        model: config.model_name.clone(),
        messages: alloc::vec![
            ChatMessage::system(config.system_prompt.clone()),
            ChatMessage::user(user_message(question)),
        ],
        thinking: None,
        temperature: 0.0,
    };
    apply_mode(&mut request, mode, config.mode_control);
    request
}
