//! Layered settings: config file, then `SYNAPSE_*` environment variables,
//! then command-line flags (applied by the caller).

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use synapseroute_core::domain::ModeKind;
use synapseroute_core::prompt::{BackendConfig, ModeControl};

use crate::embed::{
    EmbedError, EmbeddingCache, EmbeddingService, Embedder, HashingEmbeddingService, HttpEmbeddingService,
    DEFAULT_EMBED_DIM, DEFAULT_EMBED_MODEL,
};

pub const ENV_BACKEND_URL: &str = "SYNAPSE_BACKEND_URL";
pub const ENV_BACKEND_MODEL: &str = "SYNAPSE_BACKEND_MODEL";
pub const ENV_MODE_CONTROL: &str = "SYNAPSE_MODE_CONTROL";
pub const ENV_EMBED_URL: &str = "SYNAPSE_EMBED_URL";
pub const ENV_EMBED_MODEL: &str = "SYNAPSE_EMBED_MODEL";
pub const ENV_EMBED_DIM: &str = "SYNAPSE_EMBED_DIM";

#[derive(Debug, Error)]
pub enum SettingsError {
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{var}: {message}")]
    Env { var: &'static str, message: String },
    #[error("invalid settings: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProvider {
    #[default]
    Http,
    /// Offline feature hashing; needs no service.
    Hashing,
}

impl std::str::FromStr for EmbeddingProvider {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http" => Ok(Self::Http),
            "hashing" => Ok(Self::Hashing),
            _ => Err(format!("unknown embedding provider `{s}` (expected http or hashing)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub provider: EmbeddingProvider,
    pub url: String,
    pub model: String,
    pub dim: usize,
    pub timeout_ms: u64,
    pub cache_path: Option<PathBuf>,
    pub max_in_flight: usize,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        Self {
            provider: EmbeddingProvider::Http,
            url: "http://127.0.0.1:8081/v1".into(),
            model: DEFAULT_EMBED_MODEL.into(),
            dim: DEFAULT_EMBED_DIM,
            timeout_ms: 30_000,
            cache_path: None,
            max_in_flight: 8,
        }
    }
}

impl EmbeddingSettings {
    pub fn build(&self) -> Result<Embedder, EmbedError> {
        let service: Arc<dyn EmbeddingService> = match self.provider {
            EmbeddingProvider::Http => {
                Arc::new(HttpEmbeddingService::new(&self.url, &self.model, Duration::from_millis(self.timeout_ms))?)
            }
            EmbeddingProvider::Hashing => Arc::new(HashingEmbeddingService::new(self.dim)),
        };
        let cache = match &self.cache_path {
            Some(p) => EmbeddingCache::open(p)?,
            None => EmbeddingCache::in_memory(),
        };
        Ok(Embedder::new(service, cache, self.dim))
    }
}

/// Backend section of a config file; unset keys keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub mode_control: Option<ModeControl>,
    pub request_timeout_ms: Option<u64>,
    pub max_retries: Option<u32>,
    pub system_prompt: Option<String>,
    pub thinking_flag_key: Option<String>,
    pub retry_base_ms: Option<u64>,
}

impl BackendSection {
    fn apply(self, c: &mut BackendConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(endpoint_url, model_name, mode_control, request_timeout_ms, max_retries, system_prompt, thinking_flag_key, retry_base_ms);
    }
}

/// Serve against the in-process simulator instead of a real backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorSettings {
    pub questions: PathBuf,
    pub profile: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySettings {
    pub model_path: PathBuf,
    pub threshold_override: Option<f64>,
    pub fallback_mode: ModeKind,
    pub telemetry_path: PathBuf,
    pub listen: String,
    pub simulator: Option<SimulatorSettings>,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            model_path: "model.json".into(),
            threshold_override: None,
            fallback_mode: ModeKind::Thinking,
            telemetry_path: "telemetry.jsonl".into(),
            listen: "127.0.0.1:8080".into(),
            simulator: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SettingsFile {
    backend: BackendSection,
    embedding: EmbeddingSettings,
    gateway: GatewaySettings,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub backend: BackendConfig,
    pub embedding: EmbeddingSettings,
    pub gateway: GatewaySettings,
}

impl Settings {
    /// Reads a TOML or JSON (by extension) settings file.
    pub fn from_file(path: &Path) -> Result<Self, SettingsError> {
        let err = |message: String| SettingsError::File { path: path.to_path_buf(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let file: SettingsFile = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| err(e.to_string()))?
        };
        let mut backend = BackendConfig::default();
        file.backend.apply(&mut backend);
        Ok(Self { backend, embedding: file.embedding, gateway: file.gateway })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, SettingsError> {
        let mut s = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        s.apply_env(|k| std::env::var(k).ok())?;
        Ok(s)
    }

    /// Overlays environment variables looked up through `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), SettingsError> {
        if let Some(v) = var(ENV_BACKEND_URL) {
            self.backend.endpoint_url = v;
        }
        if let Some(v) = var(ENV_BACKEND_MODEL) {
            self.backend.model_name = v;
        }
        if let Some(v) = var(ENV_MODE_CONTROL) {
            self.backend.mode_control =
                v.parse().map_err(|e: synapseroute_core::prompt::UnknownModeControl| SettingsError::Env {
                    var: ENV_MODE_CONTROL,
                    message: e.to_string(),
                })?;
        }
        if let Some(v) = var(ENV_EMBED_URL) {
            self.embedding.url = v;
        }
        if let Some(v) = var(ENV_EMBED_MODEL) {
            self.embedding.model = v;
        }
        if let Some(v) = var(ENV_EMBED_DIM) {
            self.embedding.dim = v
                .parse()
                .map_err(|e: std::num::ParseIntError| SettingsError::Env { var: ENV_EMBED_DIM, message: e.to_string() })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SettingsError> {
        self.backend.validate().map_err(|e| SettingsError::Invalid(e.to_string()))?;
        if let Some(t) = self.gateway.threshold_override {
            if !(0.0..=1.0).contains(&t) {
                return Err(SettingsError::Invalid(format!("threshold_override {t} outside [0, 1]")));
            }
        }
        if self.embedding.dim == 0 {
            return Err(SettingsError::Invalid("embedding dim must be positive".into()));
        }
        Ok(())
    }
}
