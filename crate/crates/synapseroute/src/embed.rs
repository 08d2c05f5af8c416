//! Sentence embeddings with a persistent content-addressed cache.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use async_trait::async_trait;
use futures::{StreamExt, TryStreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use synapseroute_core::embedding::{content_hash, hashing_embedding, ContentDigest, EmbeddingVector, VectorError};

use crate::jsonl::{read_jsonl_lenient, FileError, JsonlAppender};

pub const DEFAULT_EMBED_MODEL: &str = "BAAI/bge-large-en-v1.5";
pub const DEFAULT_EMBED_DIM: usize = 1024;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding service unavailable: {0}")]
    Unavailable(String),
    #[error("embedding has {got} dimensions, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error("embedding cache: {0}")]
    Cache(#[from] FileError),
}

/// Source of raw (unnormalized) embeddings.
#[async_trait]
pub trait EmbeddingService: Send + Sync {
    fn model_id(&self) -> &str;

    async fn embed_raw(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Client for an OpenAI-style `/embeddings` endpoint.
pub struct HttpEmbeddingService {
    client: reqwest::Client,
    url: String,
    model: String,
}

impl HttpEmbeddingService {
    pub fn new(url: &str, model: &str, timeout: Duration) -> Result<Self, EmbedError> {
        let client =
            reqwest::Client::builder().timeout(timeout).build().map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        Ok(Self { client, url: format!("{}/embeddings", url.trim_end_matches('/')), model: model.into() })
    }
}

#[async_trait]
impl EmbeddingService for HttpEmbeddingService {
    fn model_id(&self) -> &str {
        &self.model
    }

    async fn embed_raw(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let resp = self
            .client
            .post(&self.url)
            .json(&json!({"model": self.model, "input": text}))
            .send()
            .await
            .map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EmbedError::Unavailable(format!("HTTP {}", resp.status())));
        }
        let value: Value = resp.json().await.map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        let array = value
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::Unavailable("response has no data[0].embedding".into()))?;
        array
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| EmbedError::Unavailable("non-numeric embedding entry".into())))
            .collect()
    }
}

/// Local feature-hashing embedder for offline and simulated runs.
pub struct HashingEmbeddingService {
    dim: usize,
    model_id: String,
}

impl HashingEmbeddingService {
    pub fn new(dim: usize) -> Self {
        Self { dim, model_id: format!("hashing-{dim}") }
    }
}

#[async_trait]
impl EmbeddingService for HashingEmbeddingService {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    async fn embed_raw(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        Ok(hashing_embedding(text, self.dim))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingCacheEntry {
    pub content_hash: ContentDigest,
    pub vector: EmbeddingVector,
}

/// In-memory map backed by an optional append-only JSON-lines file.
#[derive(Default)]
pub struct EmbeddingCache {
    map: RwLock<HashMap<ContentDigest, Arc<EmbeddingVector>>>,
    file: Option<Mutex<JsonlAppender>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads `path` (if present) and appends new entries to it.
    pub fn open(path: &Path) -> Result<Self, EmbedError> {
        let entries: Vec<EmbeddingCacheEntry> = read_jsonl_lenient(path)?;
        let map = entries.into_iter().map(|e| (e.content_hash, Arc::new(e.vector))).collect();
        Ok(Self { map: RwLock::new(map), file: Some(Mutex::new(JsonlAppender::open(path)?)) })
    }

    pub fn get(&self, key: &ContentDigest) -> Option<Arc<EmbeddingVector>> {
        self.map.read().unwrap().get(key).cloned()
    }

    /// Stores `vector` unless `key` is already present; returns the cached
    /// value either way, so concurrent misses converge on one vector.
    pub fn insert(&self, key: ContentDigest, vector: EmbeddingVector) -> Result<Arc<EmbeddingVector>, EmbedError> {
        let mut map = self.map.write().unwrap();
        if let Some(existing) = map.get(&key) {
            return Ok(existing.clone());
        }
        if let Some(file) = &self.file {
            file.lock().unwrap().append(&EmbeddingCacheEntry { content_hash: key, vector: vector.clone() })?;
        }
        let vector = Arc::new(vector);
        map.insert(key, vector.clone());
        Ok(vector)
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> Option<PathBuf> {
        self.file.as_ref().map(|f| f.lock().unwrap().path().to_path_buf())
    }
}

/// Embeds text through a service, normalizing to unit length and caching
/// by content hash.
pub struct Embedder {
    service: Arc<dyn EmbeddingService>,
    cache: EmbeddingCache,
    dim: usize,
}

impl Embedder {
    pub fn new(service: Arc<dyn EmbeddingService>, cache: EmbeddingCache, dim: usize) -> Self {
        Self { service, cache, dim }
    }

    pub fn model_id(&self) -> &str {
        self.service.model_id()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn key(&self, text: &str) -> ContentDigest {
        content_hash(self.service.model_id(), text)
    }

    pub async fn embed(&self, text: &str) -> Result<Arc<EmbeddingVector>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let key = self.key(text);
        if let Some(v) = self.cache.get(&key) {
            return Ok(v);
        }
        let raw = self.service.embed_raw(text).await?;
        if raw.len() != self.dim {
            return Err(EmbedError::DimensionMismatch { expected: self.dim, got: raw.len() });
        }
        let vector = EmbeddingVector::normalized(raw, self.service.model_id())?;
        self.cache.insert(key, vector)
    }

    /// Embeds `texts` with at most `max_in_flight` service calls outstanding.
    /// Output order follows input order.
    pub async fn embed_batch<S: AsRef<str>>(
        &self,
        texts: &[S],
        max_in_flight: usize,
    ) -> Result<Vec<Arc<EmbeddingVector>>, EmbedError> {
        futures::stream::iter(texts.iter().map(|t| self.embed(t.as_ref())))
            .buffered(max_in_flight.max(1))
            .try_collect()
            .await
    }
}
