//! Text-generation and embedding backends.
//!
//! Remote backends speak the chat-completions / embeddings JSON protocol over
//! a [`Transport`]; mocks are pure functions of their input and never touch
//! a transport.

mod mock;
mod remote;
mod transport;
mod vector;

use serde::{Deserialize, Serialize};

pub use mock::{mock_embed, EchoChat, FixedChat, MockAssessorChat, MockEmbedder, RecordingTransport, ScriptedTransport};
pub use remote::{chat_complete, RemoteChat, RemoteEmbedder, RetryPolicy, Sleeper};
pub use transport::{HttpRequest, HttpTransport, Transport, TransportError};
pub use vector::{cosine, EmbeddingVector, VectorError};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("request failed after {attempts} attempt(s): {last_error}")]
    RetriesExhausted { attempts: u32, last_error: String },
    #[error("HTTP {code}: {body}")]
    Http { code: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("empty input text")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub temperature: f64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model_id: "gpt-3.5-turbo-1106".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_ms: 60_000,
            max_retries: 3,
            temperature: 0.0,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.timeout_ms == 0 {
            return Err(ProviderError::Config("timeout_ms must be positive".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ProviderError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        reqwest::Url::parse(&self.base_url)
            .map_err(|e| ProviderError::Config(format!("invalid base_url `{}`: {e}", self.base_url)))?;
        if self.model_id.trim().is_empty() {
            return Err(ProviderError::Config("model_id is empty".into()));
        }
        Ok(())
    }

    /// Reads the API key from the configured environment variable.
    pub fn resolve_api_key(&self) -> Result<String, ProviderError> {
        match std::env::var(&self.api_key_env) {
            Ok(key) if !key.trim().is_empty() => Ok(key),
            _ => Err(ProviderError::Config(format!("environment variable {} is not set", self.api_key_env))),
        }
    }

    pub(crate) fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }

    /// Sets one field from its name, as used by `--provider.<role>.<field>` flags.
    pub fn set_field(&mut self, field: &str, value: &str) -> Result<(), ProviderError> {
        let bad = |e: &dyn std::fmt::Display| ProviderError::Config(format!("invalid value `{value}` for {field}: {e}"));
        match field.replace('-', "_").as_str() {
            "base_url" => self.base_url = value.to_string(),
            "model_id" | "model" => self.model_id = value.to_string(),
            "api_key_env" => self.api_key_env = value.to_string(),
            "timeout_ms" => self.timeout_ms = value.parse().map_err(|e| bad(&e))?,
            "max_retries" => self.max_retries = value.parse().map_err(|e| bad(&e))?,
            "temperature" => self.temperature = value.parse().map_err(|e| bad(&e))?,
            other => return Err(ProviderError::Config(format!("unknown provider field `{other}`"))),
        }
        Ok(())
    }
}

/// A text-generation backend.
pub trait ChatBackend: Send + Sync {
    /// Returns the first completion for the prompt pair. An empty system
    /// prompt sends only the user message.
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String, ProviderError>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<T> {
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(system_prompt, user_prompt)
    }
}

impl<T: Embedder + ?Sized> Embedder for std::sync::Arc<T> {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        (**self).embed(text)
    }
}

/// Embeds every text and checks that all vectors share one dimension.
pub fn embed_batch<E: Embedder + ?Sized>(embedder: &E, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError> {
    let mut out: Vec<EmbeddingVector> = Vec::with_capacity(texts.len());
    for text in texts {
        let v = embedder.embed(text)?;
        if let Some(first) = out.first() {
            if first.dim() != v.dim() {
                return Err(ProviderError::DimMismatch { expected: first.dim(), got: v.dim() });
            }
        }
        out.push(v);
    }
    Ok(out)
}
