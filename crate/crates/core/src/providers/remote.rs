use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::transport::{HttpRequest, Transport, TransportError};
use super::{ChatBackend, Embedder, EmbeddingVector, ProviderConfig, ProviderError};

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Exponential backoff: `initial_delay * factor^retry`, stretched by a
/// uniform jitter factor in `[1, 1 + jitter)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub initial_delay: Duration,
    pub factor: f64,
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { initial_delay: Duration::from_millis(500), factor: 2.0, jitter: 0.25 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based); `unit` is a draw in `[0, 1)`.
    pub fn delay(&self, retry: u32, unit: f64) -> Duration {
        let base = self.initial_delay.as_secs_f64() * self.factor.powi(retry as i32);
        Duration::from_secs_f64(base * (1.0 + self.jitter * unit))
    }
}

struct Client {
    config: ProviderConfig,
    api_key: String,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    sleeper: Sleeper,
    jitter_rng: Mutex<ChaCha8Rng>,
}

impl Client {
    fn new(config: ProviderConfig, api_key: String, transport: Arc<dyn Transport>) -> Result<Self, ProviderError> {
        config.validate()?;
        Ok(Self {
            config,
            api_key,
            transport,
            retry: RetryPolicy::default(),
            sleeper: Arc::new(std::thread::sleep),
            jitter_rng: Mutex::new(ChaCha8Rng::seed_from_u64(0)),
        })
    }

    fn post(&self, path: &str, body: Value) -> Result<Value, ProviderError> {
        let request = HttpRequest {
            url: self.config.endpoint(path),
            bearer_token: self.api_key.clone(),
            body,
            timeout: Duration::from_millis(self.config.timeout_ms),
        };
        let mut attempts = 0;
        loop {
            attempts += 1;
            let err = match self.transport.post_json(&request) {
                Ok(value) => return Ok(value),
                Err(err) => err,
            };
            match err {
                TransportError::Status { code: code @ (401 | 403), .. } => return Err(ProviderError::Auth(code)),
                e if e.is_transient() => {
                    if attempts > self.config.max_retries {
                        return Err(ProviderError::RetriesExhausted { attempts, last_error: e.to_string() });
                    }
                    let unit = self.jitter_rng.lock().expect("jitter rng lock").gen::<f64>();
                    (self.sleeper)(self.retry.delay(attempts - 1, unit));
                }
                TransportError::Status { code, body } => return Err(ProviderError::Http { code, body }),
                TransportError::Body(msg) => return Err(ProviderError::MalformedResponse(msg)),
                other => return Err(ProviderError::MalformedResponse(other.to_string())),
            }
        }
    }
}

macro_rules! client_builders {
    ($ty:ty) => {
        impl $ty {
            pub fn with_retry_policy(mut self, policy: RetryPolicy) -> Self {
                self.client.retry = policy;
                self
            }

            pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
                self.client.sleeper = sleeper;
                self
            }

            /// Seeds the backoff jitter.
            pub fn with_seed(self, seed: u64) -> Self {
                *self.client.jitter_rng.lock().expect("jitter rng lock") = ChaCha8Rng::seed_from_u64(seed);
                self
            }

            pub fn config(&self) -> &ProviderConfig {
                &self.client.config
            }
        }
    };
}

/// Chat-completions client.
pub struct RemoteChat {
    client: Client,
}

impl RemoteChat {
    /// Resolves the API key from the environment; fails before any request
    /// when it is missing.
    pub fn new(config: ProviderConfig, transport: Arc<dyn Transport>) -> Result<Self, ProviderError> {
        let key = config.resolve_api_key()?;
        Self::with_api_key(config, key, transport)
    }

    pub fn with_api_key(config: ProviderConfig, api_key: String, transport: Arc<dyn Transport>) -> Result<Self, ProviderError> {
        Ok(Self { client: Client::new(config, api_key, transport)? })
    }
}

client_builders!(RemoteChat);

impl ChatBackend for RemoteChat {
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String, ProviderError> {
        if user_prompt.trim().is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let mut messages = Vec::with_capacity(2);
        if !system_prompt.is_empty() {
            messages.push(json!({"role": "system", "content": system_prompt}));
        }
        messages.push(json!({"role": "user", "content": user_prompt}));
        let body = json!({
            "model": self.client.config.model_id,
            "messages": messages,
            "temperature": self.client.config.temperature,
        });
        let response = self.client.post("chat/completions", body)?;
        response
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::MalformedResponse("missing choices[0].message.content".into()))
    }
}

/// One-shot chat completion against a remote endpoint.
pub fn chat_complete(
    config: &ProviderConfig,
    transport: Arc<dyn Transport>,
    system_prompt: &str,
    user_prompt: &str,
) -> Result<String, ProviderError> {
    RemoteChat::new(config.clone(), transport)?.complete(system_prompt, user_prompt)
}

/// Embeddings client.
pub struct RemoteEmbedder {
    client: Client,
}

impl RemoteEmbedder {
    pub fn new(config: ProviderConfig, transport: Arc<dyn Transport>) -> Result<Self, ProviderError> {
        let key = config.resolve_api_key()?;
        Self::with_api_key(config, key, transport)
    }

    pub fn with_api_key(config: ProviderConfig, api_key: String, transport: Arc<dyn Transport>) -> Result<Self, ProviderError> {
        Ok(Self { client: Client::new(config, api_key, transport)? })
    }
}

client_builders!(RemoteEmbedder);

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let body = json!({"model": self.client.config.model_id, "input": text});
        let response = self.client.post("embeddings", body)?;
        let values = response
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::MalformedResponse("missing data[0].embedding".into()))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| ProviderError::MalformedResponse("non-numeric embedding value".into())))
            .collect::<Result<Vec<f64>, _>>()?;
        EmbeddingVector::new(values)
    }
}
