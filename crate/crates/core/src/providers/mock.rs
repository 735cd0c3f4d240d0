//! Offline test doubles. None of these open a network connection.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::Value;

use super::transport::{HttpRequest, Transport, TransportError};
use super::{ChatBackend, Embedder, EmbeddingVector, ProviderError};
use crate::readability::Coefficients;
use crate::scheme::LabelScheme;
use crate::textproc;

const MIN_MOCK_DIM: usize = 8;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Bag of character trigrams hashed (FNV-1a) into `dim` buckets, then
/// L2-normalized. Texts shorter than three characters use unigrams instead.
/// An empty text yields the zero vector.
///
/// Panics if `dim < 8`.
pub fn mock_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= MIN_MOCK_DIM, "mock embedding dimension must be at least {MIN_MOCK_DIM}");
    let chars: Vec<char> = text.chars().collect();
    let n = if chars.len() >= 3 { 3 } else { 1 };
    let mut buckets = vec![0.0; dim];
    let mut gram = String::new();
    for window in chars.windows(n) {
        gram.clear();
        gram.extend(window);
        buckets[(fnv1a(gram.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = buckets.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        buckets.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector::new(buckets).expect("mock embedding is finite and non-empty")
}

#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    dim: usize,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Result<Self, ProviderError> {
        if dim < MIN_MOCK_DIM {
            return Err(ProviderError::Config(format!("mock embedding dimension must be >= {MIN_MOCK_DIM}, got {dim}")));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        Ok(mock_embed(text, self.dim))
    }
}

/// Replies with the user prompt verbatim.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoChat;

impl ChatBackend for EchoChat {
    fn complete(&self, _system_prompt: &str, user_prompt: &str) -> Result<String, ProviderError> {
        Ok(user_prompt.to_string())
    }
}

/// Always replies with the same text.
#[derive(Debug, Clone)]
pub struct FixedChat(pub String);

impl ChatBackend for FixedChat {
    fn complete(&self, _system_prompt: &str, _user_prompt: &str) -> Result<String, ProviderError> {
        Ok(self.0.clone())
    }
}

/// A deterministic stand-in for an LLM assessor: maps the Flesch-Kincaid
/// grade of the user prompt onto evenly spaced bands of the scheme, from
/// grade -5 (lowest label) to grade 20 (highest), and answers in French.
#[derive(Debug, Clone)]
pub struct MockAssessorChat {
    scheme: LabelScheme,
    coefficients: Coefficients,
}

impl MockAssessorChat {
    pub const GRADE_RANGE: (f64, f64) = (-5.0, 20.0);

    pub fn new(scheme: LabelScheme) -> Self {
        Self { scheme, coefficients: Coefficients::default() }
    }
}

impl ChatBackend for MockAssessorChat {
    fn complete(&self, _system_prompt: &str, user_prompt: &str) -> Result<String, ProviderError> {
        let stats = textproc::compute_stats(user_prompt);
        let Ok(grade) = self.coefficients.fkgl(&stats) else {
            return Ok("Je ne peux pas évaluer ce texte.".into());
        };
        let (lo, hi) = Self::GRADE_RANGE;
        let k = self.scheme.len();
        let band = ((grade - lo) / (hi - lo) * k as f64).floor();
        let rank = band.clamp(0.0, (k - 1) as f64) as usize;
        Ok(format!("Niveau estimé : {}.", self.scheme.at(rank)))
    }
}

/// Replays a fixed script of transport results and records every request.
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<Value, TransportError>>>,
    requests: Mutex<Vec<HttpRequest>>,
}

impl ScriptedTransport {
    pub fn new(script: Vec<Result<Value, TransportError>>) -> Self {
        Self { script: Mutex::new(script.into()), requests: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> usize {
        self.requests.lock().expect("requests lock").len()
    }

    pub fn requests(&self) -> Vec<HttpRequest> {
        self.requests.lock().expect("requests lock").clone()
    }
}

impl Transport for ScriptedTransport {
    fn post_json(&self, request: &HttpRequest) -> Result<Value, TransportError> {
        self.requests.lock().expect("requests lock").push(request.clone());
        self.script
            .lock()
            .expect("script lock")
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::Connect("script exhausted".into())))
    }
}

/// Counts requests and refuses all of them.
#[derive(Debug, Default)]
pub struct RecordingTransport {
    calls: AtomicUsize,
}

impl RecordingTransport {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for RecordingTransport {
    fn post_json(&self, _request: &HttpRequest) -> Result<Value, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(TransportError::Connect("network disabled by recording transport".into()))
    }
}
