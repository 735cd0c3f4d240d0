use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub url: String,
    pub bearer_token: String,
    pub body: Value,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("HTTP status {code}")]
    Status { code: u16, body: String },
    #[error("unreadable response body: {0}")]
    Body(String),
}

impl TransportError {
    /// Failures worth retrying: timeouts, connection errors, 408, 429, 5xx.
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Timeout | TransportError::Connect(_) => true,
            TransportError::Status { code, .. } => matches!(code, 408 | 429 | 500..=599),
            TransportError::Body(_) => false,
        }
    }
}

/// Posts a JSON body and returns the decoded JSON response.
pub trait Transport: Send + Sync {
    fn post_json(&self, request: &HttpRequest) -> Result<Value, TransportError>;
}

/// Blocking HTTPS transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(concat!("cefrkit/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, request: &HttpRequest) -> Result<Value, TransportError> {
        let response = self
            .client
            .post(&request.url)
            .bearer_auth(&request.bearer_token)
            .timeout(request.timeout)
            .json(&request.body)
            .send()
            .map_err(|e| if e.is_timeout() { TransportError::Timeout } else { TransportError::Connect(e.to_string()) })?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(TransportError::Status { code: status.as_u16(), body });
        }
        response.json::<Value>().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Body(e.to_string())
            }
        })
    }
}
