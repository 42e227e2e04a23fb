//! OpenAI-compatible embeddings and chat-completions clients.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use pathbank_core::embed::{EmbedError, Embedder};
use pathbank_core::teacher::{BackendError, ChatBackend, Completion, TeacherCall, TokenUsage};
use pathbank_core::Vector;
use serde_json::{json, Value};

pub const EMBED_CHUNK: usize = 64;
pub const DEFAULT_RETRIES: u32 = 2;
pub const DEFAULT_BACKOFF: Duration = Duration::from_millis(250);
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct InFlightLimit {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a InFlightLimit);

impl InFlightLimit {
    pub fn new(limit: usize) -> Self {
        Self { limit: limit.max(1), active: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpSettings {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl HttpSettings {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            retries: DEFAULT_RETRIES,
            backoff: DEFAULT_BACKOFF,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HttpError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
}

impl HttpError {
    fn retryable(&self) -> bool {
        match self {
            HttpError::Timeout | HttpError::Transport(_) => true,
            HttpError::Status { status, .. } => *status == 429 || *status >= 500,
            HttpError::Protocol(_) => false,
        }
    }
}

/// JSON-over-HTTP POST with bounded concurrency and retry.
pub struct JsonClient {
    agent: ureq::Agent,
    settings: HttpSettings,
    limit: InFlightLimit,
}

impl JsonClient {
    pub fn new(settings: HttpSettings) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let limit = InFlightLimit::new(settings.max_in_flight);
        Self { agent, settings, limit }
    }

    pub fn settings(&self) -> &HttpSettings {
        &self.settings
    }

    fn post_once(&self, body: &str) -> Result<Value, HttpError> {
        let _permit = self.limit.acquire();
        let mut req = self.agent.post(&self.settings.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.settings.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => HttpError::Timeout,
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => HttpError::Timeout,
            other => HttpError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => HttpError::Timeout,
            other => HttpError::Transport(other.to_string()),
        })?;
        if !(200..300).contains(&status) {
            return Err(HttpError::Status { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| HttpError::Protocol(format!("invalid JSON: {e}")))
    }

    /// Posts `body`, retrying transient failures with exponential backoff.
    pub fn post(&self, body: &Value) -> Result<Value, HttpError> {
        let text = body.to_string();
        let mut attempt = 0;
        loop {
            match self.post_once(&text) {
                Err(e) if e.retryable() && attempt < self.settings.retries => {
                    let wait = self.settings.backoff * 2u32.pow(attempt);
                    warn!("{} failed ({e}); retrying in {wait:?}", self.settings.endpoint);
                    thread::sleep(wait);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Embedding provider speaking `{"model", "input": [...]}` and reading
/// `{"data": [{"embedding": [...]}]}`.
pub struct HttpEmbedder {
    client: JsonClient,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(settings: HttpSettings, dim: usize) -> Result<Self, EmbedError> {
        if dim < pathbank_core::embed::MIN_DIM {
            return Err(EmbedError::InvalidConfig(format!("dim must be at least {}", pathbank_core::embed::MIN_DIM)));
        }
        if settings.endpoint.is_empty() || settings.model.is_empty() {
            return Err(EmbedError::InvalidConfig("http provider needs endpoint and model".into()));
        }
        Ok(Self { client: JsonClient::new(settings), dim })
    }

    fn embed_chunk(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        let body = json!({ "model": self.client.settings().model, "input": texts });
        let resp = self.client.post(&body).map_err(|e| match e {
            HttpError::Timeout => EmbedError::Timeout,
            other => EmbedError::Protocol(other.to_string()),
        })?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::Protocol("response has no data array".into()))?;
        if data.len() != texts.len() {
            return Err(EmbedError::Protocol(format!("sent {} inputs, got {} embeddings", texts.len(), data.len())));
        }
        let mut slots: Vec<Option<Vector>> = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let index = match item.get("index") {
                Some(i) => i
                    .as_u64()
                    .map(|i| i as usize)
                    .filter(|i| *i < texts.len())
                    .ok_or_else(|| EmbedError::Protocol("bad embedding index".into()))?,
                None => pos,
            };
            let values: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| EmbedError::Protocol("item has no embedding".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| EmbedError::Protocol("non-numeric component".into())))
                .collect::<Result<_, _>>()?;
            if values.len() != self.dim {
                return Err(EmbedError::DimensionMismatch { expected: self.dim, got: values.len() });
            }
            slots[index] = Some(Vector::normalized(values)?);
        }
        slots.into_iter().map(|v| v.ok_or_else(|| EmbedError::Protocol("duplicate embedding index".into()))).collect()
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fingerprint(&self) -> String {
        format!("http:model={}:dim={}", self.client.settings().model, self.dim)
    }

    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(EMBED_CHUNK) {
            debug!("embedding {} texts", chunk.len());
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }
}

/// Chat-completions teacher sending the rendered prompt as one user message.
pub struct HttpChatBackend {
    client: JsonClient,
    temperature: Option<f64>,
    system_message: Option<String>,
}

impl HttpChatBackend {
    pub fn new(settings: HttpSettings) -> Self {
        Self { client: JsonClient::new(settings), temperature: None, system_message: None }
    }

    pub fn with_temperature(mut self, t: Option<f64>) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_system_message(mut self, m: Option<String>) -> Self {
        self.system_message = m;
        self
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = &self.system_message {
            messages.push(json!({ "role": "system", "content": system }));
        }
        messages.push(json!({ "role": "user", "content": prompt }));
        let mut body = json!({ "model": self.client.settings().model, "messages": messages });
        if let Some(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        body
    }
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, call: &TeacherCall<'_>) -> Result<Completion, BackendError> {
        let resp = self.client.post(&self.request_body(call.prompt)).map_err(|e| match e {
            HttpError::Timeout => BackendError::Timeout,
            HttpError::Transport(m) => BackendError::Transport(m),
            HttpError::Status { status, body } => BackendError::Status { status, body },
            HttpError::Protocol(m) => BackendError::Protocol(m),
        })?;
        let text = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Protocol("response has no choices[0].message.content".into()))?
            .to_string();
        let usage = resp.get("usage").and_then(|u| {
            Some(TokenUsage { input: u.get("prompt_tokens")?.as_u64()?, output: u.get("completion_tokens")?.as_u64()? })
        });
        Ok(Completion { text, usage })
    }
}
