//! TOML run configuration and provider construction.

use std::path::{Path, PathBuf};
use std::time::Duration;

use pathbank_core::embed::{DeterministicEmbedder, EmbedError, Embedder, DEFAULT_DIM, MIN_DIM};
use pathbank_core::pipeline::PipelineConfig;
use pathbank_core::teacher::mock::{MockSpec, MockTeacher};
use pathbank_core::teacher::{BackendError, ChatBackend, Completion, TeacherCall, DEFAULT_MAX_RETRIES};
use pathbank_core::Vector;
use serde::{Deserialize, Serialize};

use crate::http::{HttpChatBackend, HttpEmbedder, HttpSettings, DEFAULT_MAX_IN_FLIGHT};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeacherKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedKind {
    #[default]
    Deterministic,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_spec: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    /// Re-prompts after a malformed or schema-violating reply.
    pub max_retries: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system_message: Option<String>,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            kind: TeacherKind::Mock,
            mock_spec: None,
            endpoint: None,
            model: None,
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            max_retries: DEFAULT_MAX_RETRIES,
            temperature: None,
            system_message: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub kind: EmbedKind,
    pub dim: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            kind: EmbedKind::Deterministic,
            dim: DEFAULT_DIM,
            seed: 0,
            endpoint: None,
            model: None,
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 30,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub teacher: TeacherConfig,
    pub embed: EmbedConfig,
}

impl RunConfig {
    /// Parses a TOML file; relative `mock_spec` paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })?;
        if let (Some(spec), Some(dir)) = (&cfg.teacher.mock_spec, path.parent()) {
            if spec.is_relative() {
                cfg.teacher.mock_spec = Some(dir.join(spec));
            }
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        self.pipeline.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.teacher.kind == TeacherKind::Http && (self.teacher.endpoint.is_none() || self.teacher.model.is_none()) {
            return Err(ConfigError::Invalid("http teacher needs endpoint and model".into()));
        }
        if self.embed.kind == EmbedKind::Http && (self.embed.endpoint.is_none() || self.embed.model.is_none()) {
            return Err(ConfigError::Invalid("http embedder needs endpoint and model".into()));
        }
        if self.embed.dim < MIN_DIM {
            return Err(ConfigError::Invalid(format!("embedding dim must be at least {MIN_DIM}")));
        }
        Ok(())
    }
}

fn settings(
    endpoint: &Option<String>,
    model: &Option<String>,
    key_env: &str,
    timeout: u64,
    in_flight: usize,
) -> HttpSettings {
    let mut s = HttpSettings::new(endpoint.clone().unwrap_or_default(), model.clone().unwrap_or_default());
    s.api_key = std::env::var(key_env).ok().filter(|k| !k.is_empty());
    s.timeout = Duration::from_secs(timeout);
    s.max_in_flight = in_flight;
    s
}

pub enum TeacherProvider {
    Mock(MockTeacher),
    Http(HttpChatBackend),
}

impl TeacherProvider {
    pub fn from_config(cfg: &TeacherConfig) -> Result<Self, ConfigError> {
        Ok(match cfg.kind {
            TeacherKind::Mock => {
                let spec = match &cfg.mock_spec {
                    Some(path) => {
                        let text = std::fs::read_to_string(path)
                            .map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                        MockSpec::from_json(&text)
                            .map_err(|e| ConfigError::Parse { path: path.clone(), message: e.to_string() })?
                    }
                    None => MockSpec::default(),
                };
                TeacherProvider::Mock(MockTeacher::new(spec).map_err(|e| ConfigError::Invalid(e.to_string()))?)
            }
            TeacherKind::Http => TeacherProvider::Http(
                HttpChatBackend::new(settings(
                    &cfg.endpoint,
                    &cfg.model,
                    &cfg.api_key_env,
                    cfg.timeout_secs,
                    cfg.max_in_flight,
                ))
                .with_temperature(cfg.temperature)
                .with_system_message(cfg.system_message.clone()),
            ),
        })
    }

    /// Backend calls made so far, when the provider counts them.
    pub fn calls(&self) -> Option<usize> {
        match self {
            TeacherProvider::Mock(m) => Some(m.calls()),
            TeacherProvider::Http(_) => None,
        }
    }
}

impl ChatBackend for TeacherProvider {
    fn complete(&self, call: &TeacherCall<'_>) -> Result<Completion, BackendError> {
        match self {
            TeacherProvider::Mock(m) => m.complete(call),
            TeacherProvider::Http(h) => h.complete(call),
        }
    }
}

pub enum EmbedProvider {
    Deterministic(DeterministicEmbedder),
    Http(HttpEmbedder),
}

impl EmbedProvider {
    pub fn from_config(cfg: &EmbedConfig) -> Result<Self, ConfigError> {
        let invalid = |e: EmbedError| ConfigError::Invalid(e.to_string());
        Ok(match cfg.kind {
            EmbedKind::Deterministic => {
                EmbedProvider::Deterministic(DeterministicEmbedder::new(cfg.seed, cfg.dim).map_err(invalid)?)
            }
            EmbedKind::Http => EmbedProvider::Http(
                HttpEmbedder::new(
                    settings(&cfg.endpoint, &cfg.model, &cfg.api_key_env, cfg.timeout_secs, cfg.max_in_flight),
                    cfg.dim,
                )
                .map_err(invalid)?,
            ),
        })
    }
}

impl Embedder for EmbedProvider {
    fn dim(&self) -> usize {
        match self {
            EmbedProvider::Deterministic(e) => e.dim(),
            EmbedProvider::Http(e) => e.dim(),
        }
    }
    fn fingerprint(&self) -> String {
        match self {
            EmbedProvider::Deterministic(e) => e.fingerprint(),
            EmbedProvider::Http(e) => e.fingerprint(),
        }
    }
    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        match self {
            EmbedProvider::Deterministic(e) => e.embed(text),
            EmbedProvider::Http(e) => e.embed(text),
        }
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vector>, EmbedError> {
        match self {
            EmbedProvider::Deterministic(e) => e.embed_batch(texts),
            EmbedProvider::Http(e) => e.embed_batch(texts),
        }
    }
}
