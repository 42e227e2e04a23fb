//! Teacher protocol: categorization, seed-path elicitation, path-guided
//! rationale generation and baseline generation.
//!
//! [`Teacher`] renders the prompt, sends it through a [`ChatBackend`],
//! parses and validates the reply, and re-prompts up to `max_retries` times
//! on malformed or invalid output. Backend failures are not retried here;
//! transports handle their own retries.

pub mod mock;
mod parse;
pub mod prompts;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::types::{Question, Rationale, ReasoningPath, SupervisionTuple, Violation};
use parse::ParseFailure;
pub use parse::{is_generic_name, rationale_problems, scalar_answer, strip_fences, FREEFORM_MAX_PATHS};
pub use prompts::{render_prompt, PromptError, PromptInputs, PromptKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMode {
    Cot,
    Freeform,
    #[serde(rename = "supercorrect")]
    SuperCorrect,
}

impl BaselineMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMode::Cot => "cot",
            BaselineMode::Freeform => "freeform",
            BaselineMode::SuperCorrect => "supercorrect",
        }
    }
}

impl core::str::FromStr for BaselineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cot" => Ok(BaselineMode::Cot),
            "freeform" => Ok(BaselineMode::Freeform),
            "supercorrect" => Ok(BaselineMode::SuperCorrect),
            other => Err(alloc::format!("unknown baseline mode {other:?}")),
        }
    }
}

/// The route offered to the teacher in Stage 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub category: String,
    pub intent: Vec<String>,
    pub difficulty: u8,
    pub budget: u8,
    pub options: Vec<ReasoningPath>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input: u64,
    pub output: u64,
}

impl TokenUsage {
    /// Character count divided by four, rounded up.
    pub fn estimate(prompt: &str, reply: &str) -> Self {
        let quarter = |s: &str| (s.chars().count() as u64).div_ceil(4);
        Self { input: quarter(prompt), output: quarter(reply) }
    }

    pub fn add(&mut self, other: TokenUsage) {
        self.input += other.input;
        self.output += other.output;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Categorize,
    ElicitPath,
    Teach,
    Baseline,
}

impl CallKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CallKind::Categorize => "categorize",
            CallKind::ElicitPath => "elicit_path",
            CallKind::Teach => "teach",
            CallKind::Baseline => "baseline",
        }
    }
}

/// Structured inputs behind a prompt. HTTP backends only send the prompt;
/// the mock reads the context directly.
#[derive(Debug, Clone, Copy)]
pub enum CallContext<'a> {
    Categorize,
    ElicitPath { category: &'a str, intent: &'a str },
    Teach { route: &'a RoutePlan },
    Baseline(BaselineMode),
}

#[derive(Debug, Clone, Copy)]
pub struct TeacherCall<'a> {
    pub prompt: &'a str,
    pub question: &'a Question,
    /// Zero-based re-prompt counter.
    pub attempt: u32,
    pub context: CallContext<'a>,
}

impl TeacherCall<'_> {
    pub fn kind(&self) -> CallKind {
        match self.context {
            CallContext::Categorize => CallKind::Categorize,
            CallContext::ElicitPath { .. } => CallKind::ElicitPath,
            CallContext::Teach { .. } => CallKind::Teach,
            CallContext::Baseline(_) => CallKind::Baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Provider-reported usage; estimated from character counts when absent.
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("teacher request timed out")]
    Timeout,
    #[error("teacher transport error: {0}")]
    Transport(String),
    #[error("teacher returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("teacher protocol error: {0}")]
    Protocol(String),
}

pub trait ChatBackend {
    fn complete(&self, call: &TeacherCall<'_>) -> Result<Completion, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, call: &TeacherCall<'_>) -> Result<Completion, BackendError> {
        (**self).complete(call)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TeacherError {
    #[error("question text is empty")]
    EmptyQuestion,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("teacher unavailable: {0}")]
    Unavailable(#[from] BackendError),
    #[error("malformed teacher reply: {0}")]
    Malformed(String),
    #[error("teacher reply violates the schema: {}", join_violations(.0))]
    SchemaViolation(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    let parts: Vec<String> = v.iter().map(|x| alloc::format!("{x}")).collect();
    parts.join("; ")
}

impl TeacherError {
    pub fn is_unavailable(&self) -> bool {
        matches!(self, TeacherError::Unavailable(_))
    }
}

/// A failed teacher call with the tokens it consumed and the last raw reply.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{error}")]
pub struct TeacherFailure {
    pub error: TeacherError,
    pub usage: TokenUsage,
    pub raw_text: Option<String>,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherReply<T> {
    pub value: T,
    pub raw_text: String,
    pub usage: TokenUsage,
    pub attempts: u32,
}

/// Stage-1 output for a seed question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedPath {
    pub difficulty: u8,
    pub budget: u8,
    pub path: ReasoningPath,
    pub rationale: Rationale,
    pub answer: String,
}

/// Stage-2 output; `novel` is set when the path matches none of the options.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taught {
    pub tuple: SupervisionTuple,
    pub novel: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XmlStep {
    pub index: usize,
    pub text: String,
    pub key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaselineOutput {
    Cot { rationale: String, answer: String },
    Freeform { rationale: Rationale, answer: String },
    SuperCorrect { steps: Vec<XmlStep>, generalized: Option<String>, answer: String },
}

impl BaselineOutput {
    pub fn answer(&self) -> &str {
        match self {
            BaselineOutput::Cot { answer, .. }
            | BaselineOutput::Freeform { answer, .. }
            | BaselineOutput::SuperCorrect { answer, .. } => answer,
        }
    }
}

pub const DEFAULT_MAX_RETRIES: u32 = 1;

#[derive(Debug, Clone)]
pub struct Teacher<B> {
    backend: B,
    max_retries: u32,
}

impl<B: ChatBackend> Teacher<B> {
    pub fn new(backend: B) -> Self {
        Self { backend, max_retries: DEFAULT_MAX_RETRIES }
    }

    pub fn with_max_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    pub fn max_retries(&self) -> u32 {
        self.max_retries
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    fn run<T>(
        &self,
        question: &Question,
        prompt: &str,
        context: CallContext<'_>,
        parse: impl Fn(&str) -> Result<T, ParseFailure>,
    ) -> Result<TeacherReply<T>, TeacherFailure> {
        let mut usage = TokenUsage::default();
        let mut last_error = TeacherError::Malformed(String::new());
        let mut last_raw = None;
        for attempt in 0..=self.max_retries {
            let call = TeacherCall { prompt, question, attempt, context };
            let completion = match self.backend.complete(&call) {
                Ok(c) => c,
                Err(e) => {
                    return Err(TeacherFailure {
                        error: TeacherError::Unavailable(e),
                        usage,
                        raw_text: last_raw,
                        attempts: attempt + 1,
                    })
                }
            };
            usage.add(completion.usage.unwrap_or_else(|| TokenUsage::estimate(prompt, &completion.text)));
            match parse(&completion.text) {
                Ok(value) => {
                    return Ok(TeacherReply { value, raw_text: completion.text, usage, attempts: attempt + 1 })
                }
                Err(ParseFailure::Malformed(m)) => last_error = TeacherError::Malformed(m),
                Err(ParseFailure::Schema(v)) => last_error = TeacherError::SchemaViolation(v),
            }
            last_raw = Some(completion.text);
        }
        Err(TeacherFailure { error: last_error, usage, raw_text: last_raw, attempts: self.max_retries + 1 })
    }

    fn prompt(kind: PromptKind, inputs: PromptInputs<'_>) -> Result<String, TeacherFailure> {
        if inputs.question.is_none_or(|q| q.trim().is_empty()) {
            return Err(Self::early(TeacherError::EmptyQuestion));
        }
        render_prompt(kind, &inputs).map_err(|e| Self::early(e.into()))
    }

    fn early(error: TeacherError) -> TeacherFailure {
        TeacherFailure { error, usage: TokenUsage::default(), raw_text: None, attempts: 0 }
    }

    /// Assigns `(category, intent)` to a question.
    pub fn categorize(&self, q: &Question) -> Result<TeacherReply<(String, String)>, TeacherFailure> {
        let prompt =
            Self::prompt(PromptKind::Categorize, PromptInputs { question: Some(&q.text), ..Default::default() })?;
        self.run(q, &prompt, CallContext::Categorize, parse::parse_categorize)
    }

    /// Stage 1: asks for an abstract path, rationale and answer under the
    /// budget contract.
    pub fn elicit_path(
        &self,
        q: &Question,
        category: &str,
        intent: &str,
    ) -> Result<TeacherReply<SeedPath>, TeacherFailure> {
        let prompt = Self::prompt(
            PromptKind::Stage1,
            PromptInputs { question: Some(&q.text), category: Some(category), intent: Some(intent), route: None },
        )?;
        self.run(q, &prompt, CallContext::ElicitPath { category, intent }, |raw| {
            parse::parse_stage1(raw, &q.id, category, intent)
        })
    }

    /// Stage 2: path-guided rationale generation over the retrieved options.
    pub fn teach(&self, q: &Question, route: &RoutePlan) -> Result<TeacherReply<Taught>, TeacherFailure> {
        let prompt = Self::prompt(
            PromptKind::Stage2,
            PromptInputs { question: Some(&q.text), route: Some(route), ..Default::default() },
        )?;
        self.run(q, &prompt, CallContext::Teach { route }, |raw| parse::parse_stage2(raw, &q.id, route))
    }

    pub fn generate_baseline(
        &self,
        q: &Question,
        mode: BaselineMode,
    ) -> Result<TeacherReply<BaselineOutput>, TeacherFailure> {
        let prompt = Self::prompt(mode.into(), PromptInputs { question: Some(&q.text), ..Default::default() })?;
        let parse = match mode {
            BaselineMode::Cot => parse::parse_cot,
            BaselineMode::Freeform => parse::parse_freeform,
            BaselineMode::SuperCorrect => parse::parse_supercorrect,
        };
        self.run(q, &prompt, CallContext::Baseline(mode), parse)
    }
}
