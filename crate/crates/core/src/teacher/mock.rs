//! Deterministic teacher backends.
//!
//! [`MockTeacher`] answers from a hidden ground-truth table keyed on question
//! id or text, with seeded noise for novel paths, wrong answers and
//! malformed JSON. With all noise rates at zero it is a pure function of the
//! spec and the call. [`ScriptedBackend`] replays canned replies.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cell::{Cell, RefCell};
use core::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BackendError, BaselineMode, CallContext, ChatBackend, Completion, TeacherCall, TokenUsage};
use crate::embed::hash64;
use crate::types::{budget_for, Question, Rationale, ReasoningPath};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseRates {
    pub novel_path: f64,
    pub wrong_answer: f64,
    pub malformed: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Case-insensitive substring of the question text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
}

impl MockMatch {
    fn matches(&self, q: &Question) -> bool {
        if let Some(id) = &self.id {
            if *id != q.id {
                return false;
            }
        }
        if let Some(needle) = &self.contains {
            if !q.text.to_lowercase().contains(&needle.to_lowercase()) {
                return false;
            }
        }
        true
    }
}

fn default_difficulty() -> u8 {
    1
}

/// What the mock "knows" about a question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockTruth {
    pub category: String,
    pub intent: String,
    #[serde(default = "default_difficulty")]
    pub difficulty: u8,
    pub path: ReasoningPath,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<Rationale>,
    /// Falls back to the question's gold answer, then "0".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    /// Path emitted in Stage 2 instead of any offered option.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub novel_path: Option<ReasoningPath>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub matcher: MockMatch,
    #[serde(flatten)]
    pub truth: MockTruth,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseRates,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<MockTruth>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MockSpecError {
    #[error("noise rate {name} must be in [0, 1]")]
    NoiseRate { name: &'static str },
    #[error("rule {0} has an empty match")]
    EmptyMatch(usize),
    #[error("invalid mock spec: {0}")]
    Parse(String),
}

impl MockSpec {
    pub fn check(&self) -> Result<(), MockSpecError> {
        for (name, p) in [
            ("novel_path", self.noise.novel_path),
            ("wrong_answer", self.noise.wrong_answer),
            ("malformed", self.noise.malformed),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(MockSpecError::NoiseRate { name });
            }
        }
        if let Some(i) = self.rules.iter().position(|r| r.matcher.id.is_none() && r.matcher.contains.is_none()) {
            return Err(MockSpecError::EmptyMatch(i));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, MockSpecError> {
        let spec: MockSpec = serde_json::from_str(text).map_err(|e| MockSpecError::Parse(e.to_string()))?;
        spec.check()?;
        Ok(spec)
    }
}

fn builtin_default() -> MockTruth {
    MockTruth {
        category: "General".into(),
        intent: "general reasoning".into(),
        difficulty: 1,
        path: ReasoningPath::new(["AnalyzeProblem", "DeriveAnswer"]),
        rationale: None,
        answer: None,
        novel_path: None,
    }
}

const NOVEL_VERBS: &[&str] = &["Assess", "Combine", "Derive", "Estimate", "Isolate", "Reduce", "Relate", "Verify"];
const NOVEL_NOUNS: &[&str] = &["Quantities", "Terms", "Totals", "Constraints", "Relations", "Values"];

#[derive(Serialize)]
struct Stage1Out<'a> {
    route: Stage1RouteOut<'a>,
    rationale: Rationale,
    ans: Value,
}

#[derive(Serialize)]
struct Stage1RouteOut<'a> {
    difficulty: u8,
    budget: u8,
    reasoning_path: &'a ReasoningPath,
}

#[derive(Serialize)]
struct Stage2Out<'a> {
    route: Stage2RouteOut<'a>,
    rationale: Rationale,
    ans: Value,
}

#[derive(Serialize)]
struct Stage2RouteOut<'a> {
    category: &'a str,
    intent: &'a [String],
    difficulty: u8,
    budget: u8,
    reasoning_path: &'a ReasoningPath,
}

#[derive(Serialize)]
struct CategorizeOut<'a> {
    category: &'a str,
    intent: &'a str,
}

#[derive(Serialize)]
struct CotOut {
    rationale: String,
    ans: Value,
}

#[derive(Serialize)]
struct FreeformOut {
    rationale: Rationale,
    ans: Value,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("mock replies serialize")
}

fn answer_value(answer: &str) -> Value {
    match serde_json::from_str::<serde_json::Number>(answer) {
        Ok(n) => Value::Number(n),
        Err(_) => Value::String(answer.to_string()),
    }
}

fn perturb(answer: &str) -> String {
    if let Ok(n) = answer.parse::<i64>() {
        return (n.wrapping_add(1)).to_string();
    }
    if let Ok(x) = answer.parse::<f64>() {
        return format!("{}", x + 1.0);
    }
    format!("not {answer}")
}

#[derive(Debug)]
pub struct MockTeacher {
    spec: MockSpec,
    fallback: MockTruth,
    calls: AtomicUsize,
}

impl Clone for MockTeacher {
    fn clone(&self) -> Self {
        Self { spec: self.spec.clone(), fallback: self.fallback.clone(), calls: AtomicUsize::new(self.calls()) }
    }
}

impl MockTeacher {
    pub fn new(spec: MockSpec) -> Result<Self, MockSpecError> {
        spec.check()?;
        let fallback = spec.default.clone().unwrap_or_else(builtin_default);
        Ok(Self { spec, fallback, calls: AtomicUsize::new(0) })
    }

    pub fn spec(&self) -> &MockSpec {
        &self.spec
    }

    /// Number of completions served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn truth_for(&self, q: &Question) -> &MockTruth {
        self.spec.rules.iter().find(|r| r.matcher.matches(q)).map(|r| &r.truth).unwrap_or(&self.fallback)
    }

    fn draw(&self, call: &TeacherCall<'_>, what: &str) -> f64 {
        let h = hash64(
            self.spec.seed,
            &[
                call.question.id.as_bytes(),
                call.kind().as_str().as_bytes(),
                &call.attempt.to_le_bytes(),
                what.as_bytes(),
            ],
        );
        ((h >> 11) as f64) / ((1u64 << 53) as f64)
    }

    fn answer(&self, call: &TeacherCall<'_>, truth: &MockTruth) -> String {
        let base = truth.answer.clone().or_else(|| call.question.gold_answer.clone()).unwrap_or_else(|| "0".into());
        if self.draw(call, "wrong_answer") < self.spec.noise.wrong_answer {
            perturb(&base)
        } else {
            base
        }
    }

    fn rationale(truth: &MockTruth, path: &ReasoningPath) -> Rationale {
        path.steps()
            .iter()
            .map(|step| {
                let text =
                    truth.rationale.as_ref().and_then(|r| r.get(step)).map(str::to_string).unwrap_or_else(|| {
                        format!("Step1: Apply {step} to the given quantities. Step2: Record the intermediate result.")
                    });
                (step.clone(), text)
            })
            .collect()
    }

    fn noise_path(&self, call: &TeacherCall<'_>, budget: u8) -> ReasoningPath {
        let len = usize::from(budget).clamp(1, 2);
        let steps: Vec<String> = (0..len)
            .map(|i| {
                let h =
                    hash64(self.spec.seed, &[call.question.id.as_bytes(), b"novel_step", &(i as u64).to_le_bytes()]);
                let verb = NOVEL_VERBS[(h % NOVEL_VERBS.len() as u64) as usize];
                let noun = NOVEL_NOUNS[((h >> 32) % NOVEL_NOUNS.len() as u64) as usize];
                format!("{verb}{noun}")
            })
            .collect();
        ReasoningPath::new(steps)
    }

    fn reply(&self, call: &TeacherCall<'_>) -> String {
        let truth = self.truth_for(call.question);
        match call.context {
            CallContext::Categorize => json(&CategorizeOut { category: &truth.category, intent: &truth.intent }),
            CallContext::ElicitPath { .. } => {
                let budget = budget_for(truth.difficulty).unwrap_or(truth.difficulty);
                json(&Stage1Out {
                    route: Stage1RouteOut { difficulty: truth.difficulty, budget, reasoning_path: &truth.path },
                    rationale: Self::rationale(truth, &truth.path),
                    ans: answer_value(&self.answer(call, truth)),
                })
            }
            CallContext::Teach { route } => {
                let path = if let Some(p) = &truth.novel_path {
                    p.clone()
                } else if self.draw(call, "novel_path") < self.spec.noise.novel_path {
                    self.noise_path(call, route.budget)
                } else if route.options.contains(&truth.path) {
                    truth.path.clone()
                } else {
                    route.options.first().cloned().unwrap_or_else(|| truth.path.clone())
                };
                json(&Stage2Out {
                    route: Stage2RouteOut {
                        category: &route.category,
                        intent: &route.intent,
                        difficulty: route.difficulty,
                        budget: route.budget,
                        reasoning_path: &path,
                    },
                    rationale: Self::rationale(truth, &path),
                    ans: answer_value(&self.answer(call, truth)),
                })
            }
            CallContext::Baseline(BaselineMode::Cot) => {
                let r = Self::rationale(truth, &truth.path);
                let text: Vec<&str> = r.iter().map(|(_, v)| v).collect();
                json(&CotOut { rationale: text.join(" "), ans: answer_value(&self.answer(call, truth)) })
            }
            CallContext::Baseline(BaselineMode::Freeform) => {
                let path = ReasoningPath::new(truth.path.steps().iter().take(3));
                json(&FreeformOut {
                    rationale: Self::rationale(truth, &path),
                    ans: answer_value(&self.answer(call, truth)),
                })
            }
            CallContext::Baseline(BaselineMode::SuperCorrect) => {
                let mut out = String::new();
                for (i, (step, text)) in Self::rationale(truth, &truth.path).iter().enumerate() {
                    out.push_str(&format!("<Step{n}>{step}: {text}</Step{n}>\n", n = i + 1));
                }
                out.push_str(&format!(
                    "<Generalized>Follow {}.</Generalized>\n<Answer>{}</Answer>",
                    truth.path.joined(),
                    self.answer(call, truth)
                ));
                out
            }
        }
    }
}

impl ChatBackend for MockTeacher {
    fn complete(&self, call: &TeacherCall<'_>) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut text = self.reply(call);
        if self.draw(call, "malformed") < self.spec.noise.malformed {
            let cut = text.char_indices().nth(text.chars().count() / 2).map_or(0, |(i, _)| i);
            text.truncate(cut.max(1));
        }
        let usage = TokenUsage::estimate(call.prompt, &text);
        Ok(Completion { text, usage: Some(usage) })
    }
}

/// Replays queued replies in order; fails once the queue is empty.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    replies: RefCell<VecDeque<Result<String, BackendError>>>,
    fallback: Option<BackendError>,
    calls: Cell<usize>,
    prompts: RefCell<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { replies: RefCell::new(replies.into_iter().map(|s| Ok(s.into())).collect()), ..Default::default() }
    }

    /// A backend whose every call fails with `error`.
    pub fn failing(error: BackendError) -> Self {
        Self { fallback: Some(error), ..Default::default() }
    }

    pub fn push_error(&self, error: BackendError) {
        self.replies.borrow_mut().push_back(Err(error));
    }

    pub fn push(&self, reply: impl Into<String>) {
        self.replies.borrow_mut().push_back(Ok(reply.into()));
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.borrow().clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, call: &TeacherCall<'_>) -> Result<Completion, BackendError> {
        self.calls.set(self.calls.get() + 1);
        self.prompts.borrow_mut().push(call.prompt.to_string());
        match self.replies.borrow_mut().pop_front() {
            Some(Ok(text)) => Ok(Completion { text, usage: None }),
            Some(Err(e)) => Err(e),
            None => Err(self.fallback.clone().unwrap_or_else(|| BackendError::Protocol("script exhausted".into()))),
        }
    }
}
