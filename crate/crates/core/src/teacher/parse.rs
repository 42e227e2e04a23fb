//! Reply parsing, fence repair and per-kind schema validation.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::error::Category;
use serde_json::Value;

use super::{BaselineOutput, RoutePlan, SeedPath, Taught, XmlStep};
use crate::types::{
    is_title_case, rationale_violations, validate_supervision_tuple, Rationale, ReasoningPath, Route, SupervisionTuple,
    Violation,
};

pub const FREEFORM_MAX_PATHS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ParseFailure {
    Malformed(String),
    Schema(Vec<Violation>),
}

/// Inner text of a fenced code block, if `raw` is one.
pub fn strip_fences(raw: &str) -> Option<&str> {
    let s = raw.trim();
    let body = s.strip_prefix("```")?;
    let body = &body[body.find('\n')? + 1..];
    let body = body.trim_end();
    let body = body.strip_suffix("```")?;
    Some(body.trim())
}

fn try_parse<T: DeserializeOwned>(text: &str) -> Result<T, ParseFailure> {
    if !text.starts_with('{') {
        return Err(ParseFailure::Malformed("reply is not a single JSON object".into()));
    }
    serde_json::from_str(text).map_err(|e| match e.classify() {
        Category::Data => ParseFailure::Schema(vec![Violation::Shape { detail: e.to_string() }]),
        _ => ParseFailure::Malformed(e.to_string()),
    })
}

/// Parses a whole reply as one JSON object; a syntax failure gets one more
/// try with Markdown fences removed.
pub(crate) fn parse_object<T: DeserializeOwned>(raw: &str) -> Result<T, ParseFailure> {
    match try_parse(raw.trim()) {
        Err(ParseFailure::Malformed(first)) => match strip_fences(raw) {
            Some(inner) => try_parse(inner),
            None => Err(ParseFailure::Malformed(first)),
        },
        other => other,
    }
}

const GENERIC_STEMS: &[&str] = &["Step", "Calculation", "Calc", "ReasoningPath", "Path", "Stage", "Phase", "Part"];
const ORDINALS: &[&str] = &[
    "One", "Two", "Three", "Four", "Five", "Six", "Seven", "Eight", "Nine", "Ten", "First", "Second", "Third",
    "Fourth", "Fifth", "Sixth", "Seventh", "Eighth", "Ninth", "Tenth",
];

/// Sequential placeholder names like `StepOne`, `CalculationTwo` or `Step1`.
pub fn is_generic_name(step: &str) -> bool {
    GENERIC_STEMS.iter().any(|stem| match step.strip_prefix(stem) {
        Some(rest) => rest.is_empty() || rest.bytes().all(|b| b.is_ascii_digit()) || ORDINALS.contains(&rest),
        None => false,
    })
}

fn generic_violations(steps: &[String], out: &mut Vec<Violation>) {
    for s in steps {
        if is_generic_name(s) {
            out.push(Violation::GenericName { step: s.clone() });
        }
    }
}

/// Any non-blank scalar, rendered as a string.
pub fn scalar_answer(v: &Value) -> Option<String> {
    let s = match v {
        Value::String(s) => s.trim().to_owned(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        _ => return None,
    };
    if s.is_empty() {
        None
    } else {
        Some(s)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct CategorizeReply {
    pub category: String,
    pub intent: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Stage1Route {
    pub difficulty: u8,
    pub budget: u8,
    pub reasoning_path: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Stage1Reply {
    pub route: Stage1Route,
    pub rationale: Rationale,
    pub ans: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Stage2Route {
    pub category: String,
    pub intent: Vec<String>,
    pub difficulty: u8,
    pub budget: u8,
    pub reasoning_path: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Stage2Reply {
    pub route: Stage2Route,
    pub rationale: Rationale,
    pub ans: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct CotReply {
    pub rationale: String,
    pub ans: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct FreeformReply {
    pub rationale: Rationale,
    pub ans: Value,
}

pub(crate) fn parse_categorize(raw: &str) -> Result<(String, String), ParseFailure> {
    let r: CategorizeReply = parse_object(raw)?;
    let (c, t) = (r.category.trim(), r.intent.trim());
    if c.is_empty() || t.is_empty() {
        return Err(ParseFailure::Schema(vec![Violation::Shape {
            detail: "category and intent must be non-empty".into(),
        }]));
    }
    Ok((c.to_owned(), t.to_owned()))
}

pub(crate) fn parse_stage1(
    raw: &str,
    question_id: &str,
    category: &str,
    intent: &str,
) -> Result<SeedPath, ParseFailure> {
    let r: Stage1Reply = parse_object(raw)?;
    let answer = scalar_answer(&r.ans);
    let tuple = SupervisionTuple {
        question_id: question_id.to_owned(),
        route: Route {
            category: category.to_owned(),
            intent: vec![intent.to_owned()],
            difficulty: r.route.difficulty,
            budget: r.route.budget,
            path: ReasoningPath::new(&r.route.reasoning_path),
        },
        rationale: r.rationale,
        answer: answer.clone().unwrap_or_default(),
        teacher_answer_correct: None,
    };
    let mut violations = validate_supervision_tuple(&tuple);
    generic_violations(tuple.route.path.steps(), &mut violations);
    if answer.is_none() {
        violations.push(Violation::AnswerNotScalar);
    }
    if !violations.is_empty() {
        return Err(ParseFailure::Schema(violations));
    }
    Ok(SeedPath {
        difficulty: tuple.route.difficulty,
        budget: tuple.route.budget,
        path: tuple.route.path,
        rationale: tuple.rationale,
        answer: tuple.answer,
    })
}

pub(crate) fn parse_stage2(raw: &str, question_id: &str, plan: &RoutePlan) -> Result<Taught, ParseFailure> {
    let r: Stage2Reply = parse_object(raw)?;
    let mut violations = Vec::new();
    if r.route.category != plan.category {
        violations.push(Violation::RouteMutated { field: "category".into() });
    }
    if r.route.intent != plan.intent {
        violations.push(Violation::RouteMutated { field: "intent".into() });
    }
    if r.route.difficulty != plan.difficulty {
        violations.push(Violation::RouteMutated { field: "difficulty".into() });
    }
    if r.route.budget != plan.budget {
        violations.push(Violation::RouteMutated { field: "budget".into() });
    }
    let answer = scalar_answer(&r.ans);
    let tuple = SupervisionTuple {
        question_id: question_id.to_owned(),
        route: Route {
            category: plan.category.clone(),
            intent: plan.intent.clone(),
            difficulty: plan.difficulty,
            budget: plan.budget,
            path: ReasoningPath::new(&r.route.reasoning_path),
        },
        rationale: r.rationale,
        answer: answer.clone().unwrap_or_default(),
        teacher_answer_correct: None,
    };
    violations.extend(validate_supervision_tuple(&tuple));
    generic_violations(tuple.route.path.steps(), &mut violations);
    if answer.is_none() {
        violations.push(Violation::AnswerNotScalar);
    }
    if !violations.is_empty() {
        return Err(ParseFailure::Schema(violations));
    }
    let novel = !plan.options.contains(&tuple.route.path);
    Ok(Taught { tuple, novel })
}

pub(crate) fn parse_cot(raw: &str) -> Result<BaselineOutput, ParseFailure> {
    let r: CotReply = parse_object(raw)?;
    let answer = scalar_answer(&r.ans).ok_or(ParseFailure::Schema(vec![Violation::AnswerNotScalar]))?;
    Ok(BaselineOutput::Cot { rationale: r.rationale, answer })
}

pub(crate) fn parse_freeform(raw: &str) -> Result<BaselineOutput, ParseFailure> {
    let r: FreeformReply = parse_object(raw)?;
    let mut violations = Vec::new();
    let keys: Vec<String> = r.rationale.keys().map(str::to_owned).collect();
    if keys.is_empty() {
        violations.push(Violation::EmptyPath);
    }
    if keys.len() > FREEFORM_MAX_PATHS {
        violations.push(Violation::TooManyPaths { count: keys.len(), max: FREEFORM_MAX_PATHS });
    }
    for k in &keys {
        if !is_title_case(k) {
            violations.push(Violation::TitleCase { step: k.clone() });
        }
    }
    generic_violations(&keys, &mut violations);
    for (k, v) in r.rationale.iter() {
        if v.trim().is_empty() {
            violations.push(Violation::EmptyRationale { step: k.to_owned() });
        }
    }
    let answer = scalar_answer(&r.ans);
    if answer.is_none() {
        violations.push(Violation::AnswerNotScalar);
    }
    if !violations.is_empty() {
        return Err(ParseFailure::Schema(violations));
    }
    Ok(BaselineOutput::Freeform { rationale: r.rationale, answer: answer.unwrap_or_default() })
}

fn tagged<'a>(text: &'a str, tag: &str) -> Option<(&'a str, &'a str)> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open)? + open.len();
    let end = start + text[start..].find(&close)?;
    Some((text[start..end].trim(), &text[end + close.len()..]))
}

pub(crate) fn parse_supercorrect(raw: &str) -> Result<BaselineOutput, ParseFailure> {
    let mut steps = Vec::new();
    let mut n = 1;
    while let Some((body, _)) = tagged(raw, &format!("Step{n}")) {
        let key = tagged(body, "Key").map(|(k, _)| k.to_owned());
        steps.push(XmlStep { index: n, text: body.to_owned(), key });
        n += 1;
    }
    let generalized = tagged(raw, "Generalized").map(|(g, _)| g.to_owned());
    let answer = match tagged(raw, "Answer") {
        Some((a, _)) if !a.is_empty() => a.to_owned(),
        _ => return Err(ParseFailure::Malformed("missing <Answer> block".into())),
    };
    Ok(BaselineOutput::SuperCorrect { steps, generalized, answer })
}

/// Rationale checks shared with supervision-tuple validation, exposed for
/// callers that assemble rationales themselves.
pub fn rationale_problems(rationale: &Rationale) -> Vec<Violation> {
    let mut out = Vec::new();
    rationale_violations(rationale, &mut out);
    out
}
