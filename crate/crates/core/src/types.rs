//! Shared domain types: questions, reasoning paths, routes, supervision
//! tuples and embedding vectors, plus the supervision-tuple validator.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One training item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QuestionError {
    #[error("question id is empty")]
    EmptyId,
    #[error("question {0}: category and intent must be set together")]
    PartialLabels(String),
    #[error("duplicate question id {0}")]
    DuplicateId(String),
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into(), gold_answer: None, category: None, intent: None }
    }

    pub fn with_gold(mut self, gold: impl Into<String>) -> Self {
        self.gold_answer = Some(gold.into());
        self
    }

    pub fn with_labels(mut self, category: impl Into<String>, intent: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self.intent = Some(intent.into());
        self
    }

    /// Teacher-assigned `(category, intent)` when both are present.
    pub fn labels(&self) -> Option<(&str, &str)> {
        match (&self.category, &self.intent) {
            (Some(c), Some(i)) => Some((c.as_str(), i.as_str())),
            _ => None,
        }
    }

    pub fn check(&self) -> Result<(), QuestionError> {
        if self.id.trim().is_empty() {
            return Err(QuestionError::EmptyId);
        }
        if self.category.is_some() != self.intent.is_some() {
            return Err(QuestionError::PartialLabels(self.id.clone()));
        }
        Ok(())
    }
}

/// Checks per-question invariants and id uniqueness across a dataset.
pub fn check_dataset(questions: &[Question]) -> Result<(), QuestionError> {
    let mut seen = alloc::collections::BTreeSet::new();
    for q in questions {
        q.check()?;
        if !seen.insert(q.id.as_str()) {
            return Err(QuestionError::DuplicateId(q.id.clone()));
        }
    }
    Ok(())
}

/// True when `step` is a letters-only TitleCase name.
pub fn is_title_case(step: &str) -> bool {
    let mut chars = step.chars();
    match chars.next() {
        Some(first) if first.is_ascii_uppercase() => chars.all(|c| c.is_ascii_alphabetic()),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("reasoning path has no steps")]
    Empty,
    #[error("step {0:?} is not a TitleCase letters-only name")]
    NotTitleCase(String),
}

/// An ordered sequence of abstract step names.
///
/// Construction through [`ReasoningPath::new`] only trims whitespace so that
/// malformed teacher output can still be represented and reported; use
/// [`ReasoningPath::parse`] where the naming policy must hold.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct ReasoningPath {
    steps: Vec<String>,
}

impl From<Vec<String>> for ReasoningPath {
    fn from(steps: Vec<String>) -> Self {
        Self::new(steps)
    }
}

impl From<ReasoningPath> for Vec<String> {
    fn from(p: ReasoningPath) -> Self {
        p.steps
    }
}

impl ReasoningPath {
    pub fn new<I, S>(steps: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self { steps: steps.into_iter().map(|s| s.as_ref().trim().to_owned()).collect() }
    }

    pub fn parse<I, S>(steps: I) -> Result<Self, PathError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let path = Self::new(steps);
        path.check()?;
        Ok(path)
    }

    pub fn check(&self) -> Result<(), PathError> {
        if self.steps.is_empty() {
            return Err(PathError::Empty);
        }
        match self.steps.iter().find(|s| !is_title_case(s)) {
            Some(bad) => Err(PathError::NotTitleCase(bad.clone())),
            None => Ok(()),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.check().is_ok()
    }

    pub fn steps(&self) -> &[String] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Steps joined with single spaces; injective for valid paths since
    /// step names cannot contain spaces.
    pub fn joined(&self) -> String {
        self.steps.join(" ")
    }
}

impl fmt::Display for ReasoningPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.steps.join(", "))
    }
}

/// Maximum path length implied by a difficulty level.
pub fn budget_for(difficulty: u8) -> Option<u8> {
    match difficulty {
        1 => Some(2),
        2 | 3 => Some(3),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub category: String,
    pub intent: Vec<String>,
    pub difficulty: u8,
    pub budget: u8,
    #[serde(rename = "reasoning_path")]
    pub path: ReasoningPath,
}

/// Step name to explanation, in insertion order.
///
/// Serialized as a JSON object whose key order is the insertion order.
/// Duplicate keys in the input are kept so validation can report them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Rationale {
    entries: Vec<(String, String)>,
}

impl Rationale {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for Rationale {
    fn from_iter<T: IntoIterator<Item = (K, V)>>(iter: T) -> Self {
        Self { entries: iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect() }
    }
}

impl Serialize for Rationale {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.entries.len()))?;
        for (k, v) in &self.entries {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Rationale {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RationaleVisitor;

        impl<'de> Visitor<'de> for RationaleVisitor {
            type Value = Rationale;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping step names to explanation strings")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Rationale, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, String>()? {
                    entries.push((k, v));
                }
                Ok(Rationale { entries })
            }
        }

        deserializer.deserialize_map(RationaleVisitor)
    }
}

/// One supervision row `(path, rationale, answer)` with its route.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisionTuple {
    pub question_id: String,
    pub route: Route,
    pub rationale: Rationale,
    pub answer: String,
    pub teacher_answer_correct: Option<bool>,
}

/// A rule broken by a teacher reply or supervision tuple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule")]
pub enum Violation {
    BudgetContract { difficulty: u8, budget: u8, steps: usize },
    TitleCase { step: String },
    KeyMismatch { expected: Vec<String>, found: Vec<String> },
    EmptyRationale { step: String },
    MissingSubstep { step: String },
    EmptyPath,
    GenericName { step: String },
    RouteMutated { field: String },
    TooManyPaths { count: usize, max: usize },
    AnswerNotScalar,
    Shape { detail: String },
}

impl Violation {
    /// Name of the broken rule.
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::BudgetContract { .. } => "BudgetContract",
            Violation::TitleCase { .. } => "TitleCase",
            Violation::KeyMismatch { .. } => "KeyMismatch",
            Violation::EmptyRationale { .. } => "EmptyRationale",
            Violation::MissingSubstep { .. } => "MissingSubstep",
            Violation::EmptyPath => "EmptyPath",
            Violation::GenericName { .. } => "GenericName",
            Violation::RouteMutated { .. } => "RouteMutated",
            Violation::TooManyPaths { .. } => "TooManyPaths",
            Violation::AnswerNotScalar => "AnswerNotScalar",
            Violation::Shape { .. } => "Shape",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BudgetContract { difficulty, budget, steps } => {
                write!(f, "BudgetContract: difficulty {difficulty}, budget {budget}, {steps} steps")
            }
            Violation::TitleCase { step } => write!(f, "TitleCase: {step:?}"),
            Violation::KeyMismatch { expected, found } => {
                write!(f, "KeyMismatch: expected {expected:?}, found {found:?}")
            }
            Violation::EmptyRationale { step } => write!(f, "EmptyRationale: {step:?}"),
            Violation::MissingSubstep { step } => write!(f, "MissingSubstep: {step:?}"),
            Violation::EmptyPath => f.write_str("EmptyPath"),
            Violation::GenericName { step } => write!(f, "GenericName: {step:?}"),
            Violation::RouteMutated { field } => write!(f, "RouteMutated: {field}"),
            Violation::TooManyPaths { count, max } => {
                write!(f, "TooManyPaths: {count} > {max}")
            }
            Violation::AnswerNotScalar => f.write_str("AnswerNotScalar"),
            Violation::Shape { detail } => write!(f, "Shape: {detail}"),
        }
    }
}

pub(crate) fn budget_violation(difficulty: u8, budget: u8, steps: usize) -> Option<Violation> {
    let contract_ok = budget_for(difficulty) == Some(budget);
    if contract_ok && steps <= budget as usize {
        None
    } else {
        Some(Violation::BudgetContract { difficulty, budget, steps })
    }
}

pub(crate) fn rationale_violations(rationale: &Rationale, out: &mut Vec<Violation>) {
    for (step, text) in rationale.iter() {
        if text.trim().is_empty() {
            out.push(Violation::EmptyRationale { step: step.to_owned() });
        } else if !text.contains("Step1:") {
            out.push(Violation::MissingSubstep { step: step.to_owned() });
        }
    }
}

/// Reports every broken tuple invariant; never fails.
pub fn validate_supervision_tuple(t: &SupervisionTuple) -> Vec<Violation> {
    let mut out = Vec::new();
    let path = &t.route.path;
    if path.is_empty() {
        out.push(Violation::EmptyPath);
    }
    if let Some(v) = budget_violation(t.route.difficulty, t.route.budget, path.len()) {
        out.push(v);
    }
    for step in path.steps() {
        if !is_title_case(step) {
            out.push(Violation::TitleCase { step: step.clone() });
        }
    }
    let keys: Vec<&str> = t.rationale.keys().collect();
    if keys.len() != path.len() || keys.iter().zip(path.steps()).any(|(k, s)| k.trim() != s) {
        out.push(Violation::KeyMismatch {
            expected: path.steps().to_vec(),
            found: keys.iter().map(|k| (*k).to_owned()).collect(),
        });
    }
    rationale_violations(&t.rationale, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VectorError {
    #[error("vector has no components")]
    Empty,
    #[error("vector component {0} is not finite")]
    NonFinite(usize),
    #[error("vector has zero norm")]
    Zero,
}

/// A finite, fixed-length embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector {
    components: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = VectorError;

    fn try_from(components: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(components)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.components
    }
}

impl Vector {
    pub fn new(components: Vec<f64>) -> Result<Self, VectorError> {
        if components.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(i) = components.iter().position(|x| !x.is_finite()) {
            return Err(VectorError::NonFinite(i));
        }
        Ok(Self { components })
    }

    /// Builds a unit-norm copy of `components`.
    pub fn normalized(components: Vec<f64>) -> Result<Self, VectorError> {
        let v = Self::new(components)?;
        v.to_unit()
    }

    pub fn to_unit(&self) -> Result<Self, VectorError> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(VectorError::Zero);
        }
        Ok(Self { components: self.components.iter().map(|x| x / norm).collect() })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.components.iter().map(|x| x * x).sum())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        self.components.iter().zip(&other.components).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tuple(difficulty: u8, budget: u8, steps: &[&str]) -> SupervisionTuple {
        let path = ReasoningPath::new(steps.iter().copied());
        let rationale = steps.iter().map(|s| (*s, "Step1: compute. Step2: record.")).collect();
        SupervisionTuple {
            question_id: "q1".into(),
            route: Route {
                category: "Arithmetic".into(),
                intent: vec!["unit-rate computation".into()],
                difficulty,
                budget,
                path,
            },
            rationale,
            answer: "160".into(),
            teacher_answer_correct: Some(true),
        }
    }

    fn rules(v: &[Violation]) -> Vec<&'static str> {
        v.iter().map(Violation::rule).collect()
    }

    #[test]
    fn valid_tuple_has_no_violations() {
        let t = tuple(1, 2, &["ComputeUnitRate", "MultiplyByCount"]);
        assert!(validate_supervision_tuple(&t).is_empty());
    }

    #[test]
    fn difficulty_one_requires_budget_two() {
        let t = tuple(1, 3, &["ComputeUnitRate", "MultiplyByCount"]);
        assert_eq!(rules(&validate_supervision_tuple(&t)), ["BudgetContract"]);
    }

    #[test]
    fn underscore_breaks_title_case() {
        let t = tuple(1, 2, &["Step_One"]);
        assert_eq!(rules(&validate_supervision_tuple(&t)), ["TitleCase"]);
    }

    #[test]
    fn path_longer_than_budget() {
        let t = tuple(1, 2, &["A", "B", "C"]);
        assert_eq!(rules(&validate_supervision_tuple(&t)), ["BudgetContract"]);
        let t = tuple(4, 3, &["A"]);
        assert_eq!(rules(&validate_supervision_tuple(&t)), ["BudgetContract"]);
    }

    #[test]
    fn key_order_must_match_path() {
        let mut t = tuple(1, 2, &["ComputeUnitRate", "MultiplyByCount"]);
        t.rationale = [("MultiplyByCount", "Step1: x"), ("ComputeUnitRate", "Step1: y")].into_iter().collect();
        assert_eq!(rules(&validate_supervision_tuple(&t)), ["KeyMismatch"]);
    }

    #[test]
    fn empty_and_unlabelled_rationales() {
        let mut t = tuple(2, 3, &["ComputeUnitRate", "MultiplyByCount"]);
        t.rationale = [("ComputeUnitRate", "  "), ("MultiplyByCount", "just text")].into_iter().collect();
        assert_eq!(rules(&validate_supervision_tuple(&t)), ["EmptyRationale", "MissingSubstep"]);
    }

    #[test]
    fn empty_path_reported() {
        let t = tuple(1, 2, &[]);
        assert_eq!(rules(&validate_supervision_tuple(&t)), ["EmptyPath"]);
    }

    #[test]
    fn title_case_policy() {
        assert!(is_title_case("ComputeUnitRate"));
        assert!(is_title_case("A"));
        for bad in ["computeRate", "Step1", "Step One", "Step_One", "", "Ünit"] {
            assert!(!is_title_case(bad), "{bad}");
        }
    }

    #[test]
    fn path_normalization_trims_only() {
        let a = ReasoningPath::new([" ComputeUnitRate ", "MultiplyByCount"]);
        let b = ReasoningPath::new(["ComputeUnitRate", "MultiplyByCount\n"]);
        assert_eq!(a, b);
        let c = ReasoningPath::new(["computeunitrate", "MultiplyByCount"]);
        assert_ne!(a, c);
        assert_eq!(ReasoningPath::parse(Vec::<String>::new()), Err(PathError::Empty));
    }

    #[test]
    fn rationale_preserves_order_through_json() {
        let r: Rationale = [("Zeta", "Step1: z"), ("Alpha", "Step1: a")].into_iter().collect();
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"Zeta":"Step1: z","Alpha":"Step1: a"}"#);
        let back: Rationale = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn question_label_invariant() {
        let mut q = Question::new("q", "text").with_labels("Arithmetic", "rate");
        assert!(q.check().is_ok());
        q.intent = None;
        assert!(matches!(q.check(), Err(QuestionError::PartialLabels(_))));
        let dup = [Question::new("a", "x"), Question::new("a", "y")];
        assert!(matches!(check_dataset(&dup), Err(QuestionError::DuplicateId(_))));
    }

    #[test]
    fn vector_rejects_non_finite() {
        assert_eq!(Vector::new(vec![1.0, f64::NAN]), Err(VectorError::NonFinite(1)));
        assert_eq!(Vector::normalized(vec![0.0, 0.0]), Err(VectorError::Zero));
        let u = Vector::normalized(vec![3.0, 4.0]).unwrap();
        assert!((u.norm() - 1.0).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn step() -> impl Strategy<Value = String> {
            "[A-Z][a-zA-Z]{0,8}"
        }

        fn path() -> impl Strategy<Value = ReasoningPath> {
            proptest::collection::vec(step(), 1..4).prop_map(ReasoningPath::new)
        }

        proptest! {
            #[test]
            fn path_equality_survives_json(a in path(), b in path()) {
                let a2: ReasoningPath = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
                prop_assert_eq!(&a, &a2);
                prop_assert_eq!(a == b, a2 == b);
            }

            #[test]
            fn validator_is_total(
                difficulty in any::<u8>(),
                budget in any::<u8>(),
                steps in proptest::collection::vec(".{0,6}", 0..5),
                keys in proptest::collection::vec((".{0,6}", ".{0,12}"), 0..5),
            ) {
                let t = SupervisionTuple {
                    question_id: "q".into(),
                    route: Route {
                        category: "c".into(),
                        intent: vec![],
                        difficulty,
                        budget,
                        path: ReasoningPath::new(steps),
                    },
                    rationale: keys.into_iter().collect(),
                    answer: String::new(),
                    teacher_answer_correct: None,
                };
                let _ = validate_supervision_tuple(&t);
            }
        }
    }
}
