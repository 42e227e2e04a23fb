//! Prompt templates and byte-stable placeholder substitution.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{BaselineMode, RoutePlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Categorize,
    Stage1,
    Stage2,
    Cot,
    Freeform,
    SuperCorrect,
}

impl From<BaselineMode> for PromptKind {
    fn from(m: BaselineMode) -> Self {
        match m {
            BaselineMode::Cot => PromptKind::Cot,
            BaselineMode::Freeform => PromptKind::Freeform,
            BaselineMode::SuperCorrect => PromptKind::SuperCorrect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("missing value for placeholder {0}")]
    MissingPlaceholder(&'static str),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PromptInputs<'a> {
    pub question: Option<&'a str>,
    pub category: Option<&'a str>,
    pub intent: Option<&'a str>,
    pub route: Option<&'a RoutePlan>,
}

pub const CATEGORIZE_TEMPLATE: &str = r##"You are a careful problem classifier.
Assign the question below a broad category and a short intent phrase that names the kind of reasoning it requires.

Question: <QUESTION_TEXT>

Output ONLY valid JSON in the following format:
{
  "category": "<CategoryName>",
  "intent": "<intent phrase>"
}

Rules:
- "category" is a single TitleCase word such as Arithmetic, Algebra, Geometry or Commonsense.
- "intent" is a short lowercase phrase naming the reasoning pattern, e.g. "unit-rate computation".
- Reuse the same wording for questions that need the same kind of reasoning.
- Output JSON only; no extra text."##;

pub const COT_TEMPLATE: &str = r##"Think step by step in a few precise steps (no more than six sentences) to solve the problem.

Then output ONLY a compact JSON object of the form:
{
  "rationale": "<explanation>",
  "ans": <numeric_answer>
}

Rules:
- "ans" must be a number, not a string.
- No additional text before or after the JSON.

Question:
<QUESTION_TEXT>"##;

pub const STAGE1_TEMPLATE: &str = r##"You are a rigorous but concise math tutor.
You solve math problems carefully and explain your reasoning briefly and clearly.
Avoid unnecessary prose; show only the key steps needed to reach the answer.

You are solving a math or word problem.
- Decompose the problem into abstract reasoning steps.
- For each step, use a general action name (no question-specific words).
- Each step must show actual computation.

Question: <QUESTION_TEXT>
Category: <ROUTE_CATEGORY>
Intent: <INTENT_TEXT>

Output ONLY valid JSON in the following format, and AVOID question-specific wording in reasoning_path keys:
{
  "route": {
    "difficulty": <1|2|3>,
    "budget": <Follow Budget Contract>,
    "reasoning_path": ["<DescriptiveStepName1>", "<DescriptiveStepName2>", ...]
  },
  "rationale": {
    "<DescriptiveStepName1>": "Step1: <...> Step2: <...> Step3: <...>",
    "<DescriptiveStepName2>": "Step1: <...> Step2: <...>",
    ...
  },
  "ans": <numeric>
}

Hard rules:
- Output must match the required JSON schema exactly.
- "route" must be a dictionary containing exactly: difficulty, budget, and reasoning_path.
- "reasoning_path" must be a list of strings representing ordered steps.
- The keys in "rationale" must match the strings in "reasoning_path" exactly.
- Output JSON only; no extra text.

Budget contract:
- Difficulty 1 implies Budget 2.
- Difficulty 2 or 3 implies Budget 3.
- len(reasoning_path) must be <= budget.

Reasoning key naming policy:
1) Keys must be TitleCase letters only (A-Z, a-z). No spaces, underscores, or digits.
2) Keys must be high-level descriptive summaries of the action taken; avoid question-specific wording.
3) Do NOT use generic sequential names (e.g., StepOne, CalculationOne).

Rationale requirements:
- For each reasoning_path entry, write a detailed multi-step explanation in one string.
- Use Step1:, Step2:, Step3:, ... labels; use as many substeps as needed (substeps do NOT count toward budget).
- Each substep should be concise and computational."##;

pub const STAGE2_TEMPLATE: &str = r##"You are a structured reasoning tutor.
You will be given:
- A math question
- One or more routing plans including:
  - Category
  - Intent
  - Budget
- ReasoningPathOptions (candidate paths)

Pick the best routing plan from the options and follow it if adequate; otherwise,
refine only the reasoning_path conservatively.

Question:
<QUESTION_TEXT>

Route:
<ROUTE_JSON>

Task Instructions:

1) Assess reasoning_path suitability:
- If reasoning_path is missing and reasoning_path_options is provided, select the best option.
- If the selected reasoning_path can solve the problem, keep it unchanged.
- If not, create a revised reasoning_path conservatively:
  * Use Title-Case letters only (A-Z, a-z)
  * No digits, underscores, or question-specific wording
  * Length must be <= budget
- Keep category, intent, difficulty, and budget unchanged.

2) Generate detailed rationale:
- For each entry in the chosen reasoning_path, write a detailed explanation.
- Label sub-steps as Step1:, Step2:, Step3:, ...
- Use as many sub-steps as needed (sub-steps do NOT count toward budget).
- Each sub-step must include explicit computation or derivation when applicable.

3) Final answer:
- Compute the numeric answer and place it in "ans".

Output ONLY valid JSON (no markdown, no extra text):
{
  "route": {
    "category": "<CATEGORY>",
    "intent": ["<INTENT>"],
    "difficulty": <1|2|3>,
    "budget": <BUDGET>,
    "reasoning_path": ["<FinalPath1>", "<FinalPath2_optional>"]
  },
  "rationale": {
    "<DescriptiveStepName1>": "Step1: <...> Step2: <...> Step3: <...>",
    "<DescriptiveStepName2>": "Step1: <...> Step2: <...>",
    ...
  },
  "ans": <numeric>
}

Requirements:
- Each reasoning_path entry must appear exactly once as a key in rationale.
- Keys in rationale must match reasoning_path entries exactly.
- Do not exceed the budget in number of reasoning_path steps.
- Rationale values must be single strings with Step1:, Step2:, ... labels."##;

pub const FREEFORM_TEMPLATE: &str = r##"You are a rigorous but concise math tutor.
You solve math problems carefully and explain your reasoning briefly and clearly.
Avoid unnecessary prose; show only the key steps needed to reach the answer.

You are solving a math or word problem.
- Decompose the problem into abstract reasoning steps.
- For each step, use a general action name (no question-specific words).
- Each step must show actual computation.

Question:
<QUESTION_TEXT>

Your task:
Solve the question and return ONLY a valid JSON object.

Output ONLY valid JSON with freely chosen reasoning paths:
{
  "rationale": {
    "<DescriptiveStepName1>": "<concise derivation>",
    "<DescriptiveStepName2>": "<concise derivation>",
    ...
  },
  "ans": <numeric>
}

Rules:
- Freely choose up to three reasoning paths with high-level, TitleCase names (letters only; no spaces, digits, or underscores).
- Keys must be human-readable action labels (e.g., PlanComputation, CombineTotals); avoid generic names like ReasoningPath1 and avoid question-specific wording.
- Keep each rationale concise and focused on the computation or logic.
- If a second path is unnecessary, omit it.
- "ans" must be numeric (no strings, units, or words).
- Do not include any markdown or extra text; return JSON only."##;

pub const SUPERCORRECT_TEMPLATE: &str = r##"You are a rigorous but concise math tutor.
You solve math problems carefully and explain your reasoning briefly and clearly.
Avoid unnecessary prose; show only the key steps needed to reach the answer.

Transform the solution of the following math problem into a step-by-step XML format.
Each step should be enclosed within tags like <Step1> </Step1>.
For each step, determine if the step is challenging or tricky; if so, add a detailed explanation
enclosed within <Key> </Key> as annotations to help the student understand the step correctly.
After all steps, summarize the common solution pattern to help generalize to similar problems
within <Generalized> </Generalized>. Finally, present the final answer enclosed within
<Answer> </Answer>.

Problem:
<QUESTION_TEXT>"##;

/// Replaces each placeholder in a single left-to-right pass, so values that
/// happen to contain placeholder text are left alone.
fn substitute(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    'scan: while !rest.is_empty() {
        if rest.starts_with('<') {
            for (name, value) in values {
                if let Some(tail) = rest.strip_prefix(name) {
                    out.push_str(value);
                    rest = tail;
                    continue 'scan;
                }
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn inline_list<S: AsRef<str>>(items: &[S]) -> String {
    let parts: Vec<String> = items.iter().map(|s| json_str(s.as_ref())).collect();
    let mut out = String::from("[");
    out.push_str(&parts.join(", "));
    out.push(']');
    out
}

/// The route block shown to the teacher, with one path option per line.
pub fn render_route_json(route: &RoutePlan) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "{{\n  \"category\": {},\n  \"intent\": {},\n  \"difficulty\": {},\n  \"budget\": {},\n  \"reasoning_path_options\": [\n",
        json_str(&route.category),
        inline_list(&route.intent),
        route.difficulty,
        route.budget,
    );
    let n = route.options.len();
    for (i, option) in route.options.iter().enumerate() {
        out.push_str("    ");
        out.push_str(&inline_list(option.steps()));
        if i + 1 < n {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("  ]\n}");
    out
}

fn required<'a>(value: Option<&'a str>, name: &'static str) -> Result<&'a str, PromptError> {
    match value {
        Some(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(PromptError::MissingPlaceholder(name)),
    }
}

pub fn render_prompt(kind: PromptKind, inputs: &PromptInputs<'_>) -> Result<String, PromptError> {
    let question = required(inputs.question, "<QUESTION_TEXT>")?;
    let q = ("<QUESTION_TEXT>", question);
    Ok(match kind {
        PromptKind::Categorize => substitute(CATEGORIZE_TEMPLATE, &[q]),
        PromptKind::Cot => substitute(COT_TEMPLATE, &[q]),
        PromptKind::Freeform => substitute(FREEFORM_TEMPLATE, &[q]),
        PromptKind::SuperCorrect => substitute(SUPERCORRECT_TEMPLATE, &[q]),
        PromptKind::Stage1 => {
            let category = required(inputs.category, "<ROUTE_CATEGORY>")?;
            let intent = required(inputs.intent, "<INTENT_TEXT>")?;
            substitute(STAGE1_TEMPLATE, &[q, ("<ROUTE_CATEGORY>", category), ("<INTENT_TEXT>", intent)])
        }
        PromptKind::Stage2 => {
            let route = inputs.route.ok_or(PromptError::MissingPlaceholder("<ROUTE_JSON>"))?;
            required(Some(&route.category), "<CATEGORY>")?;
            if route.intent.is_empty() || route.intent.iter().any(|t| t.trim().is_empty()) {
                return Err(PromptError::MissingPlaceholder("<INTENT>"));
            }
            if route.options.is_empty() {
                return Err(PromptError::MissingPlaceholder("reasoning_path_options"));
            }
            let json = render_route_json(route);
            substitute(STAGE2_TEMPLATE, &[q, ("<ROUTE_JSON>", &json)])
        }
    })
}
