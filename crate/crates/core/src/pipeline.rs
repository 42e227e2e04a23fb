//! The distillation loop.
//!
//! Categorize every question, sample a category-balanced seed set, elicit
//! seed paths, build the bank, then walk all questions in input order:
//! route, retrieve, teach, record the row, stage novel correct paths and
//! re-cluster when the buffer fills. Per-question failures become unparsed
//! rows; only service outages beyond the failure budget abort the run.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bank::{Bank, BankError, FallbackLevel, NoveltyOutcome, ReclusterOutcome, SeedRecord};
use crate::bounds::{plug_in_conditional_entropy, BoundsError};
use crate::cluster::DbscanParams;
use crate::embed::{EmbedError, Embedder};
use crate::teacher::{BaselineMode, BaselineOutput, ChatBackend, RoutePlan, Teacher, TeacherFailure, TokenUsage};
use crate::types::{
    check_dataset, validate_supervision_tuple, Question, QuestionError, Rationale, ReasoningPath, Route,
    SupervisionTuple, Violation,
};

pub const DEFAULT_SEED_FRACTION: f64 = 0.05;
pub const DEFAULT_K_RET: usize = 2;
pub const DEFAULT_TAU_BUF: usize = 16;
pub const DEFAULT_FAILURE_BUDGET: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed_fraction: f64,
    pub k_ret: usize,
    pub tau_buf: usize,
    pub rng_seed: u64,
    pub dbscan: DbscanParams,
    pub baseline_mode: Option<BaselineMode>,
    pub parallelism: usize,
    /// Fraction of planned teacher calls allowed to fail on service errors.
    pub failure_budget: f64,
    pub include_seed_stage1: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed_fraction: DEFAULT_SEED_FRACTION,
            k_ret: DEFAULT_K_RET,
            tau_buf: DEFAULT_TAU_BUF,
            rng_seed: 0,
            dbscan: DbscanParams::default(),
            baseline_mode: None,
            parallelism: 1,
            failure_budget: DEFAULT_FAILURE_BUDGET,
            include_seed_stage1: false,
        }
    }
}

impl PipelineConfig {
    pub fn check(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.to_string()));
        if !(self.seed_fraction > 0.0 && self.seed_fraction <= 1.0) {
            return bad("seed_fraction must be in (0, 1]");
        }
        if self.k_ret == 0 {
            return bad("k_ret must be at least 1");
        }
        if self.tau_buf == 0 {
            return bad("tau_buf must be at least 1");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.failure_budget) {
            return bad("failure_budget must be in [0, 1]");
        }
        self.dbscan.check().map_err(|e| PipelineError::InvalidConfig(format!("{e}")))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Question(#[from] QuestionError),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error("no seed question produced a valid path")]
    EmptySeed,
    #[error("{failures} teacher calls failed, over the budget of {allowed:.2} of {planned} planned")]
    FailureBudgetExceeded { failures: usize, planned: usize, allowed: f64 },
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

impl PipelineError {
    /// Whether the error came from an external teacher or embedding service.
    pub fn is_service(&self) -> bool {
        matches!(
            self,
            PipelineError::FailureBudgetExceeded { .. }
                | PipelineError::Embed(EmbedError::Timeout | EmbedError::Protocol(_))
                | PipelineError::Bank(BankError::Embed(EmbedError::Timeout | EmbedError::Protocol(_)))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SeedError {
    #[error("question {0} has no category")]
    UncategorizedQuestion(String),
    #[error("seed fraction {fraction} of {n} questions selects less than one question")]
    TooSmall { fraction: String, n: usize },
    #[error("seed fraction must be in (0, 1]")]
    InvalidFraction,
}

/// Per-category quotas summing to `size`, apportioned by largest remainder.
/// Remainder ties go to the larger category, then the smaller name.
pub fn seed_quotas(counts: &BTreeMap<String, usize>, size: usize) -> BTreeMap<String, usize> {
    let n: usize = counts.values().sum();
    let mut quotas = BTreeMap::new();
    if n == 0 {
        return quotas;
    }
    let mut rems = Vec::with_capacity(counts.len());
    let mut assigned = 0;
    for (name, &c) in counts {
        let exact = size * c;
        quotas.insert(name.clone(), exact / n);
        assigned += exact / n;
        rems.push((exact % n, c, name));
    }
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(b.2)));
    for (_, _, name) in rems.into_iter().take(size - assigned) {
        *quotas.get_mut(name).expect("known category") += 1;
    }
    quotas
}

/// Category-balanced seed sample of `round(fraction * N)` questions, in
/// input order.
pub fn sample_seed(questions: &[Question], fraction: f64, rng_seed: u64) -> Result<Vec<Question>, SeedError> {
    let idx = sample_seed_indices(questions, fraction, rng_seed)?;
    Ok(idx.into_iter().map(|i| questions[i].clone()).collect())
}

pub fn sample_seed_indices(questions: &[Question], fraction: f64, rng_seed: u64) -> Result<Vec<usize>, SeedError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SeedError::InvalidFraction);
    }
    let mut by_category: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, q) in questions.iter().enumerate() {
        let (category, _) = q.labels().ok_or_else(|| SeedError::UncategorizedQuestion(q.id.clone()))?;
        by_category.entry(category.to_string()).or_default().push(i);
    }
    let n = questions.len();
    if fraction * (n as f64) < 1.0 {
        return Err(SeedError::TooSmall { fraction: format!("{fraction}"), n });
    }
    let size = libm::round(fraction * n as f64) as usize;
    let counts = by_category.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let quotas = seed_quotas(&counts, size);

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut chosen = Vec::with_capacity(size);
    for (category, members) in &by_category {
        let quota = quotas[category];
        let picks = rand::seq::index::sample(&mut rng, members.len(), quota);
        chosen.extend(picks.into_iter().map(|j| members[j]));
    }
    chosen.sort_unstable();
    Ok(chosen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("gold answer is missing")]
pub struct MissingGold;

fn normalize_answer(s: &str) -> &str {
    let t = s.trim();
    t.strip_suffix('.').unwrap_or(t).trim_end()
}

/// Exact match after normalization: numeric comparison at relative
/// tolerance 1e-9 when both sides are numbers, otherwise case-insensitive
/// comparison with internal whitespace collapsed.
pub fn is_correct(predicted: &str, gold: Option<&str>) -> Result<bool, MissingGold> {
    let gold = gold.ok_or(MissingGold)?;
    let (p, g) = (normalize_answer(predicted), normalize_answer(gold));
    if let (Ok(a), Ok(b)) = (p.parse::<f64>(), g.parse::<f64>()) {
        if a.is_finite() && b.is_finite() {
            return Ok(a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs()));
        }
    }
    let fold = |s: &str| -> Vec<String> { s.split_whitespace().map(|w| w.to_lowercase()).collect() };
    Ok(fold(p) == fold(g))
}

/// Teacher-assigned labels, keyed by question id.
pub type CategoryCache = BTreeMap<String, (String, String)>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CategorizationPass {
    pub labels: Vec<Option<(String, String)>>,
    pub cache_hits: usize,
    pub teacher_calls: usize,
    pub failures: Vec<(String, String)>,
    pub unavailable: usize,
    pub usage: TokenUsage,
}

impl CategorizationPass {
    /// Folds one question's outcome into the pass.
    pub fn record(
        &mut self,
        q: &Question,
        result: Result<(String, String), TeacherFailure>,
        usage: TokenUsage,
        cache: &mut CategoryCache,
    ) {
        self.teacher_calls += 1;
        self.usage.add(usage);
        match result {
            Ok(labels) => {
                cache.insert(q.id.clone(), labels.clone());
                self.labels.push(Some(labels));
            }
            Err(f) => {
                if f.error.is_unavailable() {
                    self.unavailable += 1;
                }
                self.failures.push((q.id.clone(), format!("{}", f.error)));
                self.labels.push(None);
            }
        }
    }

    /// Labels already on the question, then the cache.
    pub fn known(q: &Question, cache: &CategoryCache) -> Option<(String, String)> {
        q.labels().map(|(c, t)| (c.to_string(), t.to_string())).or_else(|| cache.get(&q.id).cloned())
    }
}

/// Sequential categorization with cache reuse.
pub fn categorize_all<B: ChatBackend>(
    questions: &[Question],
    teacher: &Teacher<B>,
    cache: &mut CategoryCache,
) -> CategorizationPass {
    let mut pass = CategorizationPass::default();
    for q in questions {
        if let Some(labels) = CategorizationPass::known(q, cache) {
            pass.cache_hits += 1;
            pass.labels.push(Some(labels));
            continue;
        }
        match teacher.categorize(q) {
            Ok(r) => pass.record(q, Ok(r.value), r.usage, cache),
            Err(f) => {
                let usage = f.usage;
                pass.record(q, Err(f), usage, cache)
            }
        }
    }
    pass
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    CacheHit { hits: usize },
    CategorizationFailed { id: String, error: String },
    SeedSampled { ids: Vec<String> },
    SeedFailed { id: String, error: String },
    BankInitialized { revision: u64, k_bank: usize, intents: usize },
    ProvisionalCategory { id: String, category: String, revision: u64 },
    Fallback { id: String, category: String, level: FallbackLevel, revision: u64 },
    Novelty { id: String, outcome: NoveltyOutcome, path: ReasoningPath, revision: u64 },
    Merge { id: String, merged: usize, categories: Vec<String>, revision: u64, k_bank: usize },
    Unparsed { id: String, error: String, revision: u64 },
}

/// One exported supervision row. Rows the teacher failed to produce keep
/// their place with null route, rationale and answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub id: String,
    pub question: String,
    pub route: Option<Route>,
    pub rationale: Option<Rationale>,
    pub ans: Option<String>,
    pub teacher_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
}

impl DatasetRow {
    pub fn from_tuple(q: &Question, t: &SupervisionTuple) -> Self {
        Self {
            id: q.id.clone(),
            question: q.text.clone(),
            route: Some(t.route.clone()),
            rationale: Some(t.rationale.clone()),
            ans: Some(t.answer.clone()),
            teacher_correct: t.teacher_answer_correct,
            error: None,
            stage: None,
        }
    }

    pub fn unparsed(q: &Question, error: String) -> Self {
        Self {
            id: q.id.clone(),
            question: q.text.clone(),
            route: None,
            rationale: None,
            ans: None,
            teacher_correct: Some(false),
            error: Some(error),
            stage: None,
        }
    }

    pub fn is_parsed(&self) -> bool {
        self.route.is_some() && self.rationale.is_some() && self.ans.is_some()
    }

    pub fn to_tuple(&self) -> Option<SupervisionTuple> {
        Some(SupervisionTuple {
            question_id: self.id.clone(),
            route: self.route.clone()?,
            rationale: self.rationale.clone()?,
            answer: self.ans.clone()?,
            teacher_answer_correct: self.teacher_correct,
        })
    }

    /// Schema problems with the row itself. Unparsed rows are well formed
    /// when route, rationale and answer are all absent.
    pub fn violations(&self) -> Vec<Violation> {
        match (&self.route, &self.rationale, &self.ans) {
            (None, None, None) => Vec::new(),
            _ => match self.to_tuple() {
                Some(t) => validate_supervision_tuple(&t),
                None => vec![Violation::Shape { detail: "route, rationale and ans must be present together".into() }],
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTotals {
    pub teacher_in: u64,
    pub teacher_out: u64,
}

impl From<TokenUsage> for TokenTotals {
    fn from(u: TokenUsage) -> Self {
        Self { teacher_in: u.input, teacher_out: u.output }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub n_total: usize,
    pub n_parsed: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    /// Accuracy among parsed rows; null when nothing parsed.
    pub format_validity: Option<f64>,
    pub token_totals: TokenTotals,
}

/// Accuracy over all rows and over parsed rows.
pub fn compute_metrics<I>(rows: I, token_totals: TokenTotals) -> DatasetMetrics
where
    I: IntoIterator<Item = (bool, bool)>,
{
    let (mut n_total, mut n_parsed, mut n_correct) = (0, 0, 0);
    for (parsed, correct) in rows {
        n_total += 1;
        if parsed {
            n_parsed += 1;
            if correct {
                n_correct += 1;
            }
        }
    }
    DatasetMetrics {
        n_total,
        n_parsed,
        n_correct,
        accuracy: if n_total == 0 { 0.0 } else { n_correct as f64 / n_total as f64 },
        format_validity: if n_parsed == 0 { None } else { Some(n_correct as f64 / n_parsed as f64) },
        token_totals,
    }
}

pub fn dataset_metrics(rows: &[DatasetRow], token_totals: TokenTotals) -> DatasetMetrics {
    compute_metrics(
        rows.iter().filter(|r| r.stage.is_none()).map(|r| (r.is_parsed(), r.teacher_correct == Some(true))),
        token_totals,
    )
}

/// Stage-2 difficulty and budget implied by the retrieved paths.
pub fn plan_budget(options: &[(ReasoningPath, f64)]) -> (u8, u8) {
    if options.iter().all(|(p, _)| p.len() <= 2) {
        (1, 2)
    } else {
        (2, 3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub bank: Bank,
    pub rows: Vec<DatasetRow>,
    pub metrics: DatasetMetrics,
    pub events: Vec<Event>,
    pub seed_ids: Vec<String>,
}

struct FailureBudget {
    planned: usize,
    allowed: f64,
    failures: usize,
}

impl FailureBudget {
    fn charge(&mut self, f: &TeacherFailure) -> Result<(), PipelineError> {
        if f.error.is_unavailable() {
            self.failures += 1;
            if self.failures as f64 > self.allowed {
                return Err(PipelineError::FailureBudgetExceeded {
                    failures: self.failures,
                    planned: self.planned,
                    allowed: self.allowed,
                });
            }
        }
        Ok(())
    }
}

fn check_inputs(questions: &[Question], config: &PipelineConfig) -> Result<(), PipelineError> {
    if questions.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    check_dataset(questions)?;
    config.check()
}

/// Categorizes with `cache`, then runs the supervision loop.
pub fn run<B: ChatBackend, E: Embedder + ?Sized>(
    questions: &[Question],
    teacher: &Teacher<B>,
    embedder: &E,
    config: &PipelineConfig,
    cache: &mut CategoryCache,
    created_unix: u64,
) -> Result<PipelineOutput, PipelineError> {
    check_inputs(questions, config)?;
    let pass = categorize_all(questions, teacher, cache);
    run_with_labels(questions, pass, teacher, embedder, config, created_unix)
}

/// The supervision loop over an already completed categorization pass.
pub fn run_with_labels<B: ChatBackend, E: Embedder + ?Sized>(
    questions: &[Question],
    pass: CategorizationPass,
    teacher: &Teacher<B>,
    embedder: &E,
    config: &PipelineConfig,
    created_unix: u64,
) -> Result<PipelineOutput, PipelineError> {
    check_inputs(questions, config)?;
    assert_eq!(pass.labels.len(), questions.len(), "one label slot per question");
    let mut events = Vec::new();
    let mut usage = pass.usage;
    if pass.cache_hits > 0 {
        events.push(Event::CacheHit { hits: pass.cache_hits });
    }
    for (id, error) in &pass.failures {
        events.push(Event::CategorizationFailed { id: id.clone(), error: error.clone() });
    }

    let labelled: Vec<Question> = questions
        .iter()
        .zip(&pass.labels)
        .filter_map(|(q, l)| l.as_ref().map(|(c, t)| q.clone().with_labels(c.clone(), t.clone())))
        .collect();
    let seed = sample_seed(&labelled, config.seed_fraction, config.rng_seed)?;
    events.push(Event::SeedSampled { ids: seed.iter().map(|q| q.id.clone()).collect() });

    let mut budget = FailureBudget {
        planned: pass.teacher_calls + seed.len() + questions.len(),
        allowed: 0.0,
        failures: pass.unavailable,
    };
    budget.allowed = config.failure_budget * budget.planned as f64;
    if budget.failures as f64 > budget.allowed {
        return Err(PipelineError::FailureBudgetExceeded {
            failures: budget.failures,
            planned: budget.planned,
            allowed: budget.allowed,
        });
    }

    let mut records = Vec::new();
    let mut seed_rows = Vec::new();
    for q in &seed {
        let (category, intent) = q.labels().expect("labelled");
        match teacher.elicit_path(q, category, intent) {
            Ok(reply) => {
                usage.add(reply.usage);
                let s = reply.value;
                if config.include_seed_stage1 {
                    let tuple = SupervisionTuple {
                        question_id: q.id.clone(),
                        route: Route {
                            category: category.to_string(),
                            intent: vec![intent.to_string()],
                            difficulty: s.difficulty,
                            budget: s.budget,
                            path: s.path.clone(),
                        },
                        rationale: s.rationale.clone(),
                        answer: s.answer.clone(),
                        teacher_answer_correct: is_correct(&s.answer, q.gold_answer.as_deref()).ok(),
                    };
                    let mut row = DatasetRow::from_tuple(q, &tuple);
                    row.stage = Some("seed_stage1".into());
                    seed_rows.push(row);
                }
                records.push(SeedRecord {
                    category: category.to_string(),
                    intent: intent.to_string(),
                    intent_vector: embedder.embed(intent)?,
                    path: s.path,
                });
            }
            Err(f) => {
                usage.add(f.usage);
                events.push(Event::SeedFailed { id: q.id.clone(), error: format!("{}", f.error) });
                budget.charge(&f)?;
            }
        }
    }
    if records.is_empty() {
        return Err(PipelineError::EmptySeed);
    }

    let mut bank = Bank::init(&records, &config.dbscan, config.tau_buf, embedder, created_unix)?;
    events.push(Event::BankInitialized {
        revision: bank.revision(),
        k_bank: bank.k_bank(),
        intents: bank.categories().map(|c| bank.canonical_intents(c).len()).sum(),
    });

    let mut rows = Vec::with_capacity(questions.len() + seed_rows.len());
    for (q, labels) in questions.iter().zip(&pass.labels) {
        let Some((category, raw_intent)) = labels else {
            rows.push(DatasetRow::unparsed(q, "categorization failed".into()));
            events.push(Event::Unparsed {
                id: q.id.clone(),
                error: "categorization failed".into(),
                revision: bank.revision(),
            });
            continue;
        };
        let qvec = embedder.embed(&q.text)?;
        let routed = match bank.route(&qvec, category) {
            Ok(r) => Some(r),
            Err(BankError::UnknownCategory(_)) => {
                if bank.provision_category(category) {
                    events.push(Event::ProvisionalCategory {
                        id: q.id.clone(),
                        category: category.clone(),
                        revision: bank.revision(),
                    });
                }
                None
            }
            Err(e) => return Err(e.into()),
        };
        let canonical = routed.as_ref().map(|(t, _)| t.as_str());
        let retrieved = bank.retrieve_topk(&qvec, category, canonical, config.k_ret)?;
        if retrieved.fallback_level != FallbackLevel::Entry {
            events.push(Event::Fallback {
                id: q.id.clone(),
                category: category.clone(),
                level: retrieved.fallback_level,
                revision: bank.revision(),
            });
        }
        let (difficulty, plan_b) = plan_budget(&retrieved.candidates);
        let plan = RoutePlan {
            category: category.clone(),
            intent: vec![canonical.unwrap_or(raw_intent).to_string()],
            difficulty,
            budget: plan_b,
            options: retrieved.candidates.into_iter().map(|(p, _)| p).collect(),
        };

        match teacher.teach(q, &plan) {
            Ok(reply) => {
                usage.add(reply.usage);
                let mut taught = reply.value;
                let correct = is_correct(&taught.tuple.answer, q.gold_answer.as_deref()).ok();
                taught.tuple.teacher_answer_correct = correct;
                rows.push(DatasetRow::from_tuple(q, &taught.tuple));
                if taught.novel {
                    let path = taught.tuple.route.path;
                    let outcome = bank.record_novel(category, raw_intent, &path, correct == Some(true));
                    events.push(Event::Novelty { id: q.id.clone(), outcome, path, revision: bank.revision() });
                    if let ReclusterOutcome::Merged { merged, categories } = bank.maybe_recluster(embedder)? {
                        events.push(Event::Merge {
                            id: q.id.clone(),
                            merged,
                            categories,
                            revision: bank.revision(),
                            k_bank: bank.k_bank(),
                        });
                    }
                }
            }
            Err(f) => {
                usage.add(f.usage);
                let error = format!("{}", f.error);
                rows.push(DatasetRow::unparsed(q, error.clone()));
                events.push(Event::Unparsed { id: q.id.clone(), error, revision: bank.revision() });
                budget.charge(&f)?;
            }
        }
    }
    rows.extend(seed_rows);

    let metrics = dataset_metrics(&rows, usage.into());
    Ok(PipelineOutput { bank, rows, metrics, events, seed_ids: seed.iter().map(|q| q.id.clone()).collect() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaselineRationale {
    Text(String),
    Steps(Rationale),
}

/// One row of a comparison dataset produced by a baseline prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub id: String,
    pub question: String,
    pub mode: BaselineMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<BaselineRationale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<String>,
    pub ans: Option<String>,
    pub teacher_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BaselineRow {
    pub fn is_parsed(&self) -> bool {
        self.ans.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRun {
    pub rows: Vec<BaselineRow>,
    pub metrics: DatasetMetrics,
    pub events: Vec<Event>,
}

/// Generates a comparison dataset with one of the baseline prompts.
pub fn run_baseline<B: ChatBackend>(
    questions: &[Question],
    teacher: &Teacher<B>,
    mode: BaselineMode,
    config: &PipelineConfig,
) -> Result<BaselineRun, PipelineError> {
    check_inputs(questions, config)?;
    let mut budget = FailureBudget {
        planned: questions.len(),
        allowed: config.failure_budget * questions.len() as f64,
        failures: 0,
    };
    let mut usage = TokenUsage::default();
    let mut rows = Vec::with_capacity(questions.len());
    let mut events = Vec::new();
    for q in questions {
        match teacher.generate_baseline(q, mode) {
            Ok(reply) => {
                usage.add(reply.usage);
                let answer = reply.value.answer().to_string();
                let (rationale, completion) = match reply.value {
                    BaselineOutput::Cot { rationale, .. } => (Some(BaselineRationale::Text(rationale)), None),
                    BaselineOutput::Freeform { rationale, .. } => (Some(BaselineRationale::Steps(rationale)), None),
                    BaselineOutput::SuperCorrect { .. } => (None, Some(reply.raw_text)),
                };
                rows.push(BaselineRow {
                    id: q.id.clone(),
                    question: q.text.clone(),
                    mode,
                    rationale,
                    completion,
                    teacher_correct: is_correct(&answer, q.gold_answer.as_deref()).ok(),
                    ans: Some(answer),
                    error: None,
                });
            }
            Err(f) => {
                usage.add(f.usage);
                let error = format!("{}", f.error);
                events.push(Event::Unparsed { id: q.id.clone(), error: error.clone(), revision: 0 });
                rows.push(BaselineRow {
                    id: q.id.clone(),
                    question: q.text.clone(),
                    mode,
                    rationale: None,
                    completion: f.raw_text.clone(),
                    ans: None,
                    teacher_correct: Some(false),
                    error: Some(error),
                });
                budget.charge(&f)?;
            }
        }
    }
    let metrics = compute_metrics(rows.iter().map(|r| (r.is_parsed(), r.teacher_correct == Some(true))), usage.into());
    Ok(BaselineRun { rows, metrics, events })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyContext {
    Question,
    Category,
    CanonicalIntent,
}

/// Plug-in `H(path | context)` over the parsed rows.
pub fn path_entropy(rows: &[DatasetRow], context: EntropyContext) -> Result<f64, BoundsError> {
    let samples: Vec<(String, &ReasoningPath)> = rows
        .iter()
        .filter(|r| r.stage.is_none())
        .filter_map(|r| {
            let route = r.route.as_ref()?;
            let key = match context {
                EntropyContext::Question => r.id.clone(),
                EntropyContext::Category => route.category.clone(),
                EntropyContext::CanonicalIntent => {
                    format!("{}\u{1f}{}", route.category, route.intent.join("\u{1f}"))
                }
            };
            Some((key, &route.path))
        })
        .collect();
    plug_in_conditional_entropy(&samples)
}

/// Hyperparameters an external trainer needs to reproduce the reference
/// fine-tuning regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecipe {
    pub lora_r: u32,
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub epochs: u32,
    pub max_out_tokens: u32,
    pub max_seq_len: u32,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub effective_batch_size: u32,
    pub seed: u64,
}

impl Default for SftRecipe {
    fn default() -> Self {
        Self {
            lora_r: 64,
            lora_alpha: 128,
            lora_dropout: 0.05,
            epochs: 2,
            max_out_tokens: 512,
            max_seq_len: 2048,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            warmup_ratio: 0.03,
            effective_batch_size: 16,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportMeta {
    pub pipeline: PipelineConfig,
    pub bank_revision: u64,
    pub k_bank: usize,
    pub embedding_fingerprint: String,
    pub token_totals: TokenTotals,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
    pub recommended_sft: SftRecipe,
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    #[serde(rename = "_meta")]
    meta: ExportMeta,
}

/// JSONL text: an optional `_meta` header line, then one row per line.
pub fn export_jsonl<R: Serialize>(rows: &[R], meta: Option<&ExportMeta>) -> String {
    let mut out = String::new();
    if let Some(meta) = meta {
        out.push_str(&serde_json::to_string(&MetaLine { meta: meta.clone() }).expect("meta serializes"));
        out.push('\n');
    }
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("rows serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct JsonlError {
    pub line: usize,
    pub message: String,
}

/// Parses JSONL produced by [`export_jsonl`]; line numbers are 1-based.
pub fn parse_jsonl<R: serde::de::DeserializeOwned>(text: &str) -> Result<(Option<ExportMeta>, Vec<R>), JsonlError> {
    let mut meta = None;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |e: serde_json::Error| JsonlError { line: i + 1, message: e.to_string() };
        if i == 0 && line.trim_start().starts_with("{\"_meta\"") {
            let m: MetaLine = serde_json::from_str(line).map_err(err)?;
            meta = Some(m.meta);
            continue;
        }
        rows.push(serde_json::from_str(line).map_err(err)?);
    }
    Ok((meta, rows))
}
