//! Command-line interface.
//!
//! Exit codes: 0 success, 2 usage or out-of-range input, 3 filesystem,
//! 4 teacher or embedding service, 5 validation failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use pathbank_core::bounds::{theorem_bound, tradeoff_curve, BoundInputs, BoundsError};
use pathbank_core::embed::{EmbedError, Embedder};
use pathbank_core::pipeline::{
    compute_metrics, export_jsonl, parse_jsonl, run_baseline, run_with_labels, BaselineRow, CategoryCache,
    DatasetMetrics, DatasetRow, Event, ExportMeta, PipelineError, SftRecipe, TokenTotals,
};
use pathbank_core::teacher::{BaselineMode, Teacher};
use serde_json::Value;

use crate::config::{ConfigError, EmbedKind, EmbedProvider, RunConfig, TeacherKind, TeacherProvider};
use crate::io::{self, IoError, OutDir};
use crate::parallel::categorize_parallel;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SERVICE: i32 = 4;
pub const EXIT_VALIDATION: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Service(String),
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Service(_) => EXIT_SERVICE,
            CliError::Validation(_) => EXIT_VALIDATION,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Fs { .. } => CliError::Io(e.to_string()),
            IoError::Format { .. } | IoError::Bank { .. } => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            ConfigError::Parse { .. } => CliError::Validation(e.to_string()),
            ConfigError::Invalid(_) => CliError::Usage(e.to_string()),
        }
    }
}

fn embed_is_service(e: &EmbedError) -> bool {
    matches!(e, EmbedError::Timeout | EmbedError::Protocol(_))
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let msg = e.to_string();
        match &e {
            PipelineError::InvalidConfig(_) | PipelineError::Seed(_) => CliError::Usage(msg),
            PipelineError::FailureBudgetExceeded { .. } => CliError::Service(msg),
            PipelineError::Embed(err) if embed_is_service(err) => CliError::Service(msg),
            _ if e.is_service() => CliError::Service(msg),
            _ => CliError::Validation(msg),
        }
    }
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "pathbank",
    version,
    about = "Reasoning-path bank distillation: build the bank, generate path-guided supervision, compute bound terms"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label every question with a category C and intent T, reusing the cache.
    Categorize(CategorizeArgs),
    /// Run the full pipeline and write bank, dataset, metrics and events.
    Distill(DistillArgs),
    /// Evaluate the generalization bound or sweep the bank-size trade-off.
    Bounds(BoundsArgs),
    /// Re-validate an exported dataset and recompute its metrics.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TeacherArg {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EmbedArg {
    Deterministic,
    Http,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaselineArg {
    Cot,
    Freeform,
    Supercorrect,
}

impl From<BaselineArg> for BaselineMode {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Cot => BaselineMode::Cot,
            BaselineArg::Freeform => BaselineMode::Freeform,
            BaselineArg::Supercorrect => BaselineMode::SuperCorrect,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    /// TOML config file; flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Teacher provider (the teacher f_teach / f_cat)
    #[arg(long, value_enum)]
    pub teacher: Option<TeacherArg>,
    /// Mock teacher ground-truth spec (JSON)
    #[arg(long, value_name = "FILE")]
    pub mock_spec: Option<PathBuf>,
    /// Chat-completions URL for the http teacher
    #[arg(long, value_name = "URL")]
    pub teacher_endpoint: Option<String>,
    /// Model name for the http teacher
    #[arg(long, value_name = "NAME")]
    pub teacher_model: Option<String>,
    /// Re-prompts after a malformed or schema-violating reply
    #[arg(long, value_name = "N")]
    pub teacher_retries: Option<u32>,
    /// Embedding provider for the encoder e(.)
    #[arg(long, value_enum)]
    pub embed: Option<EmbedArg>,
    /// Embedding dimension (at least 8)
    #[arg(long, value_name = "D")]
    pub embed_dim: Option<usize>,
    /// Seed of the deterministic embedder
    #[arg(long, value_name = "SEED")]
    pub embed_seed: Option<u64>,
    /// Embeddings URL for the http embedder
    #[arg(long, value_name = "URL")]
    pub embed_endpoint: Option<String>,
    /// Model name for the http embedder
    #[arg(long, value_name = "NAME")]
    pub embed_model: Option<String>,
    /// Concurrent categorization workers
    #[arg(long, value_name = "N")]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CategorizeArgs {
    /// Questions as JSON Lines or a JSON array
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Category cache to read and update, keyed by question id
    #[arg(long, value_name = "FILE")]
    pub cache: PathBuf,
    #[command(flatten)]
    pub providers: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// Questions X_i as JSON Lines or a JSON array
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Directory receiving every artifact plus manifest.json
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Category cache to read and update
    #[arg(long, value_name = "FILE")]
    pub cache: Option<PathBuf>,
    /// Seed fraction f of the dataset sampled per category, in (0, 1]
    #[arg(long, value_name = "F")]
    pub seed_fraction: Option<f64>,
    /// Candidate paths retrieved per question (K_ret)
    #[arg(long, value_name = "K")]
    pub k_ret: Option<usize>,
    /// Novelty-buffer size that triggers re-clustering (τ_buf)
    #[arg(long, value_name = "N")]
    pub tau_buf: Option<usize>,
    /// Seed of the category-balanced sampler
    #[arg(long, value_name = "SEED")]
    pub rng_seed: Option<u64>,
    /// DBSCAN radius eps in cosine distance, in (0, 2]
    #[arg(long, value_name = "EPS")]
    pub eps: Option<f64>,
    /// DBSCAN min_samples
    #[arg(long, value_name = "N")]
    pub min_samples: Option<usize>,
    /// Fraction of teacher calls allowed to fail on service errors before aborting
    #[arg(long, value_name = "F")]
    pub failure_budget: Option<f64>,
    /// Generate a comparison dataset with a baseline prompt instead of the bank
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineArg>,
    /// Also export the seed questions' Stage-1 tuples
    #[arg(long)]
    pub include_seed_stage1: bool,
    /// Omit the training-metadata header line from the dataset
    #[arg(long)]
    pub no_meta: bool,
    /// Use this unix time instead of the clock (for byte-stable outputs)
    #[arg(long, value_name = "UNIX")]
    pub fixed_clock: Option<u64>,
    #[command(flatten)]
    pub providers: ProviderArgs,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Bound inputs (JSON: tau, n, m, sigma0_sq, sigma_post_sq, lambda, L0, L_hat, k_bank, H_R, H_A, eps_slack, delta, c_const)
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Directory receiving the report files and manifest.json
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Override the confidence parameter δ, in (0, 1)
    #[arg(long, value_name = "DELTA")]
    pub delta: Option<f64>,
    /// Override the loss bound τ
    #[arg(long, value_name = "TAU")]
    pub tau: Option<f64>,
    /// Override the near-floor slack ε
    #[arg(long, value_name = "EPS")]
    pub eps_slack: Option<f64>,
    /// Sweep M(K_bank) over K_bank in a..=b
    #[arg(long, value_name = "A:B", value_parser = parse_range)]
    pub sweep_k: Option<(u64, u64)>,
    /// Coverage model scale c0 in ε(k) = c0·k^(-alpha)
    #[arg(long, value_name = "C0", default_value_t = 50.0)]
    pub c0: f64,
    /// Coverage model exponent alpha in ε(k) = c0·k^(-alpha)
    #[arg(long, value_name = "ALPHA", default_value_t = 1.0)]
    pub alpha: f64,
    /// Residual rationale entropy H_R for the sweep (defaults to the input file's)
    #[arg(long, value_name = "NATS")]
    pub h_r: Option<f64>,
    /// Residual answer entropy H_A for the sweep (defaults to the input file's)
    #[arg(long, value_name = "NATS")]
    pub h_a: Option<f64>,
    /// Use this unix time instead of the clock
    #[arg(long, value_name = "UNIX")]
    pub fixed_clock: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Exported dataset (JSON Lines)
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Saved metrics to compare byte for byte with the recomputed ones
    #[arg(long, value_name = "FILE")]
    pub metrics: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once(':').ok_or("expected A:B")?;
    let a: u64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if a == 0 || b < a {
        return Err("need 1 <= A <= B".into());
    }
    Ok((a, b))
}

fn now_unix(fixed: Option<u64>) -> u64 {
    fixed.unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

fn load_config(p: &ProviderArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &p.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(t) = p.teacher {
        cfg.teacher.kind = match t {
            TeacherArg::Mock => TeacherKind::Mock,
            TeacherArg::Http => TeacherKind::Http,
        };
    }
    if let Some(s) = &p.mock_spec {
        cfg.teacher.mock_spec = Some(s.clone());
    }
    if let Some(e) = &p.teacher_endpoint {
        cfg.teacher.endpoint = Some(e.clone());
    }
    if let Some(m) = &p.teacher_model {
        cfg.teacher.model = Some(m.clone());
    }
    if let Some(r) = p.teacher_retries {
        cfg.teacher.max_retries = r;
    }
    if let Some(e) = p.embed {
        cfg.embed.kind = match e {
            EmbedArg::Deterministic => EmbedKind::Deterministic,
            EmbedArg::Http => EmbedKind::Http,
        };
    }
    if let Some(d) = p.embed_dim {
        cfg.embed.dim = d;
    }
    if let Some(s) = p.embed_seed {
        cfg.embed.seed = s;
    }
    if let Some(e) = &p.embed_endpoint {
        cfg.embed.endpoint = Some(e.clone());
    }
    if let Some(m) = &p.embed_model {
        cfg.embed.model = Some(m.clone());
    }
    if let Some(n) = p.parallelism {
        cfg.pipeline.parallelism = n;
    }
    Ok(cfg)
}

fn to_json_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("value serializes")
}

fn read_cache_if_present(path: Option<&Path>) -> Result<CategoryCache, CliError> {
    match path {
        Some(p) if p.exists() => Ok(io::read_cache(p)?),
        _ => Ok(CategoryCache::new()),
    }
}

fn cmd_categorize(args: &CategorizeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&args.providers)?;
    cfg.check()?;
    let questions = io::read_questions(&args.input)?;
    pathbank_core::types::check_dataset(&questions).map_err(|e| CliError::Validation(e.to_string()))?;
    let provider = TeacherProvider::from_config(&cfg.teacher)?;
    let teacher = Teacher::new(&provider).with_max_retries(cfg.teacher.max_retries);
    let mut cache = read_cache_if_present(Some(&args.cache))?;
    let before = provider.calls();
    let pass = categorize_parallel(&questions, &teacher, &mut cache, cfg.pipeline.parallelism);
    if pass.cache_hits > 0 {
        info!("cache hit N={}", pass.cache_hits);
    }
    io::write_text(&args.cache, &io::cache_json(&cache))?;
    let calls = match (before, provider.calls()) {
        (Some(a), Some(b)) => (b - a).to_string(),
        _ => pass.teacher_calls.to_string(),
    };
    let _ = writeln!(
        out,
        "categorized {} questions: cache hit N={}, teacher calls={}, failures={}",
        questions.len(),
        pass.cache_hits,
        calls,
        pass.failures.len()
    );
    for (id, err) in &pass.failures {
        let _ = writeln!(out, "  {id}: {err}");
    }
    if pass.unavailable > 0 {
        return Err(CliError::Service(format!("{} categorization calls hit service errors", pass.unavailable)));
    }
    Ok(())
}

fn events_jsonl(events: &[Event]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e).expect("event serializes"));
        s.push('\n');
    }
    s
}

fn cmd_distill(args: &DistillArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = load_config(&args.providers)?;
    let p = &mut cfg.pipeline;
    if let Some(v) = args.seed_fraction {
        p.seed_fraction = v;
    }
    if let Some(v) = args.k_ret {
        p.k_ret = v;
    }
    if let Some(v) = args.tau_buf {
        p.tau_buf = v;
    }
    if let Some(v) = args.rng_seed {
        p.rng_seed = v;
    }
    if let Some(v) = args.eps {
        p.dbscan.eps = v;
    }
    if let Some(v) = args.min_samples {
        p.dbscan.min_samples = v;
    }
    if let Some(v) = args.failure_budget {
        p.failure_budget = v;
    }
    if let Some(b) = args.baseline {
        p.baseline_mode = Some(b.into());
    }
    if args.include_seed_stage1 {
        p.include_seed_stage1 = true;
    }
    cfg.check()?;
    let created = now_unix(args.fixed_clock);
    let questions = io::read_questions(&args.input)?;
    let provider = TeacherProvider::from_config(&cfg.teacher)?;
    let teacher = Teacher::new(&provider).with_max_retries(cfg.teacher.max_retries);
    let config_value = to_json_value(&cfg);
    let mut outdir = OutDir::create(&args.out_dir)?;

    if let Some(mode) = cfg.pipeline.baseline_mode {
        let run = run_baseline(&questions, &teacher, mode, &cfg.pipeline)?;
        let meta = ExportMeta {
            pipeline: cfg.pipeline.clone(),
            bank_revision: 0,
            k_bank: 0,
            embedding_fingerprint: String::new(),
            token_totals: run.metrics.token_totals,
            extra: extra_meta(&config_value, created),
            recommended_sft: SftRecipe::default(),
        };
        outdir.write("dataset.jsonl", &export_jsonl(&run.rows, (!args.no_meta).then_some(&meta)))?;
        outdir.write("metrics.json", &io::pretty_json(&run.metrics))?;
        outdir.write("events.jsonl", &events_jsonl(&run.events))?;
        finish(outdir, "distill", created, &config_value)?;
        summarize(out, &run.metrics, None);
        return Ok(());
    }

    let embedder = EmbedProvider::from_config(&cfg.embed)?;
    let mut cache = read_cache_if_present(args.cache.as_deref())?;
    pathbank_core::types::check_dataset(&questions).map_err(|e| CliError::Validation(e.to_string()))?;
    let pass = categorize_parallel(&questions, &teacher, &mut cache, cfg.pipeline.parallelism);
    if pass.cache_hits > 0 {
        info!("cache hit N={}", pass.cache_hits);
    }
    if let Some(path) = &args.cache {
        io::write_text(path, &io::cache_json(&cache))?;
    }
    let result = run_with_labels(&questions, pass, &teacher, &embedder, &cfg.pipeline, created)?;

    let meta = ExportMeta {
        pipeline: cfg.pipeline.clone(),
        bank_revision: result.bank.revision(),
        k_bank: result.bank.k_bank(),
        embedding_fingerprint: embedder.fingerprint(),
        token_totals: result.metrics.token_totals,
        extra: extra_meta(&config_value, created),
        recommended_sft: SftRecipe::default(),
    };
    let bank_path = outdir.path("bank.json");
    let mut bank_text = result.bank.to_json();
    bank_text.push('\n');
    outdir.write("bank.json", &bank_text)?;
    outdir.write("dataset.jsonl", &export_jsonl(&result.rows, (!args.no_meta).then_some(&meta)))?;
    outdir.write("metrics.json", &io::pretty_json(&result.metrics))?;
    outdir.write("events.jsonl", &events_jsonl(&result.events))?;
    finish(outdir, "distill", created, &config_value)?;
    info!("bank written to {}", bank_path.display());
    let merges = result.events.iter().filter(|e| matches!(e, Event::Merge { .. })).count();
    summarize(
        out,
        &result.metrics,
        Some(format!(
            "K_bank={} revision={} merges={} buffer={}",
            result.bank.k_bank(),
            result.bank.revision(),
            merges,
            result.bank.buffer().len()
        )),
    );
    Ok(())
}

fn extra_meta(config: &Value, created: u64) -> BTreeMap<String, Value> {
    let mut m = BTreeMap::new();
    m.insert("config".into(), config.clone());
    m.insert("created_unix".into(), Value::from(created));
    m
}

fn finish(outdir: OutDir, command: &str, created: u64, config: &Value) -> Result<(), CliError> {
    outdir.finish(command, created, config.clone())?;
    Ok(())
}

fn summarize(out: &mut dyn Write, m: &DatasetMetrics, extra: Option<String>) {
    let fv = m.format_validity.map_or("null".to_string(), |v| format!("{v:.4}"));
    let _ = write!(
        out,
        "rows={} parsed={} correct={} accuracy={:.4} FV={} teacher_in={} teacher_out={}",
        m.n_total, m.n_parsed, m.n_correct, m.accuracy, fv, m.token_totals.teacher_in, m.token_totals.teacher_out
    );
    if let Some(e) = extra {
        let _ = write!(out, " {e}");
    }
    let _ = writeln!(out);
}

fn csv_line(values: &[String]) -> String {
    let mut s = values.join(",");
    s.push('\n');
    s
}

fn cmd_bounds(args: &BoundsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.input.is_none() && args.sweep_k.is_none() {
        return Err(CliError::Usage("bounds needs --input, --sweep-k, or both".into()));
    }
    let created = now_unix(args.fixed_clock);
    let inputs = match &args.input {
        Some(path) => {
            let mut inputs: BoundInputs = serde_json::from_str(&io::read_text(path)?)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            if let Some(d) = args.delta {
                inputs.delta = d;
            }
            if let Some(t) = args.tau {
                inputs.tau = t;
            }
            if let Some(e) = args.eps_slack {
                inputs.eps_slack = e;
            }
            Some(inputs)
        }
        None => None,
    };
    let mut outdir = OutDir::create(&args.out_dir)?;
    let mut config = serde_json::Map::new();

    if let Some(inputs) = &inputs {
        let report = theorem_bound(inputs)?;
        config.insert("inputs".into(), to_json_value(inputs));
        outdir.write("report.json", &io::pretty_json(&report))?;
        let header = ["M", "N", "kl_upper", "gap_term", "lower_order_term", "total_bound", "log_base"];
        let row = [
            report.m_term,
            report.n_term,
            report.kl_upper,
            report.gap_term,
            report.lower_order_term,
            report.total_bound,
        ];
        let mut csv = csv_line(&header.map(String::from));
        let mut values: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        values.push(report.log_base.clone());
        csv.push_str(&csv_line(&values));
        outdir.write("report.csv", &csv)?;
        let _ = writeln!(
            out,
            "M={} N={} gap_term={} lower_order_term={} total_bound={}",
            report.m_term, report.n_term, report.gap_term, report.lower_order_term, report.total_bound
        );
    }

    if let Some((a, b)) = args.sweep_k {
        let h_r = args.h_r.or(inputs.as_ref().map(|i| i.h_r)).unwrap_or(0.0);
        let h_a = args.h_a.or(inputs.as_ref().map(|i| i.h_a)).unwrap_or(0.0);
        let ks: Vec<u64> = (a..=b).collect();
        let curve = tradeoff_curve(&ks, args.c0, args.alpha, h_r, h_a)?;
        config.insert(
            "sweep".into(),
            serde_json::json!({ "k_min": a, "k_max": b, "c0": args.c0, "alpha": args.alpha, "H_R": h_r, "H_A": h_a }),
        );
        outdir.write("curve.json", &io::pretty_json(&curve))?;
        let mut csv = String::from("k,M\n");
        let mut dat = format!("# synthetic coverage c0={} alpha={}\n# k M\n", args.c0, args.alpha);
        for (k, m) in &curve.points {
            csv.push_str(&format!("{k},{m}\n"));
            dat.push_str(&format!("{k} {m}\n"));
        }
        outdir.write("curve.csv", &csv)?;
        outdir.write("curve.dat", &dat)?;
        let _ = writeln!(out, "argmin K_bank={} min M={}", curve.argmin_k, curve.min_m);
    }
    finish(outdir, "bounds", created, &Value::Object(config))?;
    Ok(())
}

/// Outcome of re-validating a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub rows: usize,
    pub problems: Vec<(usize, String)>,
    pub metrics: DatasetMetrics,
}

/// Checks every row of an exported dataset and recomputes its metrics.
pub fn validate_text(text: &str) -> ValidationReport {
    let mut problems = Vec::new();
    let mut meta_totals = TokenTotals::default();
    let mut flags = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                problems.push((line_no, format!("invalid JSON: {e}")));
                continue;
            }
        };
        if value.get("_meta").is_some() {
            if i != 0 {
                problems.push((line_no, "header must be the first line".into()));
            }
            match parse_jsonl::<DatasetRow>(line) {
                Ok((Some(meta), _)) => meta_totals = meta.token_totals,
                Ok(_) => {}
                Err(e) => problems.push((line_no, format!("bad header: {}", e.message))),
            }
            continue;
        }
        if value.get("mode").is_some() {
            match serde_json::from_str::<BaselineRow>(line) {
                Ok(row) => {
                    if row.ans.is_none() && row.error.is_none() {
                        problems.push((line_no, "row has neither an answer nor an error".into()));
                    }
                    flags.push((row.is_parsed(), row.teacher_correct == Some(true)));
                }
                Err(e) => problems.push((line_no, format!("not a baseline row: {e}"))),
            }
            continue;
        }
        match serde_json::from_str::<DatasetRow>(line) {
            Ok(row) => {
                for v in row.violations() {
                    problems.push((line_no, format!("{}: {v}", row.id)));
                }
                if row.stage.is_none() {
                    flags.push((row.is_parsed(), row.teacher_correct == Some(true)));
                }
            }
            Err(e) => problems.push((line_no, format!("not a dataset row: {e}"))),
        }
    }
    ValidationReport { rows: flags.len(), problems, metrics: compute_metrics(flags, meta_totals) }
}

fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = io::read_text(&args.input)?;
    let report = validate_text(&text);
    for (line, p) in &report.problems {
        let _ = writeln!(out, "{}:{line}: {p}", args.input.display());
    }
    let recomputed = io::pretty_json(&report.metrics);
    let mut metrics_match = true;
    if let Some(path) = &args.metrics {
        let saved = io::read_text(path)?;
        metrics_match = saved == recomputed;
        if !metrics_match {
            let _ = writeln!(out, "{}: saved metrics differ from recomputed metrics", path.display());
        }
    }
    summarize(out, &report.metrics, Some(format!("violations={}", report.problems.len())));
    if !report.problems.is_empty() {
        return Err(CliError::Validation(format!("{} schema violations", report.problems.len())));
    }
    if !metrics_match {
        return Err(CliError::Validation("metrics mismatch".into()));
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Categorize(a) => cmd_categorize(a, out),
        Command::Distill(a) => cmd_distill(a, out),
        Command::Bounds(a) => cmd_bounds(a, out),
        Command::Validate(a) => cmd_validate(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}
