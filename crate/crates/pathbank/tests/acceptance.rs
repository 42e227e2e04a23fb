//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

mod common;
#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use pathbank::io;
use pathbank_core::bank::{BankError, SeedRecord};
use pathbank_core::bounds::{
    bernstein_bound, bernstein_corollary, gaussian_kl, mean_and_variance, norm_bound, plug_in_conditional_entropy,
    table3_report, tradeoff_curve,
};
use pathbank_core::cluster::dbscan;
use pathbank_core::embed::hash64;
use pathbank_core::pipeline::{
    dataset_metrics, export_jsonl, parse_jsonl, path_entropy, run, run_baseline, sample_seed, seed_quotas, BaselineRow,
    CategoryCache, DatasetRow, EntropyContext, PipelineConfig, TokenTotals,
};
use pathbank_core::teacher::mock::{MockSpec, MockTeacher, ScriptedBackend};
use pathbank_core::teacher::{BaselineMode, RoutePlan, Teacher, TeacherError};
use pathbank_core::{
    Bank, DbscanParams, DeterministicEmbedder, EmbedError, Embedder, FallbackLevel, Question, Rationale, ReasoningPath,
    Route, SupervisionTuple, Vector,
};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Deserialize;
use serde_json::Value;

use common::{cli, fixture};
use oracles::{
    brute_dbscan, brute_topk, gaussian_kl_direct, hamilton, label_partition, partition, random_dbscan_instance, rng,
    to_vectors,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:?}, limit {limit:?}"))?;
    Ok(took)
}

fn c1_gaussian_kl() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = r.gen_range(0..=100_000) as f64;
        let mu_sq = r.gen_range(0.0..1000.0);
        let s0 = r.gen_range(0.1..10.0);
        let sp = r.gen_range(0.1..10.0);
        let got = gaussian_kl(m, mu_sq, s0, sp).map_err(|e| e.to_string())?;
        let want = gaussian_kl_direct(m, mu_sq, s0, sp);
        worst = worst.max((got - want).abs());
    }
    ensure(worst <= 1e-9, || format!("max abs error {worst:e}"))?;
    for (m, s) in [(0.0, 1.0), (1.0, 1.0), (1e6, 0.37), (42.0, 5.0)] {
        let kl = gaussian_kl(m, 0.0, s, s).map_err(|e| e.to_string())?;
        ensure(kl == 0.0, || format!("KL(mu=0, rho=1) = {kl:e} for m={m}"))?;
    }
    let took = within(start, Duration::from_secs(1))?;
    Ok(format!("1000 points, max abs error {worst:.1e}, {took:.0?}"))
}

fn c2_norm_control() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut violations = 0;
    for _ in 0..100 {
        // L(theta) = mean of a_i/2 (theta - b_i)^2, objective L + lambda/2 theta^2
        let n = r.gen_range(1..=20);
        let a: Vec<f64> = (0..n).map(|_| r.gen_range(0.1..5.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| r.gen_range(-10.0..10.0)).collect();
        let lambda = r.gen_range(0.001..10.0);
        let nf = n as f64;
        let theta = a.iter().zip(&b).map(|(a, b)| a * b).sum::<f64>() / nf / (a.iter().sum::<f64>() / nf + lambda);
        let l0 = a.iter().zip(&b).map(|(a, b)| 0.5 * a * b * b).sum::<f64>() / nf;
        let objective =
            |t: f64| a.iter().zip(&b).map(|(a, b)| 0.5 * a * (t - b).powi(2)).sum::<f64>() / nf + 0.5 * lambda * t * t;
        ensure(objective(theta) <= objective(theta + 1e-6) && objective(theta) <= objective(theta - 1e-6), || {
            "analytic minimizer is not a minimum".into()
        })?;
        if theta * theta > norm_bound(l0, lambda).map_err(|e| e.to_string())? {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    let toy = norm_bound(0.5 * 9.0, 1.0).map_err(|e| e.to_string())?;
    ensure(1.5f64 * 1.5 <= toy && toy == 9.0, || format!("toy bound {toy}"))?;
    let took = within(start, Duration::from_secs(1))?;
    Ok(format!("100 instances, 0 violations, {took:.0?}"))
}

fn questions40() -> Vec<Question> {
    io::read_questions(&fixture("questions40.jsonl")).unwrap()
}

fn c3_entropy_baseline() -> Outcome {
    let questions = questions40();
    let base = MockSpec::from_json(&fs::read_to_string(fixture("mock.json")).unwrap()).unwrap();
    let mut r = rng(3);
    let mut worst_margin = f64::INFINITY;
    for case in 0..20 {
        let mut spec = base.clone();
        spec.seed = r.gen();
        spec.noise.novel_path = r.gen_range(0.0..0.6);
        spec.noise.wrong_answer = r.gen_range(0.0..0.3);
        spec.noise.malformed = r.gen_range(0.0..0.15);
        let mock = MockTeacher::new(spec).unwrap();
        let teacher = Teacher::new(&mock);
        let config = PipelineConfig {
            seed_fraction: r.gen_range(0.1..0.5),
            k_ret: r.gen_range(1..=3),
            tau_buf: r.gen_range(1..=6),
            rng_seed: r.gen(),
            failure_budget: 1.0,
            ..PipelineConfig::default()
        };
        let embedder = DeterministicEmbedder::new(r.gen_range(0..4), 64).unwrap();
        let out = run(&questions, &teacher, &embedder, &config, &mut CategoryCache::new(), 0)
            .map_err(|e| format!("case {case}: {e}"))?;
        let text = export_jsonl(&out.rows, None);
        let (_, rows) = parse_jsonl::<DatasetRow>(&text).map_err(|e| e.message)?;
        let ln_k = (out.bank.k_bank() as f64).ln();
        for context in [EntropyContext::Question, EntropyContext::Category, EntropyContext::CanonicalIntent] {
            let h = path_entropy(&rows, context).map_err(|e| e.to_string())?;
            ensure(h <= ln_k + 1e-12, || format!("case {case} {context:?}: H={h} > ln K_bank={ln_k}"))?;
            worst_margin = worst_margin.min(ln_k - h);
        }
    }
    let k = 7usize;
    let samples: Vec<(u8, usize)> = (0..k * 1000).map(|i| (0, i % k)).collect();
    let h = plug_in_conditional_entropy(&samples).map_err(|e| e.to_string())?;
    ensure((h - (k as f64).ln()).abs() <= 1e-6, || format!("uniform K={k}: H={h}"))?;
    Ok(format!("20 configs, 0 violations, min margin {worst_margin:.3}; uniform K=7 within 1e-6"))
}

fn c4_dbscan() -> Outcome {
    let start = Instant::now();
    let mut r = rng(0xdb5c);
    for case in 0..200 {
        let inst = random_dbscan_instance(&mut r);
        let params = DbscanParams::new(inst.eps, inst.min_samples).map_err(|e| e.to_string())?;
        let got = dbscan(&to_vectors(&inst.points), &params).map_err(|e| e.to_string())?;
        let want = brute_dbscan(&inst.points, inst.eps, inst.min_samples);
        ensure(label_partition(&got) == partition(want), || format!("instance {case} differs"))?;
    }
    let took = within(start, Duration::from_secs(10))?;
    Ok(format!("200/200 instances, {took:.0?}"))
}

/// Maps texts to one of five directions so distinct paths tie on score.
struct Coarse(Vec<Vector>);

impl Embedder for Coarse {
    fn dim(&self) -> usize {
        8
    }
    fn fingerprint(&self) -> String {
        "coarse".into()
    }
    fn embed(&self, text: &str) -> Result<Vector, EmbedError> {
        Ok(self.0[(hash64(0, &[text.as_bytes()]) % self.0.len() as u64) as usize].clone())
    }
}

fn c5_topk() -> Outcome {
    const STEPS: &[&str] = &["ComputeRate", "SumParts", "ApplyRatio", "SolveEquation", "CountCases", "CheckUnits"];
    const CATEGORIES: &[&str] = &["Algebra", "Arithmetic", "Geometry"];
    const INTENTS: &[&str] = &["rate problem", "ratio scaling", "area sum", "linear solve", "counting"];
    let mut r = rng(5);
    let e =
        Coarse((0..5).map(|_| Vector::normalized((0..8).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()).collect());
    let mut ties = 0;
    for case in 0..200 {
        let records: Vec<SeedRecord> = (0..r.gen_range(1..=100))
            .map(|_| {
                let intent = INTENTS.choose(&mut r).unwrap().to_string();
                let len = r.gen_range(1..=3);
                SeedRecord {
                    intent_vector: e.embed(&intent).unwrap(),
                    category: CATEGORIES[r.gen_range(0..2)].to_string(),
                    intent,
                    path: ReasoningPath::new((0..len).map(|_| *STEPS.choose(&mut r).unwrap())),
                }
            })
            .collect();
        let params = DbscanParams::new(r.gen_range(0.05..0.5), r.gen_range(1..=3)).unwrap();
        let bank = Bank::init(&records, &params, 4, &e, 0).map_err(|e| e.to_string())?;
        ensure(bank.k_bank() <= 100, || "bank larger than 100 paths".into())?;
        let category = *CATEGORIES.choose(&mut r).unwrap();
        let intents = bank.canonical_intents(category);
        let canonical = match r.gen_range(0..4) {
            0 => None,
            1 => Some("no such intent".to_string()),
            _ => intents.choose(&mut r).map(|c| c.canonical_label.clone()),
        };
        let members: Vec<&str> = canonical
            .as_deref()
            .and_then(|t| intents.iter().find(|c| c.canonical_label == t))
            .map(|c| c.member_intents.iter().map(|(s, _)| s.as_str()).collect())
            .unwrap_or_default();
        let pick = |f: &dyn Fn(&SeedRecord) -> bool| -> BTreeSet<ReasoningPath> {
            records.iter().filter(|x| f(x)).map(|x| x.path.clone()).collect()
        };
        let entry = pick(&|x| x.category == category && members.contains(&x.intent.as_str()));
        let in_category = pick(&|x| x.category == category);
        let (pool, level) = if !entry.is_empty() {
            (entry, FallbackLevel::Entry)
        } else if !in_category.is_empty() {
            (in_category, FallbackLevel::Category)
        } else {
            (pick(&|_| true), FallbackLevel::Global)
        };
        let pool: Vec<(ReasoningPath, Vec<f64>)> = pool
            .into_iter()
            .map(|p| {
                let v = e.embed(&p.steps().join(" ")).unwrap().as_slice().to_vec();
                (p, v)
            })
            .collect();
        let q = Vector::normalized((0..8).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let k = r.gen_range(1..=8);
        let got = bank.retrieve_topk(&q, category, canonical.as_deref(), k).map_err(|e| e.to_string())?;
        let want = brute_topk(q.as_slice(), &pool, k);
        ensure(got.fallback_level == level, || format!("bank {case}: level {:?} vs {level:?}", got.fallback_level))?;
        let got_paths: Vec<&ReasoningPath> = got.candidates.iter().map(|(p, _)| p).collect();
        let want_paths: Vec<&ReasoningPath> = want.iter().map(|(p, _)| p).collect();
        ensure(got_paths == want_paths, || format!("bank {case}: order differs"))?;
        ties += usize::from(want.windows(2).any(|w| w[0].1 == w[1].1));
    }
    Ok(format!("200/200 banks, {ties} with tied scores"))
}

fn distill_run(out: &Path, config: &str) -> Result<(), String> {
    let (code, _, err) = cli(&[
        "distill",
        "--config",
        fixture(config).to_str().unwrap(),
        "--input",
        fixture("questions40.jsonl").to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--fixed-clock",
        "0",
    ]);
    ensure(code == 0, || format!("{config}: exit {code}: {err}"))
}

fn events(dir: &Path, kind: &str) -> usize {
    fs::read_to_string(dir.join("events.jsonl"))
        .unwrap()
        .lines()
        .filter(|l| serde_json::from_str::<Value>(l).unwrap()["event"] == kind)
        .count()
}

fn c6_trace_fidelity() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for (config, merges, buffer) in [("distill.toml", 0, 0), ("distill_novelty.toml", 1, 1)] {
        let a = tmp.path().join(format!("{config}-a"));
        let b = tmp.path().join(format!("{config}-b"));
        distill_run(&a, config)?;
        distill_run(&b, config)?;
        let text = fs::read_to_string(a.join("dataset.jsonl")).unwrap();
        let (_, rows) = parse_jsonl::<DatasetRow>(&text).map_err(|e| e.message)?;
        let metrics = dataset_metrics(&rows, TokenTotals::default());
        ensure(rows.len() == 40, || format!("{config}: {} rows", rows.len()))?;
        if merges == 0 {
            ensure(metrics.format_validity == Some(1.0), || format!("{config}: FV {:?}", metrics.format_validity))?;
        }
        ensure(events(&a, "merge") == merges, || format!("{config}: {} merges", events(&a, "merge")))?;
        let bank: Value = serde_json::from_str(&fs::read_to_string(a.join("bank.json")).unwrap()).unwrap();
        let buf = bank["buffer"].as_array().map_or(0, Vec::len);
        ensure(buf == buffer, || format!("{config}: buffer {buf}"))?;
        for name in ["bank.json", "dataset.jsonl", "metrics.json", "events.jsonl", "manifest.json"] {
            ensure(fs::read(a.join(name)).unwrap() == fs::read(b.join(name)).unwrap(), || {
                format!("{config}: {name} differs between runs")
            })?;
        }
        summary.push(format!(
            "{config}: 40 rows FV={} merges={merges} buffer={buffer}",
            metrics.format_validity.unwrap_or(f64::NAN)
        ));
    }
    Ok(format!("{}; byte-stable", summary.join("; ")))
}

fn labelled(counts: &[(String, usize)], shuffle: u64) -> Vec<Question> {
    let mut labels: Vec<&str> = counts.iter().flat_map(|(c, n)| std::iter::repeat_n(c.as_str(), *n)).collect();
    labels.shuffle(&mut rng(shuffle));
    labels
        .into_iter()
        .enumerate()
        .map(|(i, c)| Question::new(format!("q{i:04}"), format!("question {i}")).with_labels(c, "intent"))
        .collect()
}

fn category_counts(qs: &[Question]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for q in qs {
        *out.entry(q.category.clone().unwrap()).or_insert(0) += 1;
    }
    out
}

fn c7_seed_sampling() -> Outcome {
    let qs = labelled(&[("A".into(), 600), ("B".into(), 400)], 7);
    let seed = sample_seed(&qs, 0.05, 0).map_err(|e| e.to_string())?;
    let got = category_counts(&seed);
    ensure(got.get("A") == Some(&30) && got.get("B") == Some(&20), || format!("quotas {got:?}"))?;
    let mut r = rng(7);
    for case in 0..50 {
        let counts: Vec<(String, usize)> =
            (0..r.gen_range(1..=6)).map(|i| (format!("C{i}"), r.gen_range(1..=300))).collect();
        let n: usize = counts.iter().map(|(_, c)| c).sum();
        let fraction = r.gen_range((1.0 / n as f64)..=1.0);
        let size = (fraction * n as f64).round() as usize;
        let map: BTreeMap<String, usize> = counts.iter().cloned().collect();
        let want = hamilton(&map, size);
        ensure(seed_quotas(&map, size) == want, || format!("case {case}: quota mismatch"))?;
        let seed = sample_seed(&labelled(&counts, case), fraction, case).map_err(|e| e.to_string())?;
        let got = category_counts(&seed);
        let want: BTreeMap<String, usize> = want.into_iter().filter(|(_, v)| *v > 0).collect();
        ensure(got == want, || format!("case {case}: sampled {got:?}, want {want:?}"))?;
    }
    Ok("600/400 at 0.05 gives {30, 20}; 50/50 distributions match largest remainder".into())
}

fn c8_table3() -> Outcome {
    // (train NLL, test NLL, printed gap)
    let rows = [
        (0.30, 0.42, 0.11),
        (0.35, 0.55, 0.20),
        (0.27, 0.38, 0.11),
        (0.28, 0.47, 0.19),
        (0.38, 0.67, 0.29),
        (0.29, 0.45, 0.17),
    ];
    let mut worst = 0.0f64;
    for (train, test, printed) in rows {
        let row = table3_report(train, test, 0.0, 0.0, 0.0).map_err(|e| e.to_string())?;
        let err = (row.gap - printed).abs();
        ensure(err <= 0.01, || format!("gap {} vs printed {printed}", row.gap))?;
        worst = worst.max(err);
    }
    Ok(format!("6/6 rows within 0.01 (worst {worst:.4})"))
}

fn c9_tradeoff() -> Outcome {
    let (c0, alpha) = (50.0f64, 1.0f64);
    let ks: Vec<u64> = (1..=1000).collect();
    let curve = tradeoff_curve(&ks, c0, alpha, 1.0, 0.1).map_err(|e| e.to_string())?;
    // d/dk (ln k + c0 k^-alpha) = 0 at k = (alpha c0)^(1/alpha)
    let calculus = (alpha * c0).powf(1.0 / alpha).round() as u64;
    ensure(curve.argmin_k == calculus && calculus == 50, || format!("argmin {} vs {calculus}", curve.argmin_k))?;
    let at = curve.points.iter().position(|(k, _)| *k == curve.argmin_k).unwrap();
    let m: Vec<f64> = curve.points.iter().map(|(_, m)| *m).collect();
    ensure(m[..=at].windows(2).all(|w| w[0] > w[1]), || "not strictly decreasing before argmin".into())?;
    ensure(m[at..].windows(2).all(|w| w[0] < w[1]), || "not strictly increasing after argmin".into())?;
    ensure(at > 0 && at < m.len() - 1, || "argmin on the boundary".into())?;
    Ok(format!("argmin K_bank=50 (calculus oracle 50), U-shaped, min M={:.4}", curve.min_m))
}

#[derive(Deserialize)]
struct ReplyFixture {
    name: String,
    class: String,
    stage: String,
    raw: String,
    outcome: String,
    #[serde(default)]
    rules: Vec<String>,
    novel: Option<bool>,
}

fn classify(stage: &str, raw: &str) -> (String, Vec<String>, Option<bool>) {
    let backend = ScriptedBackend::new([raw]);
    let teacher = Teacher::new(&backend).with_max_retries(0);
    let q = Question::new("q", "Tom drives 60 miles in 1.5 hours. How far in 4 hours?");
    let plan = RoutePlan {
        category: "Arithmetic".into(),
        intent: vec!["unit-rate computation".into()],
        difficulty: 1,
        budget: 2,
        options: vec![
            ReasoningPath::new(["ComputeUnitRate", "MultiplyByCount"]),
            ReasoningPath::new(["IdentifyRatio", "ScaleToTarget"]),
        ],
    };
    let result = match stage {
        "stage1" => teacher.elicit_path(&q, "Arithmetic", "unit-rate computation").map(|_| None),
        _ => teacher.teach(&q, &plan).map(|r| Some(r.value.novel)),
    };
    match result {
        Ok(novel) => ("accepted".into(), Vec::new(), novel),
        Err(f) => match f.error {
            TeacherError::Malformed(_) => ("malformed".into(), Vec::new(), None),
            TeacherError::SchemaViolation(v) => {
                let mut rules: Vec<String> = v.iter().map(|x| x.rule().to_string()).collect();
                rules.dedup();
                ("rejected".into(), rules, None)
            }
            other => ("other".into(), vec![other.to_string()], None),
        },
    }
}

fn synthetic_row(i: usize, parsed: bool, correct: bool) -> DatasetRow {
    let q = Question::new(format!("s{i}"), format!("synthetic question {i}"));
    if !parsed {
        return DatasetRow::unparsed(&q, "truncated JSON".into());
    }
    let path = ReasoningPath::new(["ComputeTotal"]);
    let tuple = SupervisionTuple {
        question_id: q.id.clone(),
        route: Route { category: "Arithmetic".into(), intent: vec!["sum".into()], difficulty: 1, budget: 2, path },
        rationale: [("ComputeTotal", "Step1: add.")].into_iter().collect::<Rationale>(),
        answer: "1".into(),
        teacher_answer_correct: Some(correct),
    };
    DatasetRow::from_tuple(&q, &tuple)
}

fn c10_schema_corpus() -> Outcome {
    let corpus: Vec<ReplyFixture> =
        serde_json::from_str(include_str!("../../core/tests/fixtures/replies.json")).map_err(|e| e.to_string())?;
    ensure(corpus.len() == 25, || format!("{} fixtures", corpus.len()))?;
    let mut classes = BTreeMap::new();
    for f in &corpus {
        let got = classify(&f.stage, &f.raw);
        ensure(got == (f.outcome.clone(), f.rules.clone(), f.novel), || format!("{}: got {got:?}", f.name))?;
        *classes.entry(f.class.as_str()).or_insert(0) += 1;
    }
    ensure(classes.len() == 6, || format!("classes {classes:?}"))?;

    let flags = [(true, true); 7].into_iter().chain([(true, false), (false, false), (false, false)]);
    let rows: Vec<DatasetRow> = flags.enumerate().map(|(i, (p, c))| synthetic_row(i, p, c)).collect();
    let m = dataset_metrics(&rows, TokenTotals::default());
    ensure(m.accuracy == 0.7 && m.format_validity == Some(0.875), || {
        format!("accuracy {} FV {:?}", m.accuracy, m.format_validity)
    })?;
    let report = pathbank::cli::validate_text(&export_jsonl(&rows, None));
    ensure(report.problems.is_empty() && report.metrics == m, || format!("validate: {:?}", report.problems))?;
    Ok(format!("25/25 replies classified as labelled across {} classes; Acc 0.7, FV 0.875", classes.len()))
}

fn c11_bernstein() -> Outcome {
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let tau = r.gen_range(0.1..20.0);
        let l_hat = r.gen_range(0.0..tau);
        let kl = r.gen_range(0.0..5000.0);
        let delta = r.gen_range(0.001..1.0);
        let n = r.gen_range(1..100_000);
        let c = r.gen_range(0.1..4.0);
        let a = bernstein_bound(l_hat, tau * l_hat, kl, delta, n, tau, c).map_err(|e| e.to_string())?;
        let b = bernstein_corollary(l_hat, kl, delta, n, tau, c).map_err(|e| e.to_string())?;
        worst = worst.max((a.bound - b).abs());
    }
    ensure(worst <= 1e-12, || format!("identity error {worst:e}"))?;
    let mut violations = 0;
    for _ in 0..10_000 {
        let tau = r.gen_range(0.01..100.0);
        let xs: Vec<f64> = (0..r.gen_range(1..=50))
            .map(|_| match r.gen_range(0..4) {
                0 => 0.0,
                1 => tau,
                _ => r.gen_range(0.0..=tau),
            })
            .collect();
        let (mean, var) = mean_and_variance(&xs).map_err(|e| e.to_string())?;
        let flag = bernstein_bound(mean, var, 1.0, 0.05, 100, tau, 1.0).map_err(|e| e.to_string())?.mean_variance_ok;
        if var > tau * mean || !flag {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} domination violations"))?;
    Ok(format!("identity max error {worst:.1e}; 10000 sample sets, 0 violations"))
}

fn c12_persistence() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let embedder = DeterministicEmbedder::new(0, 384).unwrap();
    let mut checked = 0;
    for config in ["distill.toml", "distill_novelty.toml"] {
        let dir = tmp.path().join(config);
        distill_run(&dir, config)?;
        let bank_text = fs::read_to_string(dir.join("bank.json")).unwrap();
        let bank = io::load_bank(&dir.join("bank.json"), &embedder, false).map_err(|e| e.to_string())?;
        ensure(bank.to_json() + "\n" == bank_text, || format!("{config}: bank re-serializes differently"))?;
        let again = Bank::from_json(&bank.to_json(), &embedder, false).map_err(|e| e.to_string())?;
        ensure(again == bank, || format!("{config}: bank round trip lost structure"))?;

        let data = fs::read_to_string(dir.join("dataset.jsonl")).unwrap();
        let (meta, rows) = parse_jsonl::<DatasetRow>(&data).map_err(|e| e.message)?;
        ensure(export_jsonl(&rows, meta.as_ref()) == data, || format!("{config}: dataset round trip differs"))?;

        let other = DeterministicEmbedder::new(1, 384).unwrap();
        ensure(
            matches!(Bank::from_json(&bank_text, &other, false), Err(BankError::EmbeddingFingerprintMismatch { .. })),
            || format!("{config}: fingerprint mismatch accepted"),
        )?;
        let mut doc: Value = serde_json::from_str(&bank_text).unwrap();
        doc["schema_version"] = Value::from(2);
        ensure(
            matches!(
                Bank::from_json(&doc.to_string(), &embedder, false),
                Err(BankError::SchemaVersionMismatch { found: 2 })
            ),
            || format!("{config}: schema version 2 accepted"),
        )?;
        checked += 1;
    }

    let questions = questions40();
    let spec = MockSpec::from_json(&fs::read_to_string(fixture("mock.json")).unwrap()).unwrap();
    let mock = MockTeacher::new(spec).unwrap();
    let teacher = Teacher::new(&mock);
    for mode in [BaselineMode::Cot, BaselineMode::Freeform, BaselineMode::SuperCorrect] {
        let out = run_baseline(&questions, &teacher, mode, &PipelineConfig::default()).map_err(|e| e.to_string())?;
        let text = export_jsonl(&out.rows, None);
        let (_, rows) = parse_jsonl::<BaselineRow>(&text).map_err(|e| e.message)?;
        ensure(rows == out.rows && export_jsonl(&rows, None) == text, || {
            format!("{mode:?}: baseline round trip differs")
        })?;
        checked += 1;
    }
    Ok(format!("{checked} exports lossless; fingerprint and schema_version mismatches rejected"))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("closed-form Gaussian KL", c1_gaussian_kl),
        ("norm control", c2_norm_control),
        ("entropy baseline", c3_entropy_baseline),
        ("DBSCAN oracle equivalence", c4_dbscan),
        ("top-K retrieval oracle", c5_topk),
        ("pipeline trace fidelity", c6_trace_fidelity),
        ("seed sampling", c7_seed_sampling),
        ("gap column arithmetic", c8_table3),
        ("trade-off shape", c9_tradeoff),
        ("schema validation corpus", c10_schema_corpus),
        ("Bernstein identity", c11_bernstein),
        ("persistence", c12_persistence),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
