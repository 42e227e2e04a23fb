//! Worker-pool categorization. Results are folded in input order, so the
//! pass is identical to the sequential one whatever the completion order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use pathbank_core::pipeline::{categorize_all, CategorizationPass, CategoryCache};
use pathbank_core::teacher::{ChatBackend, Teacher, TeacherFailure, TeacherReply};
use pathbank_core::Question;

type Outcome = Result<TeacherReply<(String, String)>, TeacherFailure>;

pub fn categorize_parallel<B: ChatBackend + Sync>(
    questions: &[Question],
    teacher: &Teacher<B>,
    cache: &mut CategoryCache,
    workers: usize,
) -> CategorizationPass {
    if workers <= 1 {
        return categorize_all(questions, teacher, cache);
    }
    let pending: Vec<usize> = questions
        .iter()
        .enumerate()
        .filter(|(_, q)| CategorizationPass::known(q, cache).is_none())
        .map(|(i, _)| i)
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Outcome>>> = Mutex::new((0..questions.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers.min(pending.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&i) = pending.get(k) else { break };
                let outcome = teacher.categorize(&questions[i]);
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(outcome);
            });
        }
    });
    let mut results = results.into_inner().unwrap_or_else(|e| e.into_inner());

    let mut pass = CategorizationPass::default();
    for (i, q) in questions.iter().enumerate() {
        match results[i].take() {
            Some(Ok(r)) => pass.record(q, Ok(r.value), r.usage, cache),
            Some(Err(f)) => {
                let usage = f.usage;
                pass.record(q, Err(f), usage, cache);
            }
            None => {
                pass.cache_hits += 1;
                pass.labels.push(CategorizationPass::known(q, cache));
            }
        }
    }
    pass
}

#[cfg(test)]
mod tests {
    use super::*;
    use pathbank_core::teacher::mock::{MockSpec, MockTeacher};

    #[test]
    fn parallel_matches_sequential() {
        let spec = MockSpec::from_json(
            r#"{"rules": [{"match": {"contains": "miles"}, "category": "Arithmetic",
                "intent": "unit-rate computation", "path": ["ComputeUnitRate", "MultiplyByCount"]}]}"#,
        )
        .unwrap();
        let m = MockTeacher::new(spec).unwrap();
        let teacher = Teacher::new(&m);
        let qs: Vec<Question> = (0..30)
            .map(|i| {
                let text = if i % 3 == 0 { format!("{i} miles") } else { format!("riddle {i}") };
                let q = Question::new(format!("q{i}"), text);
                if i == 5 {
                    q.with_labels("Given", "preset")
                } else {
                    q
                }
            })
            .collect();
        let mut c1 = CategoryCache::new();
        let mut c2 = CategoryCache::new();
        let a = categorize_all(&qs, &teacher, &mut c1);
        let b = categorize_parallel(&qs, &teacher, &mut c2, 4);
        assert_eq!(a, b);
        assert_eq!(c1, c2);
        assert_eq!(a.cache_hits, 1);
    }
}
