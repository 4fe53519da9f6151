mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;
use std::time::Duration;

use common::*;
use cyclesql::feedback::{
    read_jsonl, run_dataset, run_task, write_jsonl, LoopConfig, LoopResult, RowPolicy, TaskError, TranslationTask,
};
use cyclesql::verify::{
    normalize_sql, ConstantVerifier, HeuristicVerifier, NliInput, OracleVerifier, Verdict, VerifierBackend, VerifyError,
};
use proptest::prelude::*;

fn flights() -> &'static Fixture {
    static FX: OnceLock<Fixture> = OnceLock::new();
    FX.get_or_init(flight_fixture)
}

fn task(id: &str, candidates: &[&str]) -> TranslationTask {
    TranslationTask {
        id: id.into(),
        db_id: "flight_1".into(),
        question: FIG2_QUESTION.into(),
        candidates: candidates.iter().map(|s| s.to_string()).collect(),
    }
}

/// Accepts exactly the listed SQL texts, for any question.
fn accepting(sqls: &[&str]) -> OracleVerifier {
    let accepted: Vec<String> = sqls.iter().map(|s| normalize_sql(s)).collect();
    OracleVerifier::with_judge(move |_, sql| accepted.contains(&normalize_sql(sql)))
}

/// Counts calls and fails on every one.
#[derive(Default)]
struct Down(AtomicUsize);

impl VerifierBackend for Down {
    fn name(&self) -> &str {
        "down"
    }
    fn verify(&self, _: &NliInput) -> Result<Verdict, VerifyError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Err(VerifyError::BackendUnavailable("connection refused".into()))
    }
}

fn check_invariants(t: &TranslationTask, r: &LoopResult) {
    assert!(t.candidates.contains(&r.chosen_sql));
    assert_eq!(t.candidates[r.chosen_rank - 1], r.chosen_sql);
    assert_eq!(r.iterations, r.trail.iter().filter(|e| e.verdict.is_some()).count());
    if r.fallback_used {
        assert_eq!(r.chosen_rank, 1);
        assert!(r.trail.iter().all(|e| !e.verdict.as_ref().is_some_and(Verdict::entails)));
    }
}

#[test]
fn fig2_second_candidate_is_chosen() {
    let mut oracle = OracleVerifier::new();
    oracle.insert(FIG2_QUESTION, FIG2_GOLD_SQL, true);
    let t = task("fig2", &[FIG2_WRONG_SQL, FIG2_GOLD_SQL]);
    let r = run_task(&flights().gateway, &t, &oracle, &LoopConfig::default()).unwrap();
    assert_eq!((r.chosen_rank, r.iterations, r.fallback_used), (2, 2, false));
    assert_eq!(r.chosen_sql, FIG2_GOLD_SQL);
    assert!(r.explanation.as_ref().unwrap().text.contains("Airbus A340-300"));
    check_invariants(&t, &r);
}

#[test]
fn single_correct_candidate() {
    let t = task("one", &[FIG2_GOLD_SQL]);
    let r = run_task(&flights().gateway, &t, &accepting(&[FIG2_GOLD_SQL]), &LoopConfig::default()).unwrap();
    assert_eq!((r.chosen_rank, r.iterations, r.fallback_used), (1, 1, false));
}

#[test]
fn all_rejected_falls_back_to_first() {
    let t = task("none", &[FIG2_WRONG_SQL, FIG2_GOLD_SQL, "SELECT flno FROM flight"]);
    let r = run_task(&flights().gateway, &t, &ConstantVerifier::always_reject(), &LoopConfig::default()).unwrap();
    assert_eq!((r.chosen_rank, r.iterations, r.fallback_used), (1, 3, true));
    assert_eq!(r.chosen_sql, FIG2_WRONG_SQL);
    assert!(r.explanation.as_ref().unwrap().text.contains("2 flights in total"));
    check_invariants(&t, &r);
}

#[test]
fn broken_candidates_cost_no_verifier_call() {
    let t = task("broken", &["SELEC flno FROM", "SELECT nope FROM flight", FIG2_GOLD_SQL]);
    let r = run_task(&flights().gateway, &t, &ConstantVerifier::always_entail(), &LoopConfig::default()).unwrap();
    assert_eq!((r.chosen_rank, r.iterations), (3, 1));
    let flags: Vec<(bool, bool)> = r.trail.iter().map(|e| (e.parse_ok, e.exec_ok)).collect();
    assert_eq!(flags, [(false, false), (true, false), (true, true)]);
    assert!(r.trail[0].error.is_some() && r.trail[1].error.is_some());
    check_invariants(&t, &r);
}

#[test]
fn fallback_keeps_an_unparseable_first_candidate() {
    let t = task("bad-first", &["SELEC 1", FIG2_WRONG_SQL]);
    let r = run_task(&flights().gateway, &t, &ConstantVerifier::always_reject(), &LoopConfig::default()).unwrap();
    assert_eq!((r.chosen_rank, r.iterations, r.fallback_used), (1, 1, true));
    assert!(r.explanation.is_none());
}

#[test]
fn nothing_parses_is_an_error() {
    let t = task("junk", &["SELEC 1", "FROM x"]);
    let err = run_task(&flights().gateway, &t, &ConstantVerifier::always_entail(), &LoopConfig::default());
    assert!(matches!(err, Err(TaskError::NothingParses(_))));
}

#[test]
fn invalid_tasks_are_rejected() {
    let cfg = LoopConfig::default();
    let backend = ConstantVerifier::always_entail();
    assert!(matches!(run_task(&flights().gateway, &task("e", &[]), &backend, &cfg), Err(TaskError::NoCandidates(_))));
    let mut blank = task("b", &[FIG2_GOLD_SQL]);
    blank.question = "  ".into();
    assert!(matches!(run_task(&flights().gateway, &blank, &backend, &cfg), Err(TaskError::EmptyQuestion(_))));
    let mut unknown = task("u", &[FIG2_GOLD_SQL]);
    unknown.db_id = "nowhere".into();
    assert!(matches!(run_task(&flights().gateway, &unknown, &backend, &cfg), Err(TaskError::Db(_))));
}

#[test]
fn duplicates_are_verified_once() {
    let t = task("dup", &[FIG2_WRONG_SQL, &format!("{FIG2_WRONG_SQL} ;"), FIG2_GOLD_SQL]);
    let r = run_task(&flights().gateway, &t, &accepting(&[FIG2_GOLD_SQL]), &LoopConfig::default()).unwrap();
    assert_eq!((r.chosen_rank, r.iterations), (3, 2));
    assert_eq!(r.trail.len(), 2);
}

#[test]
fn candidates_beyond_k_are_ignored() {
    let t = task("k", &[FIG2_WRONG_SQL, "SELECT flno FROM flight", FIG2_GOLD_SQL]);
    let cfg = LoopConfig { k: 2, ..LoopConfig::default() };
    let r = run_task(&flights().gateway, &t, &accepting(&[FIG2_GOLD_SQL]), &cfg).unwrap();
    assert_eq!((r.chosen_rank, r.iterations, r.fallback_used), (1, 2, true));
}

#[test]
fn verifier_outage_aborts_the_task() {
    let down = Down::default();
    let t = task("down", &[FIG2_WRONG_SQL, FIG2_GOLD_SQL]);
    let err = run_task(&flights().gateway, &t, &down, &LoopConfig::default()).unwrap_err();
    assert!(matches!(err, TaskError::Verifier { source: VerifyError::BackendUnavailable(_), .. }));
    assert_eq!(down.0.load(Ordering::SeqCst), 1);
}

#[test]
fn slow_candidates_time_out_as_rejections() {
    let slow = "SELECT count(*) FROM flight AS a, flight AS b, flight AS c, flight AS d, flight AS e, flight AS f, flight AS g, flight AS h";
    let t = task("slow", &[slow, FIG2_GOLD_SQL]);
    let cfg = LoopConfig { timeout: Duration::from_millis(50), ..LoopConfig::default() };
    let r = run_task(&flights().gateway, &t, &ConstantVerifier::always_entail(), &cfg).unwrap();
    assert_eq!(r.chosen_rank, 2);
    let err = r.trail[0].error.as_deref().unwrap();
    assert!(err.contains("timeout"), "{err}");
}

#[test]
fn seeded_row_policy_is_deterministic() {
    let t = task("rows", &["SELECT flno, origin FROM flight"]);
    let run = |seed| {
        let cfg = LoopConfig { row_policy: RowPolicy::SeededRandom(seed), ..LoopConfig::default() };
        run_task(&flights().gateway, &t, &ConstantVerifier::always_entail(), &cfg).unwrap().explanation.unwrap()
    };
    assert_eq!(run(5), run(5));
    let rows: std::collections::HashSet<_> = (0..20).map(|s| format!("{:?}", run(s).subject_row)).collect();
    assert!(rows.len() > 1, "seeds never changed the traced row");
}

#[test]
fn dataset_mean_of_one_and_three() {
    let a = task("a", &[FIG2_GOLD_SQL]);
    let b = task("b", &[FIG2_WRONG_SQL, "SELECT flno FROM flight", FIG2_GOLD_SQL]);
    let run = run_dataset(&flights().gateway, &[a, b], &accepting(&[FIG2_GOLD_SQL]), &LoopConfig::default());
    let iterations: Vec<usize> = run.results.iter().map(|r| r.as_ref().unwrap().iterations).collect();
    assert_eq!(iterations, [1, 3]);
    assert!((run.mean_iterations - 2.0).abs() < 1e-12);
    assert!((run.entailed_fraction - 1.0).abs() < 1e-12);
}

#[test]
fn dataset_where_every_first_candidate_validates() {
    let tasks: Vec<_> = (0..10).map(|i| task(&i.to_string(), &[FIG2_GOLD_SQL, FIG2_WRONG_SQL])).collect();
    let run = run_dataset(&flights().gateway, &tasks, &accepting(&[FIG2_GOLD_SQL]), &LoopConfig::default());
    assert_eq!(run.mean_iterations, 1.0);
}

#[test]
fn geometric_pattern_matches_closed_form() {
    // Each call is accepted with probability one half, two calls at most:
    // 50 tasks stop at rank 1, 25 at rank 2 and 25 exhaust both.
    let (p, k) = (0.5f64, 2i32);
    let tasks: Vec<_> = (0..100)
        .map(|i| {
            let c = if i < 50 {
                vec![FIG2_GOLD_SQL, FIG2_WRONG_SQL]
            } else if i < 75 {
                vec![FIG2_WRONG_SQL, FIG2_GOLD_SQL]
            } else {
                vec![FIG2_WRONG_SQL, "SELECT flno FROM flight"]
            };
            task(&format!("g{i}"), &c)
        })
        .collect();
    let run = run_dataset(&flights().gateway, &tasks, &accepting(&[FIG2_GOLD_SQL]), &LoopConfig::default());
    let expected = (1.0 - (1.0 - p).powi(k)) / p;
    assert!((run.mean_iterations - expected).abs() < 1e-9);
    assert!((run.entailed_fraction - 0.75).abs() < 1e-12);
}

#[test]
fn dataset_records_failures_and_continues() {
    let tasks = [task("junk", &["SELEC"]), task("ok", &[FIG2_GOLD_SQL])];
    let run = run_dataset(&flights().gateway, &tasks, &ConstantVerifier::always_entail(), &LoopConfig::default());
    assert!(run.results[0].is_err() && run.results[1].is_ok());
    assert!((run.mean_iterations - 0.5).abs() < 1e-12);
}

#[test]
fn jsonl_round_trip() {
    let line = r#"{"id": "t1", "db_id": "flight_1", "question": "q?", "candidates": ["SELECT 1"]}"#;
    let tasks: Vec<TranslationTask> = read_jsonl(format!("{line}\n\n{line}\n").as_bytes()).unwrap();
    assert_eq!(tasks.len(), 2);
    assert!(read_jsonl::<TranslationTask>("{\"id\": 1}\n".as_bytes()).unwrap_err().to_string().starts_with("line 1"));

    let t = task("fig2", &[FIG2_WRONG_SQL, FIG2_GOLD_SQL]);
    let r = run_task(&flights().gateway, &t, &accepting(&[FIG2_GOLD_SQL]), &LoopConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, [&r]).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    for key in [
        "\"id\"",
        "\"chosen_sql\"",
        "\"chosen_rank\"",
        "\"iterations\"",
        "\"fallback_used\"",
        "\"explanation\"",
        "\"trail\"",
    ] {
        assert!(text.contains(key), "{key} missing");
    }
    let back: Vec<LoopResult> = read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back, vec![r]);
}

const POOL: &[&str] = &[
    FIG2_WRONG_SQL,
    FIG2_GOLD_SQL,
    "SELECT flno FROM flight",
    "SELECT flno FROM flight WHERE aid = 3",
    "SELECT name FROM aircraft",
    "SELECT count(*) FROM flight",
    "SELECT flno FROM flight WHERE origin = 'Los Angeles'",
    "SELECT missing FROM flight",
    "SELEC flno",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn outcome_is_stable_under_appended_candidates(
        picks in prop::collection::vec(0..POOL.len(), 1..5),
        extra in prop::collection::vec(0..POOL.len(), 1..4),
    ) {
        let base: Vec<&str> = picks.iter().map(|&i| POOL[i]).collect();
        prop_assume!(base.iter().any(|c| !c.starts_with("SELEC ")));
        let backend = HeuristicVerifier::default();
        let cfg = LoopConfig::default();
        let t = task("p", &base);
        let r = run_task(&flights().gateway, &t, &backend, &cfg).unwrap();
        check_invariants(&t, &r);
        if !r.fallback_used {
            let mut longer = base.clone();
            longer.extend(extra.iter().map(|&i| POOL[i]));
            let r2 = run_task(&flights().gateway, &task("p", &longer), &backend, &cfg).unwrap();
            prop_assert_eq!((r.chosen_rank, r.iterations), (r2.chosen_rank, r2.iterations));
            prop_assert_eq!(r.chosen_sql, r2.chosen_sql);
        }
    }
}
