mod common;

use std::fs;

use mirage_core::agent::AgentConfig;
use mirage_core::fixtures::{apps, composite_suite};
use mirage_core::guienv::{EpisodeOutcome, GuiEnv, TaskSpec, TerminalReason};
use mirage_core::harness::fixture::build_fixture_stores;
use mirage_core::harness::{
    load_suite, metrics, percent, recompute, report, report_table, run_ablation_matrix, run_suite, write_suite,
    AblationSpec, Bench, HarnessError, SuiteResult, PRESETS,
};
use mirage_core::samcts::SearchConfig;
use mirage_core::skillstore::{Origin, SkillStore};
use proptest::prelude::*;

fn outcome(done: usize, total: usize) -> EpisodeOutcome {
    EpisodeOutcome {
        success: done == total,
        checkpoints_completed: done,
        checkpoints_total: total,
        steps_taken: 4,
        terminal_reason: TerminalReason::StatusComplete,
    }
}

fn small_suite() -> Vec<TaskSpec> {
    composite_suite(7).unwrap().into_iter().take(6).collect()
}

struct Setup {
    env: GuiEnv,
    store: SkillStore,
    reasoner: mirage_core::provider::Reasoner,
    agent: AgentConfig,
    search: SearchConfig,
}

impl Setup {
    fn new() -> Self {
        let reasoner = common::sim();
        let store = common::bootstrapped(&reasoner);
        Self { env: GuiEnv::new(apps()).unwrap(), store, reasoner, agent: AgentConfig::default(), search: SearchConfig::default() }
    }

    fn bench(&self) -> Bench<'_> {
        Bench { env: &self.env, store: &self.store, reasoner: &self.reasoner, agent: &self.agent, search: &self.search }
    }
}

#[test]
fn metrics_match_a_hand_worked_example() {
    // Three full successes, one task at 3 of 5 checkpoints, one at none.
    let outcomes = [outcome(2, 2), outcome(3, 3), outcome(1, 1), outcome(3, 5), outcome(0, 2)];
    let (sr, cr) = metrics(outcomes.iter());
    assert_eq!(sr, 0.6);
    assert!((cr - 0.72).abs() < 1e-12, "{cr}");
}

#[test]
fn metrics_of_nothing_are_zero() {
    assert_eq!(metrics(std::iter::empty()), (0.0, 0.0));
}

proptest! {
    #[test]
    fn success_rate_never_exceeds_completion_rate(parts in prop::collection::vec((0usize..6, 1usize..6), 1..40)) {
        let outcomes: Vec<EpisodeOutcome> = parts.iter().map(|&(d, t)| outcome(d.min(t), t)).collect();
        let (sr, cr) = metrics(outcomes.iter());
        prop_assert!(sr <= cr + 1e-12);
        prop_assert!((0.0..=1.0).contains(&sr) && (0.0..=1.0).contains(&cr));
    }
}

#[test]
fn percentages_render_with_one_decimal() {
    assert_eq!(percent(0.5), "50.0%");
    assert_eq!(percent(1.0), "100.0%");
    assert_eq!(percent(2.0 / 3.0), "66.7%");
}

#[test]
fn empty_inputs_are_rejected() {
    let s = Setup::new();
    assert!(matches!(run_suite(s.bench(), &[], &AblationSpec::all(), 1), Err(HarnessError::EmptySuite)));
    assert!(matches!(run_ablation_matrix(s.bench(), &small_suite(), &[], 1), Err(HarnessError::NoSpecs)));
}

#[test]
fn suites_round_trip_through_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let suite = small_suite();
    write_suite(dir.path(), &suite).unwrap();
    fs::write(dir.path().join("README.txt"), "not a task").unwrap();
    let mut expected = suite.clone();
    expected.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    assert_eq!(load_suite(dir.path()).unwrap(), expected);
}

#[test]
fn a_malformed_task_file_is_named_in_the_error() {
    let dir = tempfile::tempdir().unwrap();
    write_suite(dir.path(), &small_suite()).unwrap();
    fs::write(dir.path().join("zz-broken.json"), "{\"task_id\": 3}").unwrap();
    match load_suite(dir.path()) {
        Err(HarnessError::BadTask { path, .. }) => assert!(path.ends_with("zz-broken.json"), "{path}"),
        other => panic!("expected a bad-task error, got {other:?}"),
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let s = Setup::new();
    let suite = small_suite();
    let a = run_suite(s.bench(), &suite, &AblationSpec::all(), 5).unwrap();
    let b = run_suite(s.bench(), &suite, &AblationSpec::all(), 5).unwrap();
    assert_eq!(a.result.to_json(), b.result.to_json());
    assert_eq!(a.result.digest(), b.result.digest());
    assert_eq!(report(&a.result), report(&b.result));
    assert!(!a.result.to_json().contains("wallclock"));
}

#[test]
fn results_round_trip_through_json() {
    let s = Setup::new();
    let run = run_suite(s.bench(), &small_suite(), &AblationSpec::preset("exec-only").unwrap(), 2).unwrap();
    let back: SuiteResult = serde_json::from_str(&run.result.to_json()).unwrap();
    assert_eq!(back, run.result);
}

#[test]
fn the_report_echoes_the_configuration() {
    let s = Setup::new();
    let run = run_suite(s.bench(), &small_suite(), &AblationSpec::preset("core-meta").unwrap(), 9).unwrap();
    let text = report(&run.result);
    assert!(text.contains("core-meta"));
    assert!(text.contains("seed         9"));
    assert!(text.contains(&percent(run.result.success_rate)));
    for t in &run.result.tasks {
        assert!(text.contains(&t.task_id));
    }
}

#[test]
fn table_rows_follow_the_given_spec_order() {
    let s = Setup::new();
    let names = ["none", "all", "exec-only"];
    let specs: Vec<AblationSpec> = names.iter().map(|n| AblationSpec::preset(n).unwrap()).collect();
    let table = run_ablation_matrix(s.bench(), &small_suite(), &specs, 1).unwrap();
    let got: Vec<&str> = table.rows.iter().map(|r| r.spec.name.as_str()).collect();
    assert_eq!(got, names);
    let text = report_table(&table);
    let at = |n: &str| text.lines().position(|l| l.starts_with(&format!("{n} "))).unwrap();
    assert!(at("none") < at("all") && at("all") < at("exec-only"));
}

#[test]
fn duplicate_specs_give_identical_rows() {
    let s = Setup::new();
    let spec = AblationSpec::all();
    let table = run_ablation_matrix(s.bench(), &small_suite(), &[spec.clone(), spec], 4).unwrap();
    assert_eq!(table.rows[0].result, table.rows[1].result);
}

#[test]
fn every_preset_resolves() {
    for name in PRESETS {
        let spec = AblationSpec::preset(name).unwrap();
        assert_eq!(&spec.name, name);
    }
    assert!(AblationSpec::preset("no-such-preset").is_none());
}

#[test]
fn traces_reproduce_the_reported_metrics() {
    let s = Setup::new();
    let suite = small_suite();
    let run = run_suite(s.bench(), &suite, &AblationSpec::all(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run.write_traces(dir.path()).unwrap();
    let again = recompute(dir.path(), &suite, &s.env).unwrap();
    assert_eq!(again.success_rate, run.result.success_rate);
    assert_eq!(again.completion_rate, run.result.completion_rate);
    for (t, (id, o)) in run.result.tasks.iter().zip(&again.outcomes) {
        assert_eq!(&t.task_id, id);
        assert_eq!(&t.outcome, o);
    }

    // Losing a trace turns that task into a failure rather than an error.
    let first = &suite[0].task_id;
    fs::remove_file(dir.path().join(format!("{first}.jsonl"))).unwrap();
    let partial = recompute(dir.path(), &suite, &s.env).unwrap();
    assert!(!partial.outcomes[0].1.success);
}

#[test]
fn origin_restriction_leaves_a_consistent_store() {
    let reasoner = common::sim();
    let dir = tempfile::tempdir().unwrap();
    let f = build_fixture_stores(dir.path(), &reasoner).unwrap();
    for origins in [vec![Origin::Offline], vec![Origin::Online], vec![]] {
        let r = f.combined.restrict_to_origins(&origins);
        r.check_integrity().unwrap();
        assert!(r.execution_skills().all(|e| origins.contains(&e.origin)));
        assert!(r.core_skills().all(|c| !c.execution_skill_ids.is_empty()));
        assert!(r.meta_skills().all(|m| !m.core_skill_ids.is_empty()));
    }
    let both = f.combined.restrict_to_origins(&[Origin::Offline, Origin::Online]);
    assert_eq!(both.counts(), f.combined.counts());
    assert_eq!(f.combined.restrict_to_origins(&[]).counts(), (0, 0, 0));
}

#[test]
fn enabling_a_level_or_source_never_lowers_success() {
    let reasoner = common::sim();
    let dir = tempfile::tempdir().unwrap();
    let f = build_fixture_stores(dir.path(), &reasoner).unwrap();
    let (agent, search) = (AgentConfig::default(), SearchConfig::default());
    let bench = Bench { env: &f.env, store: &f.combined, reasoner: &reasoner, agent: &agent, search: &search };
    let suite = composite_suite(7).unwrap();
    // Bits: offline, online, execution, core, meta.
    let spec = |bits: usize| AblationSpec {
        name: format!("{bits:05b}"),
        offline_skills: bits & 1 != 0,
        online_skills: bits & 2 != 0,
        execution_level: bits & 4 != 0,
        core_level: bits & 8 != 0,
        meta_level: bits & 16 != 0,
        ..AblationSpec::all()
    };
    let specs: Vec<AblationSpec> = (0..32).map(spec).collect();
    let table = run_ablation_matrix(bench, &suite, &specs, 1).unwrap();
    let sr: Vec<f64> = table.rows.iter().map(|r| r.result.as_ref().unwrap().success_rate).collect();
    for bits in 0..32 {
        for k in 0..5 {
            let with = bits | (1 << k);
            assert!(sr[bits] <= sr[with], "turning on bit {k} of {bits:05b}: {} -> {}", sr[bits], sr[with]);
        }
    }
}
