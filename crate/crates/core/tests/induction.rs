mod common;

use std::fs;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use mirage_core::agent::Trajectory;
use mirage_core::induction::{
    bootstrap, corpus_files, generate_corpus, induct, write_corpus, InductionReport, RawTrajectoryRecord,
};
use mirage_core::provider::{PromptRequest, Provider, ProviderError, Reasoner};
use mirage_core::sim::SimProvider;
use mirage_core::skillstore::{Origin, SkillStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::sim;

/// Passes requests to the simulator until call number `fail_from`, then
/// fails every call after it.
struct Outage {
    inner: SimProvider,
    calls: AtomicU32,
    fail_from: u32,
}

impl Outage {
    fn new(fail_from: u32) -> Self {
        Self { inner: SimProvider::default(), calls: AtomicU32::new(0), fail_from }
    }
}

impl Provider for Outage {
    fn id(&self) -> &str {
        "outage"
    }

    fn send(&self, request: &PromptRequest, attempt: u32) -> Result<String, ProviderError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        if n >= self.fail_from {
            return Err(ProviderError::Transport { attempts: attempt, message: "connection refused".into() });
        }
        self.inner.send(request, attempt)
    }
}

fn corpus_dir(n: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &generate_corpus(n, 3)).unwrap();
    dir
}

#[test]
fn corpus_generation_is_seeded() {
    let a: Vec<String> = generate_corpus(12, 3).iter().map(Trajectory::to_jsonl).collect();
    let b: Vec<String> = generate_corpus(12, 3).iter().map(Trajectory::to_jsonl).collect();
    let c: Vec<String> = generate_corpus(12, 4).iter().map(Trajectory::to_jsonl).collect();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(generate_corpus(12, 3).iter().all(|t| t.outcome.success));
}

#[test]
fn bootstrap_accounts_for_every_record() {
    let dir = corpus_dir(60);
    let r = sim();
    let mut store = SkillStore::default();
    let rep = bootstrap(dir.path(), &mut store, &r, None).unwrap();
    assert_eq!(rep.processed, 60);
    assert!(rep.failures.is_empty(), "{:?}", rep.failures);
    assert_eq!(rep.execution_skills_created + rep.duplicates, 60);
    assert_eq!(rep.core_skills_created + rep.core_skills_attached, rep.execution_skills_created);
    let (metas, cores, execs) = store.counts();
    assert_eq!((metas, cores, execs), (rep.meta_skills_created, rep.core_skills_created, rep.execution_skills_created));
    store.check_integrity().unwrap();
    let seen: u32 = store.execution_skills().map(|e| e.occurrences).sum();
    assert_eq!(seen as usize, 60);
}

#[test]
fn limit_caps_the_records_read() {
    let dir = corpus_dir(20);
    let r = sim();
    let mut store = SkillStore::default();
    assert_eq!(bootstrap(dir.path(), &mut store, &r, Some(7)).unwrap().processed, 7);
    let mut empty = SkillStore::default();
    assert_eq!(bootstrap(dir.path(), &mut empty, &r, Some(0)).unwrap().processed, 0);
    assert_eq!(empty.counts(), (0, 0, 0));
}

#[test]
fn ingesting_a_corpus_twice_adds_no_skills() {
    let dir = corpus_dir(20);
    let r = sim();
    let mut store = SkillStore::default();
    bootstrap(dir.path(), &mut store, &r, None).unwrap();
    let counts = store.counts();
    let again = bootstrap(dir.path(), &mut store, &r, None).unwrap();
    assert_eq!(again.duplicates, 20);
    assert_eq!(again.execution_skills_created, 0);
    assert_eq!(store.counts(), counts);
}

#[test]
fn unreadable_files_are_reported_and_skipped() {
    let dir = corpus_dir(5);
    fs::write(dir.path().join("000-broken.jsonl"), "{ not json\n").unwrap();
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    assert_eq!(corpus_files(dir.path()).unwrap().len(), 6);
    let r = sim();
    let mut store = SkillStore::default();
    let rep = bootstrap(dir.path(), &mut store, &r, None).unwrap();
    assert_eq!(rep.processed, 5);
    assert_eq!(rep.failures.len(), 1);
    assert!(rep.failures[0].contains("000-broken"));
}

#[test]
fn missing_corpus_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = sim();
    assert!(bootstrap(&dir.path().join("absent"), &mut SkillStore::default(), &r, None).is_err());
}

#[test]
fn provider_outages_never_leave_partial_skills() {
    let corpus = generate_corpus(60, 3);
    let r = sim();
    let mut base = SkillStore::default();
    for t in &corpus[..20] {
        induct(&RawTrajectoryRecord::from_trajectory(t, Origin::Offline), &mut base, &r, &mut InductionReport::default());
    }
    let fresh: Vec<RawTrajectoryRecord> = corpus[20..]
        .iter()
        .map(|t| RawTrajectoryRecord::from_trajectory(t, Origin::Offline))
        .filter(|rec| base.execution_by_trajectory(&rec.digest()).is_none())
        .collect();
    assert!(fresh.len() >= 5);

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failed = 0;
    for trial in 0..100 {
        let record = &fresh[trial % fresh.len()];
        let counter = Arc::new(Outage::new(u32::MAX));
        induct(record, &mut base.clone(), &Reasoner::new(counter.clone()), &mut InductionReport::default());
        let needed = counter.calls.load(Ordering::SeqCst);
        let outage = Reasoner::new(Arc::new(Outage::new(rng.gen_range(1..=needed))));
        let mut store = base.clone();
        let before = store.digest();
        let mut rep = InductionReport::default();
        induct(record, &mut store, &outage, &mut rep);
        assert_eq!(rep.failures.len(), 1, "trial {trial}: the outage must surface");
        assert_eq!(store.digest(), before, "trial {trial}: store changed despite failure");
        failed += 1;
    }
    assert_eq!(failed, 100);
}

#[test]
fn merge_survives_a_dead_provider_unchanged() {
    let r = sim();
    let mut store = common::bootstrapped(&r);
    let before = store.digest();
    let dead = Reasoner::new(Arc::new(Outage::new(1)));
    let rep = store.merge_core_skills(0.5, &dead).unwrap();
    assert!(rep.merged.is_empty());
    assert!(!rep.failures.is_empty(), "no pair was even considered");
    assert_eq!(store.digest(), before);
}
