use std::sync::Arc;

use mirage_core::guienv::Action;
use mirage_core::provider::{cosine, Embedder, HashingEmbedder, ParamSpec, Reasoner, Role, ScriptedProvider};
use mirage_core::sim::SimProvider;
use mirage_core::skillstore::{
    ExecStep, ExecutionDraft, LinkDecision, Origin, SkillStore, StoreError, StoreFile, DEFAULT_MERGE_THRESHOLD,
};
use proptest::prelude::*;
use serde_json::json;

fn draft(goal: &str, steps: &[&str], tag: &str, origin: Origin) -> ExecutionDraft {
    ExecutionDraft {
        goal_text: goal.into(),
        steps: steps
            .iter()
            .enumerate()
            .map(|(i, s)| ExecStep {
                index: i as u32 + 1,
                observation_digest: format!("obs-{tag}-{i}"),
                layout_digest: format!("layout-{tag}-{i}"),
                step_goal: s.to_string(),
                action: Action::Wait,
                target: None,
            })
            .collect(),
        final_observation_digest: format!("obs-{tag}-end"),
        source_trajectory_id: format!("traj-{tag}"),
        trajectory_digest: format!("digest-{tag}"),
        origin,
    }
}

fn sim() -> Reasoner {
    Reasoner::new(Arc::new(SimProvider::default()))
}

const CONTACT_STEPS: [&str; 6] = [
    "open the contacts app",
    "tap the Add contact button",
    "tap the Name field",
    "type Ada",
    "tap the Phone field",
    "type 5550101",
];

/// Nine metas, 46 cores and 106 execution skills, built without a model.
fn sized_store() -> SkillStore {
    let mut s = SkillStore::default();
    let metas: Vec<_> = (0..9).map(|i| s.add_meta(&format!("Group{i}"), &format!("tasks of kind {i}")).unwrap()).collect();
    let execs: Vec<_> = (0..106)
        .map(|i| s.add_execution(draft(&format!("goal number {i}"), &["tap the OK button"], &i.to_string(), Origin::Offline)).unwrap())
        .collect();
    for c in 0..46 {
        let linked: Vec<_> = execs.iter().copied().skip(c).step_by(46).collect();
        s.add_core(&format!("skill_{c}"), vec![], &format!("does thing {c}"), vec!["tap the OK button".into()], &linked, &[metas[c % 9]])
            .unwrap();
    }
    s
}

#[test]
fn empty_store_retrieves_nothing() {
    let s = SkillStore::default();
    assert!(s.retrieve_meta_candidates("anything", 5).is_empty());
    assert!(s.retrieve_cores("anything", 5).is_empty());
    assert!(s.retrieve_executions("anything", 5).is_empty());
}

#[test]
fn identical_text_retrieves_itself_with_similarity_one() {
    let mut s = SkillStore::default();
    s.add_meta("Media", "play songs and record sound").unwrap();
    s.add_meta("Web", "browse sites and answer quizzes").unwrap();
    let got = s.retrieve_meta_candidates("Media play songs and record sound", 1);
    assert_eq!(got[0].0.name, "Media");
    assert!((got[0].1 - 1.0).abs() < 1e-9, "{}", got[0].1);
}

#[test]
fn core_skills_of_lists_members_and_rejects_unknown_meta() {
    let s = sized_store();
    let m0 = s.meta_by_name("Group0").unwrap().id;
    let names: Vec<_> = s.core_skills_of(m0).unwrap().into_iter().map(|c| c.name.clone()).collect();
    assert_eq!(names, ["skill_0", "skill_9", "skill_18", "skill_27", "skill_36", "skill_45"]);
    assert!(matches!(s.core_skills_of(mirage_core::skillstore::MetaId(9999)), Err(StoreError::UnknownMeta(_))));
}

#[test]
fn insertion_creates_then_attaches() {
    let r = sim();
    let mut s = SkillStore::default();
    let goal = "Create a contact named Ada whose number is 5550101.";
    let first = s.insert_execution_skill(draft(goal, &CONTACT_STEPS, "a", Origin::Offline), &r).unwrap();
    assert_eq!((first.meta_decision, first.core_decision), (LinkDecision::Created, LinkDecision::Created));
    assert_eq!(s.revision(), 1);
    let core = s.core(first.core_id).unwrap();
    assert_eq!(core.name, "add_contact");
    assert!(core.body.contains(&"type {name}".to_string()), "{:?}", core.body);

    let goal2 = "Create a contact named Bo whose number is 5550199.";
    let steps2: Vec<String> = CONTACT_STEPS.iter().map(|s| s.replace("Ada", "Bo").replace("5550101", "5550199")).collect();
    let steps2: Vec<&str> = steps2.iter().map(String::as_str).collect();
    let second = s.insert_execution_skill(draft(goal2, &steps2, "b", Origin::Online), &r).unwrap();
    assert_eq!((second.meta_decision, second.core_decision), (LinkDecision::Attached, LinkDecision::Attached));
    assert_eq!(second.core_id, first.core_id);
    assert_eq!(s.core(first.core_id).unwrap().execution_skill_ids.len(), 2);
    assert_eq!(s.counts(), (1, 1, 2));
    assert_eq!(s.revision(), 2);
}

#[test]
fn malformed_reply_leaves_store_untouched() {
    let scripted = ScriptedProvider::new(vec![ScriptedProvider::rule(
        Role::CoreSkillSynthesis,
        None,
        json!("{\"reason\": \"oops\", \"existing\": "),
    )])
    .unwrap()
    .with_fallback(Arc::new(SimProvider::default()));
    let r = Reasoner::new(Arc::new(scripted));
    let mut s = SkillStore::default();
    let before = s.digest();
    let err = s.insert_execution_skill(draft("Create a contact named Ada whose number is 5550101.", &CONTACT_STEPS, "a", Origin::Offline), &r);
    assert!(matches!(err, Err(StoreError::Provider(_))), "{err:?}");
    assert_eq!(s.digest(), before);
    assert_eq!(s.revision(), 0);
}

#[test]
fn near_duplicate_cores_merge_into_one_survivor() {
    let mut s = SkillStore::default();
    let m = s.add_meta("Communication", "calls and messages").unwrap();
    let e1 = s.add_execution(draft("play a", &["tap the Browse button"], "1", Origin::Offline)).unwrap();
    let e2 = s.add_execution(draft("play b", &["tap the Library button"], "2", Origin::Online)).unwrap();
    let params = vec![ParamSpec { name: "song".into(), description: "title".into() }];
    let doc = "Play the song {song}.";
    s.add_core("play_music", params.clone(), doc, vec!["tap the Browse button".into()], &[e1], &[m]).unwrap();
    s.add_core("play_music_v2", params, doc, vec!["tap the Library button".into()], &[e2], &[m]).unwrap();
    let a = s.core_by_name("play_music").unwrap();
    let b = s.core_by_name("play_music_v2").unwrap();
    assert!(cosine(&a.embedding, &b.embedding) >= DEFAULT_MERGE_THRESHOLD);

    let report = s.merge_core_skills(DEFAULT_MERGE_THRESHOLD, &sim()).unwrap();
    assert_eq!(report.merged.len(), 1);
    assert_eq!(s.counts().1, 1);
    let survivor = s.core_skills().next().unwrap();
    assert_eq!(survivor.name, "play_music_v2");
    assert_eq!(survivor.execution_skill_ids.len(), 2);
    assert!(s.check_integrity().is_ok());
}

#[test]
fn merge_threshold_outside_unit_interval_is_rejected() {
    let mut s = sized_store();
    let before = s.digest();
    assert!(matches!(s.merge_core_skills(1.5, &sim()), Err(StoreError::BadThreshold(_))));
    assert!(matches!(s.merge_core_skills(0.0, &sim()), Err(StoreError::BadThreshold(_))));
    assert_eq!(s.digest(), before);
}

#[test]
fn round_trips_empty_and_populated_stores() {
    let dir = tempfile::tempdir().unwrap();
    for s in [SkillStore::default(), sized_store()] {
        let path = dir.path().join("store.json");
        s.save(&path).unwrap();
        let back = SkillStore::load(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.digest(), s.digest());
    }
    assert_eq!(sized_store().counts(), (9, 46, 106));
}

#[test]
fn dangling_execution_reference_is_named() {
    let s = sized_store();
    let mut file: StoreFile = s.to_file();
    let victim = file.execution_skills.remove(0).id;
    let err = SkillStore::from_file(file).unwrap_err();
    match err {
        StoreError::Integrity(msgs) => assert!(msgs.iter().any(|m| m.contains(&victim.to_string())), "{msgs:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_schema_version_is_refused() {
    let text = SkillStore::default().to_json().replace("\"schema_version\": 1", "\"schema_version\": 7");
    assert!(matches!(SkillStore::from_json(&text), Err(StoreError::SchemaVersion { found: 7, expected: 1 })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn top_k_matches_brute_force(goals in prop::collection::vec("[a-z]{1,6}( [a-z]{1,6}){0,3}", 1..20), query in "[a-z]{1,6}( [a-z]{1,6}){0,2}", k in 1usize..8) {
        let mut s = SkillStore::default();
        for (i, g) in goals.iter().enumerate() {
            s.add_execution(draft(g, &["wait"], &i.to_string(), Origin::Offline)).unwrap();
        }
        let got: Vec<_> = s.retrieve_executions(&query, k).into_iter().map(|(e, _)| e.id).collect();

        let emb = HashingEmbedder::default();
        let q = emb.embed(&query).unwrap();
        let mut brute: Vec<_> = s.execution_skills().map(|e| (e.id, cosine(&q, &emb.embed(&e.goal_text).unwrap()))).collect();
        brute.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let expect: Vec<_> = brute.into_iter().take(k).map(|(id, _)| id).collect();
        prop_assert_eq!(got, expect);
    }
}
