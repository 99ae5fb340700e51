mod common;

use std::io::Cursor;
use std::sync::Arc;

use mirage_core::agent::{Agent, AgentConfig};
use mirage_core::fixtures::apps;
use mirage_core::guienv::GuiEnv;
use mirage_core::provider::{Reasoner, Role, ScriptedProvider};
use mirage_core::samcts::{
    best_subgoal, expand, explore, run_search, Approver, AutoApprover, InteractiveApprover, ReplayBuffer, SearchConfig,
    SearchError, SearchMode, SubGoalProposal,
};
use mirage_core::skillstore::{LevelMask, SkillStore, StoreView};
use serde_json::json;

use common::{bootstrapped, sim, sim_provider, solver, task};

fn env() -> GuiEnv {
    GuiEnv::new(apps()).unwrap()
}

fn mcts(depth: u32) -> SearchConfig {
    SearchConfig { mode: SearchMode::Mcts, depth, ..SearchConfig::default() }
}

#[test]
fn modes_parse_from_their_cli_spellings() {
    assert_eq!("sa-mcts".parse::<SearchMode>().unwrap(), SearchMode::SaMcts);
    assert_eq!("mcts".parse::<SearchMode>().unwrap(), SearchMode::Mcts);
    assert_eq!("direct".parse::<SearchMode>().unwrap(), SearchMode::Direct);
    assert!("tree".parse::<SearchMode>().is_err());
    assert!(SearchConfig { branch: 0, ..SearchConfig::default() }.validate().is_err());
    assert!(SearchConfig { c_exp: -1.0, ..SearchConfig::default() }.validate().is_err());
}

#[test]
fn expansion_values_follow_the_ranking() {
    let r = sim();
    let store = SkillStore::default();
    let cfg = AgentConfig::default();
    let agent = Agent::new(&r, StoreView::full(&store), &cfg);
    let t = task("t", &["add_contact", "wifi_on"]);
    let mut e = env();
    let obs = e.reset(&t, 0).unwrap();
    let exp = expand(&agent, &r, &t.instruction, &[], &obs, 3, SearchMode::Mcts).unwrap();
    assert_eq!(exp.proposals.len(), 3);
    assert!(!exp.deduplicated);
    let mut ranks: Vec<usize> = exp.proposals.iter().map(|p| p.prior_rank).collect();
    ranks.sort();
    assert_eq!(ranks, vec![1, 2, 3]);
    for p in &exp.proposals {
        assert_eq!(p.estimated_value, (3 - p.prior_rank + 1) as f64 / 3.0);
        assert_eq!(p.source_core_skill, None);
    }
    assert_eq!(best_subgoal(&exp.proposals).unwrap().prior_rank, 1);
}

#[test]
fn repeated_proposals_are_collapsed() {
    let plan = ScriptedProvider::rule(Role::SubgoalPlanning, None, json!({"reason": "r", "plans": ["Turn Wi-Fi on.", "Turn Wi-Fi on.", "Open settings."]}));
    let r = Reasoner::new(Arc::new(ScriptedProvider::new(vec![plan]).unwrap().with_fallback(sim_provider())));
    let store = SkillStore::default();
    let cfg = AgentConfig::default();
    let agent = Agent::new(&r, StoreView::full(&store), &cfg);
    let t = task("t", &["wifi_on"]);
    let obs = env().reset(&t, 0).unwrap();
    let exp = expand(&agent, &r, &t.instruction, &[], &obs, 3, SearchMode::Mcts).unwrap();
    assert!(exp.deduplicated);
    let texts: Vec<&str> = exp.proposals.iter().map(|p| p.text.as_str()).collect();
    assert_eq!(texts, vec!["Turn Wi-Fi on.", "Open settings."]);
    assert!(exp.proposals.iter().all(|p| p.estimated_value > 0.0 && p.estimated_value <= 1.0));
}

#[test]
fn a_ranking_that_is_not_a_permutation_is_a_provider_error() {
    let rank = ScriptedProvider::rule(Role::SubgoalRanking, None, json!({"ranking": [0, 0, 1]}));
    let r = Reasoner::new(Arc::new(ScriptedProvider::new(vec![rank]).unwrap().with_fallback(sim_provider())));
    let store = SkillStore::default();
    let cfg = AgentConfig::default();
    let agent = Agent::new(&r, StoreView::full(&store), &cfg);
    let t = task("t", &["wifi_on", "take_photo"]);
    let obs = env().reset(&t, 0).unwrap();
    let err = expand(&agent, &r, &t.instruction, &[], &obs, 3, SearchMode::Mcts).unwrap_err();
    assert!(err.is_provider(), "{err}");
}

#[test]
fn best_subgoal_breaks_ties_by_rank_then_text() {
    let p = |text: &str, rank: usize, v: f64| SubGoalProposal {
        text: text.into(),
        source_core_skill: None,
        prior_rank: rank,
        estimated_value: v,
    };
    let ps = vec![p("b", 2, 0.5), p("a", 3, 0.5), p("c", 1, 0.4)];
    assert_eq!(best_subgoal(&ps).unwrap().text, "b");
    assert!(best_subgoal(&[]).is_none());
}

#[test]
fn skill_aware_expansion_proposes_skill_calls() {
    let r = sim();
    let store = bootstrapped(&r);
    let cfg = AgentConfig::default();
    let agent = Agent::new(&r, StoreView::full(&store), &cfg);
    let t = task("t", &["add_contact"]);
    let obs = env().reset(&t, 0).unwrap();
    let exp = expand(&agent, &r, &t.instruction, &[], &obs, 3, SearchMode::SaMcts).unwrap();
    let calls: Vec<_> = exp.proposals.iter().filter(|p| p.source_core_skill.is_some()).collect();
    assert_eq!(calls.len(), 1);
    assert_eq!(calls[0].prior_rank, 1);
}

#[test]
fn a_successful_search_replays_to_success() {
    let r = solver();
    let store = SkillStore::default();
    let cfg = AgentConfig::default();
    let agent = Agent::new(&r, StoreView::new(&store, LevelMask::NONE), &cfg);
    let t = task("t", &["wifi_off", "bluetooth_on", "take_photo"]);
    let found = run_search(&t, &env(), &agent, &r, &mcts(6), 3).unwrap();
    assert!(found.success);
    assert!(found.rollouts.len() <= 6);
    assert!(found.expansions as usize <= found.rollouts.len());
    let tr = found.trajectory.unwrap();
    let mut fresh = env();
    fresh.reset(&t, tr.seed).unwrap();
    for s in &tr.steps {
        fresh.step(&s.action).unwrap();
    }
    assert!(fresh.verify().unwrap().success);
    assert_eq!(fresh.verify().unwrap(), tr.outcome);
}

#[test]
fn a_failed_search_still_reports_its_best_path() {
    let r = sim();
    let store = SkillStore::default();
    let cfg = AgentConfig::default();
    let agent = Agent::new(&r, StoreView::new(&store, LevelMask::NONE), &cfg);
    let t = task("t", &["wifi_off", "send_sms"]);
    let found = run_search(&t, &env(), &agent, &r, &mcts(4), 3).unwrap();
    assert!(!found.success);
    assert_eq!(found.rollouts.len(), 4);
    let tr = found.trajectory.unwrap();
    assert!(!tr.outcome.success);
    assert!(tr.outcome.checkpoints_completed >= 1);
}

#[test]
fn searches_are_reproducible() {
    let r = sim();
    let store = bootstrapped(&r);
    let cfg = AgentConfig::default();
    let agent = Agent::new(&r, StoreView::full(&store), &cfg);
    let t = task("t", &["add_contact", "create_note", "play_music"]);
    let config = SearchConfig { mode: SearchMode::SaMcts, ..SearchConfig::default() };
    let a = run_search(&t, &env(), &agent, &r, &config, 8).unwrap();
    let b = run_search(&t, &env(), &agent, &r, &config, 8).unwrap();
    assert_eq!(a, b);
    assert!(a.tree_digest.is_some());
}

#[test]
fn direct_mode_runs_one_episode_without_a_tree() {
    let r = solver();
    let store = SkillStore::default();
    let cfg = AgentConfig::default();
    let agent = Agent::new(&r, StoreView::full(&store), &cfg);
    let t = task("t", &["wifi_on"]);
    let config = SearchConfig { mode: SearchMode::Direct, ..SearchConfig::default() };
    let found = run_search(&t, &env(), &agent, &r, &config, 1).unwrap();
    assert!(found.success);
    assert_eq!(found.expansions, 0);
    assert!(found.rollouts.is_empty());
    assert!(found.tree_digest.is_none());
}

#[test]
fn the_buffer_admits_only_approved_successes() {
    let r = solver();
    let store = SkillStore::default();
    let cfg = AgentConfig::default();
    let agent = Agent::new(&r, StoreView::full(&store), &cfg);
    let good = agent.run_episode(&task("g", &["wifi_on"]), &mut env(), 1).unwrap();
    let dead = Reasoner::new(Arc::new(ScriptedProvider::new(vec![]).unwrap()));
    let bad = Agent::new(&dead, StoreView::full(&store), &cfg).run_episode(&task("b", &["wifi_on"]), &mut env(), 1).unwrap();
    assert!(good.outcome.success && !bad.outcome.success);
    let mut buf = ReplayBuffer::default();
    assert!(!buf.admit("b", bad, true));
    assert!(!buf.admit("g", good.clone(), false));
    assert!(buf.admit("g", good, true));
    assert_eq!(buf.len(), 1);
    let drained = buf.drain();
    assert_eq!(drained.len(), 1);
    assert!(buf.is_empty());
    let dir = tempfile::tempdir().unwrap();
    ReplayBuffer::save_dir(&drained, dir.path()).unwrap();
    assert!(dir.path().join("g.jsonl").exists());
}

#[test]
fn interactive_approval_reads_answers_and_notices_closed_input() {
    let r = solver();
    let store = SkillStore::default();
    let cfg = AgentConfig::default();
    let t = Agent::new(&r, StoreView::full(&store), &cfg).run_episode(&task("g", &["wifi_on"]), &mut env(), 1).unwrap();
    let answer = |input: &str| {
        let mut out = Vec::new();
        let verdict = InteractiveApprover::new(Cursor::new(input.to_string()), &mut out).approve(&t);
        (verdict, String::from_utf8(out).unwrap())
    };
    assert!(answer("y\n").0.unwrap());
    assert!(!answer("no\n").0.unwrap());
    let (v, shown) = answer("maybe\nYES\n");
    assert!(v.unwrap());
    assert!(shown.contains("please answer y or n"));
    assert!(shown.contains(&t.goal));
    assert!(!answer("a\nb\nc\ny\n").0.unwrap());
    assert!(matches!(answer("").0, Err(SearchError::InputClosed)));
    assert!(AutoApprover.approve(&t).unwrap());
}

struct RejectAll;

impl Approver for RejectAll {
    fn approve(&mut self, _: &mirage_core::agent::Trajectory) -> Result<bool, SearchError> {
        Ok(false)
    }
}

#[test]
fn exploration_learns_only_what_was_approved() {
    let r = sim();
    let suite = vec![task("a", &["wifi_on", "add_contact"]), task("b", &["take_photo"]), task("c", &["create_note"])];
    let cfg = AgentConfig::default();
    let config = SearchConfig { iterations: 1, ..SearchConfig::default() };

    let mut store = SkillStore::default();
    let out = explore(&mut store, &suite, &env(), &r, &cfg, &config, &mut RejectAll, 2).unwrap();
    assert_eq!(out.report.skills_acquired, 0);
    assert_eq!(store.counts(), (0, 0, 0));
    assert!(out.approved.is_empty());

    let mut store = SkillStore::default();
    let out = explore(&mut store, &suite, &env(), &r, &cfg, &config, &mut AutoApprover, 2).unwrap();
    assert!(out.report.skills_acquired > 0);
    assert_eq!(store.counts().2, out.report.skills_acquired);
    assert!(store.execution_skills().all(|e| e.origin == mirage_core::skillstore::Origin::Online));
    let solved = out.report.iterations[0].tasks.iter().filter(|t| t.success).count();
    assert_eq!(out.approved.len(), solved);
}

#[test]
fn exploration_stops_cleanly_when_the_provider_dies() {
    let dead = Reasoner::new(Arc::new(ScriptedProvider::new(vec![]).unwrap()));
    let mut store = SkillStore::default();
    let suite = vec![task("a", &["wifi_on"])];
    let out = explore(&mut store, &suite, &env(), &dead, &AgentConfig::default(), &SearchConfig::default(), &mut AutoApprover, 1)
        .unwrap();
    assert!(out.report.aborted.is_some());
    assert_eq!(out.report.iterations.len(), 1);
    assert_eq!(out.report.skills_acquired, 0);
}
