//! The shipped benchmark setup: a demonstration corpus, the store learned
//! from it, and a second store learned purely by exploration.

use std::path::Path;

use super::HarnessError;
use crate::agent::AgentConfig;
use crate::fixtures::apps;
use crate::guienv::{GuiEnv, TaskSpec};
use crate::induction::{bootstrap, generate_corpus, generate_exploration_tasks, induct_trajectories, write_corpus};
use crate::provider::Reasoner;
use crate::samcts::{explore, AutoApprover, ExplorationOutput, SearchConfig};
use crate::skillstore::{SkillStore, DEFAULT_MERGE_THRESHOLD};

pub const CORPUS_SEED: u64 = 3;
pub const EXPLORATION_TASKS: usize = 30;
pub const EXPLORATION_TASK_SEED: u64 = 1;
pub const EXPLORATION_SEED: u64 = 5;
pub const SUITE_SEED: u64 = 7;
pub const BENCH_SEED: u64 = 1;

pub struct FixtureStores {
    pub env: GuiEnv,
    /// Learned from the demonstration corpus only.
    pub offline: SkillStore,
    /// Learned by exploring from an empty store.
    pub online: SkillStore,
    /// The offline store plus everything exploration found, merged.
    pub combined: SkillStore,
    pub exploration_suite: Vec<TaskSpec>,
}

/// The seeded exploration task list used across the fixtures.
pub fn exploration_suite(env: &GuiEnv, reasoner: &Reasoner) -> Result<Vec<TaskSpec>, HarnessError> {
    generate_exploration_tasks(env, reasoner, EXPLORATION_TASKS, EXPLORATION_TASK_SEED, &[])
        .map_err(|e| HarnessError::Io(e.to_string()))
}

/// Writes the corpus to `corpus_dir` and builds all three stores.
pub fn build_fixture_stores(corpus_dir: &Path, reasoner: &Reasoner) -> Result<FixtureStores, HarnessError> {
    let fail = |e: String| HarnessError::Io(e);
    write_corpus(corpus_dir, &generate_corpus(crate::induction::DEFAULT_CORPUS_SIZE, CORPUS_SEED))
        .map_err(|e| fail(e.to_string()))?;
    let mut offline = SkillStore::default();
    bootstrap(corpus_dir, &mut offline, reasoner, None).map_err(|e| fail(e.to_string()))?;

    let env = GuiEnv::new(apps())?;
    let exploration_suite = exploration_suite(&env, reasoner)?;
    let mut online = SkillStore::default();
    let ExplorationOutput { approved, .. } = explore(
        &mut online,
        &exploration_suite,
        &env,
        reasoner,
        &AgentConfig::default(),
        &SearchConfig::default(),
        &mut AutoApprover,
        EXPLORATION_SEED,
    )
    .map_err(|e| fail(e.to_string()))?;

    let mut combined = offline.clone();
    induct_trajectories(approved.iter(), &mut combined, reasoner);
    combined.merge_core_skills(DEFAULT_MERGE_THRESHOLD, reasoner).map_err(|e| fail(e.to_string()))?;
    Ok(FixtureStores { env, offline, online, combined, exploration_suite })
}
