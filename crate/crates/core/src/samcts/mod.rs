//! Skill-augmented Monte Carlo tree search over sub-goals, and the
//! exploration loop that feeds successful searches back into the store.

mod buffer;
mod tree;

use std::f64::consts::SQRT_2;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use buffer::{Approver, AutoApprover, BufferEntry, InteractiveApprover, ReplayBuffer};
pub use tree::{ucb1, NodeId, SearchNode, SearchTree, Stored, SubGoalProposal, SubGoalRunRecord};

use crate::agent::{
    parse_subgoal, Agent, AgentConfig, AgentContext, AgentError, SubGoalKind, SubGoalRecord, SubGoalStatus, Trajectory,
    TrajectoryStep,
};
use crate::guienv::{Action, EnvError, GuiEnv, Observation, StatusKind, TaskSpec};
use crate::induction::{induct_trajectories, InductionReport};
use crate::provider::prompts::{self, PlanContext, PlanMode, RankingContext, ScreenSummary};
use crate::provider::{ProviderError, Reasoner};
use crate::seed::SeedSplitter;
use crate::skillstore::{LevelMask, MergeReport, SkillStore, StoreError, StoreView, DEFAULT_MERGE_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// One plan and one episode, no tree.
    Direct,
    /// Tree search over sub-goals the model proposes unaided.
    Mcts,
    /// Tree search over sub-goals proposed with the store's skills in view.
    SaMcts,
}

impl FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(SearchMode::Direct),
            "mcts" => Ok(SearchMode::Mcts),
            "sa-mcts" | "sa_mcts" => Ok(SearchMode::SaMcts),
            other => Err(format!("unknown search mode '{other}' (expected direct, mcts or sa-mcts)")),
        }
    }
}

impl std::fmt::Display for SearchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SearchMode::Direct => "direct",
            SearchMode::Mcts => "mcts",
            SearchMode::SaMcts => "sa-mcts",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub iterations: u32,
    /// Rollouts (and therefore at most this many expansions) per tree.
    pub depth: u32,
    pub branch: usize,
    pub c_exp: f64,
    pub mode: SearchMode,
    pub merge_threshold: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            iterations: 2,
            depth: 6,
            branch: 3,
            c_exp: SQRT_2,
            mode: SearchMode::SaMcts,
            merge_threshold: DEFAULT_MERGE_THRESHOLD,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.iterations == 0 || self.depth == 0 || self.branch == 0 {
            return Err("iterations, depth and branch must all be at least 1".into());
        }
        if !(self.c_exp > 0.0 && self.c_exp.is_finite()) {
            return Err(format!("exploration constant {} must be positive", self.c_exp));
        }
        if !(self.merge_threshold > 0.0 && self.merge_threshold <= 1.0) {
            return Err(format!("merge threshold {} must lie in (0, 1]", self.merge_threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("replaying node {node} of task {task} reached {found} instead of {expected}")]
    ReplayDivergence { task: String, node: NodeId, expected: String, found: String },
    #[error("the planner proposed no sub-goals")]
    NoProposals,
    #[error("approval input closed")]
    InputClosed,
    #[error("{0}")]
    Io(String),
}

impl SearchError {
    /// True when the failure came from the model provider.
    pub fn is_provider(&self) -> bool {
        matches!(self, SearchError::Provider(_) | SearchError::Agent(AgentError::Provider(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub proposals: Vec<SubGoalProposal>,
    /// The provider repeated itself, so fewer than S proposals remain.
    pub deduplicated: bool,
}

/// Asks for `branch` candidate next sub-goals and has the provider rank them.
pub fn expand(
    agent: &Agent<'_>,
    reasoner: &Reasoner,
    goal: &str,
    completed: &[String],
    screen: &Observation,
    branch: usize,
    mode: SearchMode,
) -> Result<Expansion, SearchError> {
    let (category, cores) = match mode {
        SearchMode::SaMcts => {
            let (_, category, cores) = agent.planning_skills(goal)?;
            (category, cores)
        }
        _ => (None, Vec::new()),
    };
    let ctx = PlanContext {
        goal: goal.to_string(),
        mode: PlanMode::Propose { count: branch },
        category,
        cores,
        completed: completed.to_vec(),
        screen: Some(ScreenSummary::of(screen)),
    };
    let reply = reasoner.plan(&prompts::plan(&ctx))?;
    let mut texts: Vec<String> = Vec::new();
    for t in reply.plans.into_iter().map(|t| t.trim().to_string()).filter(|t| !t.is_empty()) {
        if !texts.contains(&t) {
            texts.push(t);
        }
    }
    texts.truncate(branch);
    if texts.is_empty() {
        return Err(SearchError::NoProposals);
    }
    let deduplicated = texts.len() < branch;
    if deduplicated {
        log::warn!("only {} distinct sub-goal proposals for '{goal}'", texts.len());
    }
    let ranking = reasoner
        .ranking(&prompts::ranking(&RankingContext { goal: goal.to_string(), completed: completed.to_vec(), candidates: texts.clone() }))?
        .ranking;
    let n = texts.len();
    let mut rank_of = vec![0usize; n];
    let valid = ranking.len() == n && {
        let mut seen = vec![false; n];
        ranking.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
    };
    if valid {
        for (pos, &i) in ranking.iter().enumerate() {
            rank_of[i] = pos + 1;
        }
    } else {
        log::warn!("ranking {ranking:?} is not a permutation of {n} proposals; keeping proposal order");
        rank_of = (1..=n).collect();
    }
    let proposals = texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| {
            let source_core_skill = match mode {
                SearchMode::SaMcts => match parse_subgoal(&text, agent.view()).0.kind {
                    SubGoalKind::SkillCall { core_id, .. } => Some(core_id),
                    SubGoalKind::NaturalLanguage => None,
                },
                _ => None,
            };
            SubGoalProposal {
                text,
                source_core_skill,
                prior_rank: rank_of[i],
                estimated_value: (n - rank_of[i] + 1) as f64 / n as f64,
            }
        })
        .collect();
    Ok(Expansion { proposals, deduplicated })
}

/// The proposal with the highest estimated value; ties go to the better
/// rank, then the smaller text.
pub fn best_subgoal(proposals: &[SubGoalProposal]) -> Option<&SubGoalProposal> {
    proposals.iter().min_by(|a, b| {
        b.estimated_value
            .total_cmp(&a.estimated_value)
            .then(a.prior_rank.cmp(&b.prior_rank))
            .then(a.text.cmp(&b.text))
    })
}

/// One rollout, as written to the per-rollout trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub node: NodeId,
    pub parent: NodeId,
    pub subgoal: String,
    pub reward: u8,
    pub status: SubGoalStatus,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSearch {
    pub task_id: String,
    pub success: bool,
    pub expansions: u32,
    pub rollouts: Vec<RolloutRecord>,
    pub tree_digest: Option<String>,
    pub trajectory: Option<Trajectory>,
    pub deduplicated_expansions: u32,
}

struct Search<'a, 'b> {
    agent: &'b Agent<'a>,
    reasoner: &'b Reasoner,
    task: &'b TaskSpec,
    template: &'b GuiEnv,
    seed: u64,
    config: &'b SearchConfig,
    tree: SearchTree,
}

impl Search<'_, '_> {
    /// Replays `node`'s prefix from reset and checks the landing screen.
    fn restore(&self, node: NodeId) -> Result<GuiEnv, SearchError> {
        let mut env = self.template.clone();
        env.reset(self.task, self.seed)?;
        let n = self.tree.node(node);
        for a in &n.prefix {
            env.step(a)?;
        }
        let found = env.observe()?.digest;
        let expected = n.state_digest.clone().unwrap_or_default();
        if found != expected {
            return Err(SearchError::ReplayDivergence { task: self.task.task_id.clone(), node, expected, found });
        }
        Ok(env)
    }

    /// Root-first nodes below the root on the way to `node`.
    fn lineage(&self, node: NodeId) -> Vec<NodeId> {
        let mut p = self.tree.path_to_root(node);
        p.pop();
        p.reverse();
        p
    }

    fn completed(&self, node: NodeId) -> Vec<String> {
        self.lineage(node)
            .into_iter()
            .filter_map(|id| self.tree.node(id).stored.as_ref())
            .filter(|s| s.reward == 1)
            .map(|s| s.intent.clone())
            .collect()
    }

    fn context(&self, node: NodeId) -> AgentContext {
        let mut ctx = AgentContext { goal: self.task.instruction.clone(), ..Default::default() };
        for id in self.lineage(node) {
            if let Some(s) = &self.tree.node(id).stored {
                ctx.history.extend(s.run.steps.iter().map(|st| (st.action.clone(), st.summary.clone())));
            }
        }
        ctx
    }

    fn rollout(&mut self, node: NodeId) -> Result<RolloutRecord, SearchError> {
        let parent = self.tree.node(node).parent.expect("rollouts start below the root");
        let mut env = self.restore(parent)?;
        let before = env.checkpoints_satisfied();
        let (subgoal, _) = parse_subgoal(&self.tree.node(node).text, self.agent.view());
        let intent = self.agent.intent(&subgoal);
        let mut ctx = self.context(parent);
        let depth = self.lineage(parent).len();
        let run = self.agent.run_subgoal(&mut env, &self.task.instruction, &subgoal, depth, &mut ctx)?;
        let after = env.checkpoints_satisfied();
        let reward = u8::from(run.status == SubGoalStatus::Completed && after > before);
        let mut prefix = self.tree.node(parent).prefix.clone();
        prefix.extend(run.steps.iter().map(|s| s.action.clone()));
        let record = RolloutRecord {
            node,
            parent,
            subgoal: subgoal.text.clone(),
            reward,
            status: run.status,
            steps: run.steps.len(),
        };
        let n = self.tree.node_mut(node);
        n.prefix = prefix;
        n.state_digest = Some(env.observe()?.digest);
        n.stored = Some(Stored {
            subgoal,
            intent,
            run: run.into(),
            reward,
            terminal: env.is_terminal(),
            task_success: env.verify()?.success,
        });
        Ok(record)
    }

    /// The full trajectory along the path to a successful node.
    fn trajectory(&self, node: NodeId) -> Result<Trajectory, SearchError> {
        let mut steps: Vec<TrajectoryStep> = Vec::new();
        let mut subgoals = Vec::new();
        for id in self.lineage(node) {
            let s = self.tree.node(id).stored.as_ref().expect("path nodes were rolled out");
            let first_step = steps.len();
            steps.extend(s.run.steps.iter().cloned());
            subgoals.push(SubGoalRecord {
                subgoal: s.subgoal.clone(),
                intent: s.intent.clone(),
                status: s.run.status,
                fell_back: s.run.fell_back,
                first_step,
                end_step: steps.len(),
            });
        }
        let mut env = self.restore(node)?;
        if !env.is_terminal() {
            let obs = env.observe()?;
            let action = Action::Status { status: StatusKind::Complete };
            env.step(&action)?;
            steps.push(TrajectoryStep {
                index: obs.step_index,
                subgoal_index: subgoals.len(),
                observation: obs,
                action,
                description: "report the task as complete".into(),
                summary: "report the task as complete".into(),
                step_goal: None,
                target: None,
                reflection: None,
                regenerations: 0,
                forced: false,
            });
        }
        Ok(Trajectory {
            task_id: self.task.task_id.clone(),
            goal: self.task.instruction.clone(),
            seed: self.seed,
            steps,
            subgoals,
            final_observation: env.observe()?,
            outcome: env.verify()?,
            flags: Vec::new(),
        })
    }

    fn run(mut self) -> Result<TaskSearch, SearchError> {
        let mut env = self.template.clone();
        let first = env.reset(self.task, self.seed)?;
        self.tree.node_mut(SearchTree::ROOT).state_digest = Some(first.digest);
        let mut report = TaskSearch {
            task_id: self.task.task_id.clone(),
            success: false,
            expansions: 0,
            rollouts: Vec::new(),
            tree_digest: None,
            trajectory: None,
            deduplicated_expansions: 0,
        };
        for _ in 0..self.config.depth {
            let leaf = self.tree.select_leaf(self.config.c_exp);
            let target = if leaf != SearchTree::ROOT && self.tree.node(leaf).stored.is_none() {
                leaf
            } else {
                if let Some(s) = &self.tree.node(leaf).stored {
                    if s.terminal {
                        let r = f64::from(s.reward);
                        let path = self.tree.path_to_root(leaf);
                        self.tree.backpropagate(&path, r);
                        continue;
                    }
                }
                let env = self.restore(leaf)?;
                let obs = env.observe()?;
                let exp = expand(
                    self.agent,
                    self.reasoner,
                    &self.task.instruction,
                    &self.completed(leaf),
                    &obs,
                    self.config.branch,
                    self.config.mode,
                )?;
                report.expansions += 1;
                report.deduplicated_expansions += u32::from(exp.deduplicated);
                let best = best_subgoal(&exp.proposals).expect("non-empty").text.clone();
                for p in &exp.proposals {
                    self.tree.add_child(leaf, &p.text);
                }
                self.tree.node_mut(leaf).proposals = exp.proposals;
                self.tree.node(leaf).children[&best]
            };
            let record = self.rollout(target)?;
            let path = self.tree.path_to_root(target);
            self.tree.backpropagate(&path, f64::from(record.reward));
            report.rollouts.push(record);
            if self.tree.node(target).stored.as_ref().is_some_and(|s| s.task_success) {
                report.success = true;
                report.trajectory = Some(self.trajectory(target)?);
                break;
            }
        }
        if !report.success {
            // Without a success, report the path that earned the most reward.
            let best = (1..self.tree.len())
                .filter(|&id| self.tree.node(id).stored.is_some())
                .max_by_key(|&id| {
                    let earned: u32 = self
                        .lineage(id)
                        .iter()
                        .filter_map(|&n| self.tree.node(n).stored.as_ref())
                        .map(|s| u32::from(s.reward))
                        .sum();
                    (earned, std::cmp::Reverse(id))
                });
            if let Some(id) = best {
                report.trajectory = Some(self.trajectory(id)?);
            }
        }
        report.tree_digest = Some(self.tree.digest());
        Ok(report)
    }
}

/// Searches one task. Direct mode runs a single planned episode instead.
pub fn run_search(
    task: &TaskSpec,
    template: &GuiEnv,
    agent: &Agent<'_>,
    reasoner: &Reasoner,
    config: &SearchConfig,
    seed: u64,
) -> Result<TaskSearch, SearchError> {
    if config.mode == SearchMode::Direct {
        let mut env = template.clone();
        let t = agent.run_episode(task, &mut env, seed)?;
        if let Some(abort) = t.flags.iter().find(|f| f.starts_with("aborted")) {
            log::warn!("direct episode for {} ended early: {abort}", task.task_id);
        }
        return Ok(TaskSearch {
            task_id: task.task_id.clone(),
            success: t.outcome.success,
            expansions: 0,
            rollouts: Vec::new(),
            tree_digest: None,
            trajectory: Some(t),
            deduplicated_expansions: 0,
        });
    }
    Search { agent, reasoner, task, template, seed, config, tree: SearchTree::new() }.run()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: String,
    pub success: bool,
    pub approved: bool,
    pub expansions: u32,
    pub rollouts: usize,
    pub tree_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub index: u32,
    pub tasks: Vec<TaskSummary>,
    pub induction: InductionReport,
    pub merge: MergeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub mode: SearchMode,
    pub iterations: Vec<IterationReport>,
    /// Execution skills newly created from approved trajectories.
    pub skills_acquired: usize,
    pub expansions_total: u32,
    pub rollouts_total: usize,
    /// Set when a provider failure cut the run short.
    pub aborted: Option<String>,
}

/// Everything an exploration run produces besides the updated store.
pub struct ExplorationOutput {
    pub report: SearchReport,
    pub searches: Vec<TaskSearch>,
    pub approved: Vec<Trajectory>,
}

/// Runs every task of `suite` for `config.iterations` rounds. After each
/// round, approved successes are learned and near-duplicate core skills
/// merged, so later rounds can use what earlier ones found.
#[allow(clippy::too_many_arguments)]
pub fn explore(
    store: &mut SkillStore,
    suite: &[TaskSpec],
    template: &GuiEnv,
    reasoner: &Reasoner,
    agent_config: &AgentConfig,
    config: &SearchConfig,
    approver: &mut dyn Approver,
    seed: u64,
) -> Result<ExplorationOutput, SearchError> {
    config.validate().map_err(SearchError::Io)?;
    let seeds = SeedSplitter::new(seed);
    let mut report = SearchReport {
        mode: config.mode,
        iterations: Vec::new(),
        skills_acquired: 0,
        expansions_total: 0,
        rollouts_total: 0,
        aborted: None,
    };
    let mut searches = Vec::new();
    let mut approved_all = Vec::new();
    for i in 0..config.iterations {
        let mut buffer = ReplayBuffer::default();
        let mut tasks = Vec::new();
        {
            let mask = if config.mode == SearchMode::SaMcts { LevelMask::ALL } else { LevelMask::NONE };
            let agent = Agent::new(reasoner, StoreView::new(store, mask), agent_config);
            for task in suite {
                let task_seed = seeds.derive(&format!("explore/{i}/{}", task.task_id));
                let search = match run_search(task, template, &agent, reasoner, config, task_seed) {
                    Ok(s) => s,
                    Err(e) if e.is_provider() => {
                        log::error!("provider failure while exploring {}: {e}", task.task_id);
                        report.aborted = Some(e.to_string());
                        break;
                    }
                    Err(e) => return Err(e),
                };
                let mut approved = false;
                if let Some(t) = search.trajectory.as_ref().filter(|_| search.success) {
                    approved = approver.approve(t)?;
                    buffer.admit(&task.task_id, t.clone(), approved);
                }
                report.expansions_total += search.expansions;
                report.rollouts_total += search.rollouts.len();
                tasks.push(TaskSummary {
                    task_id: task.task_id.clone(),
                    success: search.success,
                    approved,
                    expansions: search.expansions,
                    rollouts: search.rollouts.len(),
                    tree_digest: search.tree_digest.clone(),
                });
                searches.push(search);
            }
        }
        let entries = buffer.drain();
        let induction = induct_trajectories(entries.iter().map(|e| &e.trajectory), store, reasoner);
        let merge = store.merge_core_skills(config.merge_threshold, reasoner)?;
        report.skills_acquired += induction.execution_skills_created;
        approved_all.extend(entries.into_iter().map(|e| e.trajectory));
        report.iterations.push(IterationReport { index: i, tasks, induction, merge });
        if report.aborted.is_some() {
            break;
        }
    }
    Ok(ExplorationOutput { report, searches, approved: approved_all })
}
