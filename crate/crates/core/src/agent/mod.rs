//! The runtime loop: a planner that picks a meta skill and writes
//! sub-goals, an operator that turns sub-goals into grounded actions, and a
//! reflector that vetoes poor actions before they reach the environment.

mod ground;
mod trajectory;

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ground::{best_element, ground, match_score, DEFAULT_GROUNDING_THRESHOLD};
pub use trajectory::{
    ReflectionVerdict, SubGoal, SubGoalKind, SubGoalRecord, SubGoalStatus, Trajectory, TrajectoryIoError,
    TrajectoryStep, TRAJECTORY_FORMAT_VERSION,
};

use crate::guienv::{Action, EnvError, GuiEnv, Observation, StatusKind, TaskSpec, DEFAULT_SUBGOAL_STEPS};
use crate::provider::prompts::{
    self, ActionContext, Exemplar, ExemplarStep, MetaContext, PlanContext, PlanMode, ProposedAction,
    ReflectionContext, ScreenSummary, SubgoalStyle,
};
use crate::provider::{cosine, ProviderError, Reasoner};
use crate::skillstore::{ExecutionSkill, MetaId, StoreView, DEFAULT_K};

/// Chosen meta skill, its name, and the core skills offered to the planner.
pub type PlanningSkills = (Option<MetaId>, Option<String>, Vec<prompts::CoreSummary>);

/// Weight of redundancy against relevance when picking exemplars.
const MMR_PENALTY: f64 = 0.5;

/// Scores strictly below this send the action back for regeneration.
pub const REFLECTION_PASS: i64 = 5;
pub const DEFAULT_MAX_REGENERATIONS: u32 = 3;
pub const DEFAULT_EXEMPLARS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub k: usize,
    pub grounding_threshold: f64,
    pub reflection: bool,
    pub reflect_every: u32,
    pub max_regenerations: u32,
    pub subgoal_max_steps: u32,
    pub exemplars: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            grounding_threshold: DEFAULT_GROUNDING_THRESHOLD,
            reflection: true,
            reflect_every: 1,
            max_regenerations: DEFAULT_MAX_REGENERATIONS,
            subgoal_max_steps: DEFAULT_SUBGOAL_STEPS,
            exemplars: DEFAULT_EXEMPLARS,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 || self.reflect_every == 0 || self.subgoal_max_steps == 0 {
            return Err("k, reflect_every and subgoal_max_steps must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.grounding_threshold) {
            return Err(format!("grounding threshold {} must lie in [0, 1]", self.grounding_threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("the planner produced no sub-goals for '{0}'")]
    EmptyPlan(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub task_goal: String,
    pub selected_meta: Option<MetaId>,
    pub subgoals: Vec<SubGoal>,
    /// Skill calls that named a missing function or had the wrong arity.
    pub downgraded: Vec<String>,
}

/// Goal plus the executed (action, summary) pairs so far.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentContext {
    pub goal: String,
    pub history: Vec<(Action, String)>,
    pub current_subgoal_index: usize,
}

impl AgentContext {
    pub fn summaries(&self) -> Vec<String> {
        self.history.iter().map(|(_, s)| s.clone()).collect()
    }
}

fn call_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:(?P<cat>\w+)\.)?(?P<name>\w+)\((?P<args>.*)\)\s*$").expect("static"))
}

/// Reads `Category.function("a", "b")`. Arguments are JSON string literals.
pub fn parse_skill_call(text: &str) -> Option<(String, Vec<String>)> {
    let c = call_re().captures(text)?;
    let args = c["args"].trim();
    let args: Vec<String> = if args.is_empty() { Vec::new() } else { serde_json::from_str(&format!("[{args}]")).ok()? };
    Some((c["name"].to_string(), args))
}

/// Classifies planner output. Returns the sub-goal and whether a skill call
/// had to be downgraded to plain language.
pub fn parse_subgoal(text: &str, view: &StoreView<'_>) -> (SubGoal, bool) {
    let Some((name, args)) = parse_skill_call(text) else {
        return (SubGoal::natural(text), false);
    };
    match view.core_by_name(&name) {
        Some(core) if core.params.len() == args.len() => (
            SubGoal { text: text.to_string(), kind: SubGoalKind::SkillCall { core_id: core.id, name, args } },
            false,
        ),
        _ => (SubGoal::natural(text), true),
    }
}

/// What the operator settled on for one step.
#[derive(Debug, Clone)]
struct Candidate {
    action: Action,
    description: String,
    target: Option<String>,
    verdict: Option<ReflectionVerdict>,
}

enum Choice {
    Done,
    Execute { candidate: Candidate, regenerations: u32, forced: bool },
    Stuck,
}

/// Outcome of running one sub-goal against the live environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubGoalRun {
    pub status: SubGoalStatus,
    pub fell_back: bool,
    pub steps: Vec<TrajectoryStep>,
}

pub struct Agent<'a> {
    reasoner: &'a Reasoner,
    view: StoreView<'a>,
    config: &'a AgentConfig,
}

impl<'a> Agent<'a> {
    pub fn new(reasoner: &'a Reasoner, view: StoreView<'a>, config: &'a AgentConfig) -> Self {
        Self { reasoner, view, config }
    }

    pub fn view(&self) -> &StoreView<'a> {
        &self.view
    }

    /// Picks a meta skill (when the store has any) and asks for sub-goals
    /// written against its core skills.
    pub fn plan(&self, goal: &str, screen: Option<&Observation>) -> Result<Plan, AgentError> {
        let (selected_meta, category, cores) = self.planning_skills(goal)?;
        let ctx = PlanContext {
            goal: goal.to_string(),
            mode: PlanMode::Plan,
            category,
            cores,
            completed: Vec::new(),
            screen: screen.map(ScreenSummary::of),
        };
        let reply = self.reasoner.plan(&prompts::plan(&ctx))?;
        let mut plan = Plan { task_goal: goal.to_string(), selected_meta, subgoals: Vec::new(), downgraded: Vec::new() };
        for text in reply.plans.iter().filter(|t| !t.trim().is_empty()) {
            let (sg, downgraded) = parse_subgoal(text, &self.view);
            if downgraded {
                log::warn!("skill call '{text}' does not match a known core skill; treating it as plain language");
                plan.downgraded.push(text.clone());
            }
            plan.subgoals.push(sg);
        }
        if plan.subgoals.is_empty() {
            return Err(AgentError::EmptyPlan(goal.to_string()));
        }
        Ok(plan)
    }

    /// The meta skill and core skills offered to the planner for `goal`.
    pub fn planning_skills(
        &self,
        goal: &str,
    ) -> Result<PlanningSkills, AgentError> {
        let store = self.view.store();
        if self.view.uses_meta() {
            let candidates = self.view.retrieve_meta_candidates(goal, self.config.k);
            if candidates.is_empty() {
                return Ok((None, None, Vec::new()));
            }
            let summaries = candidates.iter().map(|(m, _)| store.meta_summary(m)).collect();
            let reply = self
                .reasoner
                .meta(&prompts::meta(&MetaContext::Select { goal: goal.to_string(), candidates: summaries }))?;
            let chosen = candidates.iter().map(|(m, _)| *m).find(|m| m.name == reply.category).unwrap_or(candidates[0].0);
            // The chosen category's skills come first. Tasks spanning several
            // categories also get the closest skills from elsewhere, so
            // picking a category never hides a skill that plain retrieval
            // would have offered.
            let mut cores = self.view.core_skills_of(chosen);
            for (c, _) in self.view.retrieve_cores(goal, self.config.k) {
                if !cores.iter().any(|have| have.id == c.id) {
                    cores.push(c);
                }
            }
            let cores = cores.into_iter().map(|c| store.core_summary(c)).collect();
            Ok((Some(chosen.id), Some(chosen.name.clone()), cores))
        } else if self.view.uses_core() {
            let cores = self.view.retrieve_cores(goal, self.config.k).into_iter().map(|(c, _)| store.core_summary(c)).collect();
            Ok((None, None, cores))
        } else {
            Ok((None, None, Vec::new()))
        }
    }

    /// Asks the operator for the next action on `obs`.
    pub fn decide_action(
        &self,
        goal: &str,
        subgoal: &str,
        style: SubgoalStyle,
        obs: &Observation,
        done: &[String],
        rejected: &[String],
    ) -> Result<(Action, String), AgentError> {
        let ctx = ActionContext {
            goal: goal.to_string(),
            subgoal: subgoal.to_string(),
            style,
            screen: ScreenSummary::of(obs),
            done: done.to_vec(),
            rejected: rejected.to_vec(),
        };
        let reply = self.reasoner.action(&prompts::action(&ctx))?;
        let action = reply
            .to_action()
            .map_err(|reason| ProviderError::Decode { role: crate::provider::Role::ActionDecision, reason, raw_attempts: vec![] })?;
        Ok((action, reply.description))
    }

    /// Worked examples for the reflector: the closest stored execution skills.
    pub fn exemplars(&self, goal: &str) -> Vec<Exemplar> {
        if self.config.exemplars == 0 {
            return Vec::new();
        }
        // Greedy maximal-marginal-relevance pick: each slot goes to the
        // execution most similar to the goal after subtracting its closeness
        // to what was already chosen, so near-duplicates don't crowd out
        // other parts of a composite instruction.
        let mut pool = self.view.retrieve_executions(goal, usize::MAX);
        let mut chosen: Vec<(&ExecutionSkill, f64)> = Vec::new();
        while chosen.len() < self.config.exemplars && !pool.is_empty() {
            let score = |(e, rel): &(&ExecutionSkill, f64)| {
                let redundancy =
                    chosen.iter().map(|(c, _)| cosine(&c.embedding, &e.embedding)).fold(0.0_f64, f64::max);
                rel - MMR_PENALTY * redundancy
            };
            let mut best = 0;
            for i in 1..pool.len() {
                // Strict comparison keeps the retrieval order on ties.
                if score(&pool[i]) > score(&pool[best]) {
                    best = i;
                }
            }
            chosen.push(pool.remove(best));
        }
        chosen
            .into_iter()
            .map(|(e, _)| Exemplar {
                goal: e.goal_text.clone(),
                steps: e
                    .steps
                    .iter()
                    .map(|s| ExemplarStep {
                        observation_digest: s.observation_digest.clone(),
                        layout_digest: s.layout_digest.clone(),
                        step_goal: s.step_goal.clone(),
                        action_type: s.action.kind(),
                        target: s.target.clone(),
                    })
                    .collect(),
            })
            .collect()
    }

    /// Scores a proposed action. Provider failures let the action through.
    #[allow(clippy::too_many_arguments)]
    pub fn reflect(
        &self,
        goal: &str,
        subgoal: &str,
        obs: &Observation,
        proposed: ProposedAction,
        context: &AgentContext,
        exemplars: &[Exemplar],
        rejected: &[String],
    ) -> ReflectionVerdict {
        let ctx = ReflectionContext {
            goal: goal.to_string(),
            subgoal: subgoal.to_string(),
            screen: ScreenSummary::of(obs),
            proposed,
            history: context.summaries(),
            exemplars: exemplars.to_vec(),
            rejected: rejected.to_vec(),
        };
        match self.reasoner.reflection(&prompts::reflection(&ctx)) {
            Ok(r) => ReflectionVerdict {
                caption: r.caption,
                reason: r.reason,
                state_change: r.state_change,
                score: r.score.clamp(0, 10),
                fail_open: false,
            },
            Err(e) => {
                log::warn!("reflection failed, letting the action through: {e}");
                ReflectionVerdict {
                    caption: String::new(),
                    reason: format!("reflector unavailable: {e}"),
                    state_change: String::new(),
                    score: REFLECTION_PASS,
                    fail_open: true,
                }
            }
        }
    }

    /// Proposes, grounds and reviews actions until one passes or the
    /// regeneration budget runs out.
    #[allow(clippy::too_many_arguments)]
    fn choose(
        &self,
        goal: &str,
        subgoal: &str,
        style: SubgoalStyle,
        obs: &Observation,
        done: &[String],
        context: &AgentContext,
        exemplars: &[Exemplar],
        step_index: u32,
    ) -> Result<Choice, AgentError> {
        let mut rejected: Vec<String> = Vec::new();
        let mut reviewed: Vec<Candidate> = Vec::new();
        let review = self.config.reflection && step_index.is_multiple_of(self.config.reflect_every);
        for attempt in 0..=self.config.max_regenerations {
            let (action, description) = match self.decide_action(goal, subgoal, style, obs, done, &rejected) {
                Ok(v) => v,
                Err(AgentError::Provider(e @ ProviderError::Decode { .. })) => {
                    log::warn!("unusable action proposal: {e}");
                    rejected.push(format!("unusable proposal: {e}"));
                    continue;
                }
                Err(e) => return Err(e),
            };
            if action == (Action::Status { status: StatusKind::Complete }) {
                return Ok(Choice::Done);
            }
            let (action, target) = if action.needs_grounding() {
                match best_element(&description, obs, self.config.grounding_threshold) {
                    Some((el, _)) => (action.with_coord(el.bounds.center()), Some(el.text.clone())),
                    None => {
                        log::debug!("could not locate '{description}' on {}", obs.screen_id);
                        rejected.push(description);
                        continue;
                    }
                }
            } else {
                (action, None)
            };
            let verdict = review.then(|| {
                let proposed = ProposedAction { action: action.clone(), description: description.clone(), target: target.clone() };
                self.reflect(goal, subgoal, obs, proposed, context, exemplars, &rejected)
            });
            let candidate = Candidate { action, description, target, verdict };
            if candidate.verdict.as_ref().is_none_or(|v| v.score >= REFLECTION_PASS) {
                return Ok(Choice::Execute { candidate, regenerations: attempt, forced: false });
            }
            rejected.push(candidate.description.clone());
            reviewed.push(candidate);
        }
        let best = reviewed.into_iter().enumerate().max_by(|(i, a), (j, b)| {
            let score = |c: &Candidate| c.verdict.as_ref().map_or(REFLECTION_PASS, |v| v.score);
            score(a).cmp(&score(b)).then(j.cmp(i))
        });
        Ok(match best {
            Some((_, candidate)) => {
                Choice::Execute { candidate, regenerations: self.config.max_regenerations, forced: true }
            }
            None => Choice::Stuck,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn execute(
        &self,
        env: &mut GuiEnv,
        obs: &Observation,
        candidate: Candidate,
        regenerations: u32,
        forced: bool,
        subgoal_index: usize,
        step_goal: Option<String>,
        context: &mut AgentContext,
    ) -> Result<TrajectoryStep, AgentError> {
        env.step(&candidate.action)?;
        context.history.push((candidate.action.clone(), candidate.description.clone()));
        Ok(TrajectoryStep {
            index: obs.step_index,
            subgoal_index,
            observation: obs.clone(),
            action: candidate.action,
            summary: candidate.description.clone(),
            description: candidate.description,
            step_goal,
            target: candidate.target,
            reflection: candidate.verdict,
            regenerations,
            forced,
        })
    }

    /// Plain-language form of a sub-goal: a skill call reads as its docstring.
    pub fn intent(&self, subgoal: &SubGoal) -> String {
        match &subgoal.kind {
            SubGoalKind::SkillCall { core_id, args, .. } => match self.view.store().core(*core_id) {
                Some(core) => core.bind_docstring(args),
                None => subgoal.text.clone(),
            },
            SubGoalKind::NaturalLanguage => subgoal.text.clone(),
        }
    }

    /// Runs one sub-goal from the environment's current state.
    pub fn run_subgoal(
        &self,
        env: &mut GuiEnv,
        goal: &str,
        subgoal: &SubGoal,
        subgoal_index: usize,
        context: &mut AgentContext,
    ) -> Result<SubGoalRun, AgentError> {
        // The reflector judges steps of this sub-goal, so look up worked
        // examples for it rather than for the whole instruction.
        let exemplars = if self.view.uses_execution() { self.exemplars(&self.intent(subgoal)) } else { Vec::new() };
        let mut run = SubGoalRun { status: SubGoalStatus::Completed, fell_back: false, steps: Vec::new() };
        context.current_subgoal_index = subgoal_index;

        let mut fallback_text = None;
        if let SubGoalKind::SkillCall { core_id, args, .. } = &subgoal.kind {
            let core = self.view.store().core(*core_id).expect("parsed against this store");
            let body = core.bind(args).unwrap_or_default();
            for line in &body {
                if env.is_terminal() {
                    run.status = SubGoalStatus::Interrupted;
                    return Ok(run);
                }
                let obs = env.observe()?;
                match self.choose(goal, line, SubgoalStyle::Step, &obs, &[], context, &exemplars, obs.step_index)? {
                    Choice::Done => {}
                    Choice::Execute { candidate, regenerations, forced } => {
                        let step = self.execute(env, &obs, candidate, regenerations, forced, subgoal_index, Some(line.clone()), context)?;
                        run.steps.push(step);
                    }
                    Choice::Stuck => {
                        log::info!("could not follow '{line}' of {}; retrying in plain language", core.name);
                        fallback_text = Some(core.bind_docstring(args));
                        break;
                    }
                }
            }
            match fallback_text {
                None => return Ok(run),
                Some(_) => run.fell_back = true,
            }
        }

        let text = fallback_text.unwrap_or_else(|| subgoal.text.clone());
        let mut done: Vec<String> = Vec::new();
        let mut taken = 0u32;
        loop {
            if env.is_terminal() {
                run.status = SubGoalStatus::Interrupted;
                return Ok(run);
            }
            if taken >= self.config.subgoal_max_steps {
                log::info!("sub-goal '{text}' ran out of steps");
                run.status = SubGoalStatus::Failed;
                return Ok(run);
            }
            let obs = env.observe()?;
            match self.choose(goal, &text, SubgoalStyle::NaturalLanguage, &obs, &done, context, &exemplars, obs.step_index)? {
                Choice::Done => return Ok(run),
                Choice::Execute { candidate, regenerations, forced } => {
                    let step = self.execute(env, &obs, candidate, regenerations, forced, subgoal_index, None, context)?;
                    done.push(step.description.clone());
                    run.steps.push(step);
                    taken += 1;
                }
                Choice::Stuck => {
                    log::info!("sub-goal '{text}' is stuck");
                    run.status = SubGoalStatus::Failed;
                    return Ok(run);
                }
            }
        }
    }

    /// Resets `env` for `task`, plans, runs every sub-goal and reports.
    pub fn run_episode(&self, task: &TaskSpec, env: &mut GuiEnv, seed: u64) -> Result<Trajectory, AgentError> {
        let first = env.reset(task, seed)?;
        let mut context = AgentContext { goal: task.instruction.clone(), ..Default::default() };
        let mut steps: Vec<TrajectoryStep> = Vec::new();
        let mut records: Vec<SubGoalRecord> = Vec::new();
        let mut flags: Vec<String> = Vec::new();

        let outcome = (|| -> Result<(), AgentError> {
            let plan = self.plan(&task.instruction, Some(&first))?;
            flags.extend(plan.downgraded.iter().map(|d| format!("downgraded: {d}")));
            for (i, sg) in plan.subgoals.iter().enumerate() {
                let first_step = steps.len();
                let run = self.run_subgoal(env, &task.instruction, sg, i, &mut context)?;
                steps.extend(run.steps);
                records.push(SubGoalRecord {
                    subgoal: sg.clone(),
                    intent: self.intent(sg),
                    status: run.status,
                    fell_back: run.fell_back,
                    first_step,
                    end_step: steps.len(),
                });
                if run.status == SubGoalStatus::Interrupted {
                    break;
                }
            }
            if !env.is_terminal() {
                let obs = env.observe()?;
                let done = Candidate {
                    action: Action::Status { status: StatusKind::Complete },
                    description: "report the task as complete".into(),
                    target: None,
                    verdict: None,
                };
                steps.push(self.execute(env, &obs, done, 0, false, records.len(), None, &mut context)?);
            }
            Ok(())
        })();
        if let Err(e) = outcome {
            log::warn!("episode {} aborted: {e}", task.task_id);
            flags.push(format!("aborted: {e}"));
            env.abort();
        }
        flags.extend(
            steps.iter().filter(|s| s.reflection.as_ref().is_some_and(|v| v.fail_open)).map(|s| format!("fail_open_reflection: step {}", s.index)),
        );
        Ok(Trajectory {
            task_id: task.task_id.clone(),
            goal: task.instruction.clone(),
            seed,
            steps,
            subgoals: records,
            final_observation: env.observe()?,
            outcome: env.verify()?,
            flags,
        })
    }
}
