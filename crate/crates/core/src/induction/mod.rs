//! Turning trajectories into skills: label each action with a step goal,
//! assemble an execution skill, and let the store abstract it into core
//! and meta skills.

mod corpus;

use std::collections::BTreeSet;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{generate_corpus, write_corpus, CORPUS_FAMILIES, DEFAULT_CORPUS_SIZE};

use crate::agent::{SubGoalStatus, Trajectory};
use crate::digest::json_digest;
use crate::fixtures::task_from_instruction;
use crate::guienv::{Action, ActionKind, GuiEnv, Observation, TaskSpec};
use crate::provider::prompts::{self, AppDescription, ScreenSummary, StepGoalContext, TaskGenContext};
use crate::provider::{ProviderError, Reasoner};
use crate::skillstore::{ExecStep, ExecutionDraft, LinkDecision, Origin, SkillStore, StoreError};

pub const DEFAULT_EXPLORATION_TASKS: usize = 30;

#[derive(Debug, Error)]
pub enum InductionError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("trajectory '{0}' has no actions to learn from")]
    Empty(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// A goal and the (observation, action) pairs that achieved it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrajectoryRecord {
    pub trajectory_id: String,
    pub goal: String,
    pub pairs: Vec<(Observation, Action)>,
    pub final_observation: Observation,
    pub source: Origin,
}

impl RawTrajectoryRecord {
    /// The whole trajectory, minus status reports.
    pub fn from_trajectory(t: &Trajectory, source: Origin) -> Self {
        Self::from_range(t, 0, t.steps.len(), &t.goal, t.task_id.clone(), source)
    }

    /// Steps `[start, end)` as a record with its own goal.
    pub fn from_range(t: &Trajectory, start: usize, end: usize, goal: &str, id: String, source: Origin) -> Self {
        let pairs = t.steps[start..end]
            .iter()
            .filter(|s| s.action.kind() != ActionKind::Status)
            .map(|s| (s.observation.clone(), s.action.clone()))
            .collect();
        let final_observation = if end == 0 { t.final_observation.clone() } else { t.observation_after(end - 1).clone() };
        Self { trajectory_id: id, goal: goal.to_string(), pairs, final_observation, source }
    }

    /// One record per completed sub-goal, each named by its intent.
    pub fn segments(t: &Trajectory, source: Origin) -> Vec<Self> {
        t.subgoals
            .iter()
            .enumerate()
            .filter(|(_, r)| r.status == SubGoalStatus::Completed && r.end_step > r.first_step)
            .map(|(i, r)| Self::from_range(t, r.first_step, r.end_step, &r.intent, format!("{}#{i}", t.task_id), source))
            .collect()
    }

    /// Content digest: the goal, each screen and action, and the final screen.
    pub fn digest(&self) -> String {
        let screens: Vec<(String, &Action)> = self.pairs.iter().map(|(o, a)| (o.screen_digest(), a)).collect();
        json_digest(&(&self.goal, screens, self.final_observation.screen_digest()))
    }

    fn observation_after(&self, i: usize) -> &Observation {
        self.pairs.get(i + 1).map(|p| &p.0).unwrap_or(&self.final_observation)
    }
}

/// Label of the element a coordinate action landed on.
fn touched(obs: &Observation, action: &Action) -> Option<String> {
    action.coord().and_then(|p| obs.hit_test(p)).map(|e| format!("{} {}", e.text, e.role.noun()))
}

/// Asks for one step goal per action. Any failure rejects the whole record.
pub fn label_step_goals(record: &RawTrajectoryRecord, reasoner: &Reasoner) -> Result<ExecutionDraft, InductionError> {
    if record.pairs.is_empty() {
        return Err(InductionError::Empty(record.trajectory_id.clone()));
    }
    let mut steps = Vec::with_capacity(record.pairs.len());
    for (i, (obs, action)) in record.pairs.iter().enumerate() {
        let target = touched(obs, action);
        let ctx = StepGoalContext {
            goal: record.goal.clone(),
            action: action.clone(),
            target: target.clone(),
            before: ScreenSummary::of(obs),
            after: ScreenSummary::of(record.observation_after(i)),
        };
        let reply = reasoner.step_goal(&prompts::step_goal(&ctx))?;
        steps.push(ExecStep {
            index: i as u32 + 1,
            observation_digest: obs.screen_digest(),
            layout_digest: obs.layout_digest(),
            step_goal: reply.description,
            action: action.clone(),
            target: action.coord().and_then(|p| obs.hit_test(p)).map(|e| e.text.clone()),
        });
    }
    Ok(ExecutionDraft {
        goal_text: record.goal.clone(),
        steps,
        final_observation_digest: record.final_observation.screen_digest(),
        source_trajectory_id: record.trajectory_id.clone(),
        trajectory_digest: record.digest(),
        origin: record.source,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InductionReport {
    pub processed: usize,
    pub execution_skills_created: usize,
    pub core_skills_created: usize,
    pub core_skills_attached: usize,
    pub meta_skills_created: usize,
    /// Records already in the store; their occurrence count went up instead.
    pub duplicates: usize,
    pub failures: Vec<String>,
}

impl InductionReport {
    pub fn absorb(&mut self, other: InductionReport) {
        self.processed += other.processed;
        self.execution_skills_created += other.execution_skills_created;
        self.core_skills_created += other.core_skills_created;
        self.core_skills_attached += other.core_skills_attached;
        self.meta_skills_created += other.meta_skills_created;
        self.duplicates += other.duplicates;
        self.failures.extend(other.failures);
    }
}

/// Labels and files one record. Failures leave the store as it was.
pub fn induct(record: &RawTrajectoryRecord, store: &mut SkillStore, reasoner: &Reasoner, report: &mut InductionReport) {
    report.processed += 1;
    if let Some(existing) = store.execution_by_trajectory(&record.digest()).map(|e| e.id) {
        store.note_occurrence(existing).expect("present");
        report.duplicates += 1;
        return;
    }
    let result = label_step_goals(record, reasoner)
        .map_err(|e| e.to_string())
        .and_then(|draft| store.insert_execution_skill(draft, reasoner).map_err(|e| e.to_string()));
    match result {
        Ok(r) => {
            report.execution_skills_created += 1;
            match r.core_decision {
                LinkDecision::Created => report.core_skills_created += 1,
                LinkDecision::Attached => report.core_skills_attached += 1,
            }
            if r.meta_decision == LinkDecision::Created {
                report.meta_skills_created += 1;
            }
        }
        Err(e) => {
            log::warn!("could not learn from {}: {e}", record.trajectory_id);
            report.failures.push(format!("{}: {e}", record.trajectory_id));
        }
    }
}

/// Trajectory files of a corpus directory, in file-name order.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, InductionError> {
    let io = |e: std::io::Error| InductionError::Io { path: dir.display().to_string(), message: e.to_string() };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

/// Learns from up to `limit` corpus trajectories. Unreadable files are
/// reported and skipped without counting toward the limit.
pub fn bootstrap(
    corpus_dir: &Path,
    store: &mut SkillStore,
    reasoner: &Reasoner,
    limit: Option<usize>,
) -> Result<InductionReport, InductionError> {
    let mut report = InductionReport::default();
    for path in corpus_files(corpus_dir)? {
        if limit.is_some_and(|l| report.processed >= l) {
            break;
        }
        let parsed = fs::File::open(&path)
            .map_err(|e| e.to_string())
            .and_then(|f| Trajectory::read_jsonl(BufReader::new(f)).map_err(|e| e.to_string()));
        match parsed {
            Ok(t) => induct(&RawTrajectoryRecord::from_trajectory(&t, Origin::Offline), store, reasoner, &mut report),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                report.failures.push(format!("{}: {e}", path.display()));
            }
        }
    }
    Ok(report)
}

/// Learns from approved exploration trajectories, one execution skill per
/// completed sub-goal. Each record succeeds or fails on its own.
pub fn induct_trajectories<'a>(
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
    store: &mut SkillStore,
    reasoner: &Reasoner,
) -> InductionReport {
    let mut report = InductionReport::default();
    for t in trajectories {
        for record in RawTrajectoryRecord::segments(t, Origin::Online) {
            induct(&record, store, reasoner, &mut report);
        }
    }
    report
}

/// Screens and control labels of every registered app.
pub fn describe_apps(env: &GuiEnv) -> Vec<AppDescription> {
    env.apps()
        .map(|app| AppDescription {
            name: app.app_name.clone(),
            screens: app
                .screens
                .iter()
                .map(|(id, s)| (id.clone(), s.elements.iter().map(|e| e.text.clone()).collect()))
                .collect(),
        })
        .collect()
}

/// Asks for `count` new task instructions and keeps those that turn into
/// runnable tasks on `env`. Unusable ones are asked for again once.
pub fn generate_exploration_tasks(
    env: &GuiEnv,
    reasoner: &Reasoner,
    count: usize,
    seed: u64,
    avoid: &[String],
) -> Result<Vec<TaskSpec>, InductionError> {
    let apps = describe_apps(env);
    let registered: BTreeSet<String> = env.app_names().into_iter().collect();
    let mut out: Vec<TaskSpec> = Vec::new();
    let mut seen: Vec<String> = avoid.to_vec();
    for round in 0..2u64 {
        let missing = count - out.len();
        if missing == 0 {
            break;
        }
        let ctx = TaskGenContext { apps: apps.clone(), count: missing, avoid: seen.clone(), seed: seed.wrapping_add(round) };
        let reply = reasoner.tasks(&prompts::tasks(&ctx))?;
        for text in reply.tasks {
            if out.len() == count || seen.contains(&text) {
                continue;
            }
            seen.push(text.clone());
            let id = format!("explore-{:03}", out.len());
            match task_from_instruction(&id, "generated", &text) {
                Some(t) if t.apps_involved.iter().all(|a| registered.contains(a)) => out.push(t),
                _ => log::warn!("dropping generated task that names no usable app: {text}"),
            }
        }
    }
    if out.len() < count {
        log::warn!("only {} of {count} generated tasks were usable", out.len());
    }
    Ok(out)
}
