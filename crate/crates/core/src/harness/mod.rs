//! Benchmark runner: executes a task suite under an ablation, computes
//! success and completion rates, and writes traces.

mod ablation;
pub mod fixture;
mod report;
mod traces;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ablation::{AblationSpec, PRESETS};
pub use report::{percent, report, report_table};
pub use traces::{recompute, Recomputed};

use crate::agent::{Agent, AgentConfig, Trajectory};
use crate::digest::json_digest;
use crate::guienv::{EnvError, EpisodeOutcome, GuiEnv, TaskSpec, TerminalReason};
use crate::provider::Reasoner;
use crate::samcts::{run_search, SearchConfig, SearchMode};
use crate::seed::SeedSplitter;
use crate::skillstore::{SkillStore, StoreView};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("the suite has no tasks")]
    EmptySuite,
    #[error("no ablation specs given")]
    NoSpecs,
    #[error("invalid task file {path}: {message}")]
    BadTask { path: String, message: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("{0}")]
    Io(String),
    #[error("bad trace: {0}")]
    Trace(String),
}

/// Loads every `*.json` task file in `dir`, in file-name order.
pub fn load_suite(dir: &Path) -> Result<Vec<TaskSpec>, HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", dir.display()));
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut tasks = Vec::with_capacity(files.len());
    for path in files {
        let bad = |message: String| HarnessError::BadTask { path: path.display().to_string(), message };
        let text = fs::read_to_string(&path).map_err(|e| bad(e.to_string()))?;
        let task: TaskSpec = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        task.validate().map_err(|e| bad(e.to_string()))?;
        tasks.push(task);
    }
    Ok(tasks)
}

/// Writes one `<task_id>.json` per task.
pub fn write_suite(dir: &Path, tasks: &[TaskSpec]) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    for t in tasks {
        let json = serde_json::to_string_pretty(t).expect("tasks serialize");
        fs::write(dir.join(format!("{}.json", t.task_id)), json + "\n").map_err(io)?;
    }
    Ok(())
}

/// Success rate and mean per-task completion fraction.
pub fn metrics<'a>(outcomes: impl Iterator<Item = &'a EpisodeOutcome>) -> (f64, f64) {
    let (mut n, mut ok, mut frac) = (0usize, 0usize, 0.0f64);
    for o in outcomes {
        n += 1;
        ok += usize::from(o.success);
        frac += o.completion_ratio();
    }
    if n == 0 {
        (0.0, 0.0)
    } else {
        (ok as f64 / n as f64, frac / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub outcome: EpisodeOutcome,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// What produced a result, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: SearchMode,
    pub ablation: AblationSpec,
    pub seed: u64,
    pub suite_digest: String,
    pub store_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub config: RunConfig,
    pub tasks: Vec<TaskResult>,
    pub success_rate: f64,
    pub completion_rate: f64,
    pub skills_acquired: usize,
    pub expansions_total: u32,
}

impl SuiteResult {
    pub fn digest(&self) -> String {
        json_digest(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize") + "\n"
    }
}

/// A finished run: the deterministic result plus everything that is not.
#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub result: SuiteResult,
    pub trajectories: Vec<Trajectory>,
    pub wallclock: Duration,
}

impl SuiteRun {
    /// Writes `<dir>/<task_id>.jsonl` for every task that produced a trace.
    pub fn write_traces(&self, dir: &Path) -> Result<(), HarnessError> {
        let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        for t in &self.trajectories {
            fs::write(dir.join(format!("{}.jsonl", t.task_id)), t.to_jsonl()).map_err(io)?;
        }
        Ok(())
    }
}

/// Shared inputs of a benchmark run.
#[derive(Clone, Copy)]
pub struct Bench<'a> {
    pub env: &'a GuiEnv,
    pub store: &'a SkillStore,
    pub reasoner: &'a Reasoner,
    pub agent: &'a AgentConfig,
    pub search: &'a SearchConfig,
}

/// Runs every task once, in suite order. A task that cannot even start is
/// recorded as a failure and the suite carries on.
pub fn run_suite(bench: Bench<'_>, suite: &[TaskSpec], ablation: &AblationSpec, seed: u64) -> Result<SuiteRun, HarnessError> {
    if suite.is_empty() {
        return Err(HarnessError::EmptySuite);
    }
    let started = Instant::now();
    let restricted;
    let store = if ablation.offline_skills && ablation.online_skills {
        bench.store
    } else {
        restricted = bench.store.restrict_to_origins(&ablation.origins());
        &restricted
    };
    let agent_config = AgentConfig { reflection: ablation.reflector, ..bench.agent.clone() };
    let search = SearchConfig { mode: ablation.mode, ..bench.search.clone() };
    let agent = Agent::new(bench.reasoner, StoreView::new(store, ablation.mask()), &agent_config);
    let seeds = SeedSplitter::new(seed);

    let mut tasks = Vec::with_capacity(suite.len());
    let mut trajectories = Vec::new();
    let mut expansions_total = 0;
    for task in suite {
        let task_seed = seeds.derive(&format!("task/{}", task.task_id));
        let failed = |e: String| TaskResult {
            task_id: task.task_id.clone(),
            outcome: EpisodeOutcome {
                success: false,
                checkpoints_completed: 0,
                checkpoints_total: task.checkpoints.len(),
                steps_taken: 0,
                terminal_reason: TerminalReason::EnvError,
            },
            flags: Vec::new(),
            error: Some(e),
        };
        match run_search(task, bench.env, &agent, bench.reasoner, &search, task_seed) {
            Ok(found) => {
                expansions_total += found.expansions;
                match found.trajectory {
                    Some(t) => {
                        tasks.push(TaskResult {
                            task_id: task.task_id.clone(),
                            outcome: t.outcome.clone(),
                            flags: t.flags.clone(),
                            error: None,
                        });
                        trajectories.push(t);
                    }
                    None => tasks.push(failed("search produced no trajectory".into())),
                }
            }
            Err(e) => {
                log::warn!("task {} failed to run: {e}", task.task_id);
                tasks.push(failed(e.to_string()));
            }
        }
    }
    let (success_rate, completion_rate) = metrics(tasks.iter().map(|t| &t.outcome));
    let result = SuiteResult {
        config: RunConfig {
            mode: ablation.mode,
            ablation: ablation.clone(),
            seed,
            suite_digest: json_digest(&suite),
            store_digest: bench.store.digest(),
        },
        tasks,
        success_rate,
        completion_rate,
        skills_acquired: 0,
        expansions_total,
    };
    Ok(SuiteRun { result, trajectories, wallclock: started.elapsed() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub spec: AblationSpec,
    pub result: Result<SuiteResult, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn success_rate(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.spec.name == name).and_then(|r| r.result.as_ref().ok()).map(|r| r.success_rate)
    }
}

/// Runs the suite once per spec. A failing cell is recorded in its row.
pub fn run_ablation_matrix(
    bench: Bench<'_>,
    suite: &[TaskSpec],
    specs: &[AblationSpec],
    seed: u64,
) -> Result<AblationTable, HarnessError> {
    if specs.is_empty() {
        return Err(HarnessError::NoSpecs);
    }
    let rows = specs
        .iter()
        .map(|spec| AblationRow {
            spec: spec.clone(),
            result: run_suite(bench, suite, spec, seed).map(|r| r.result).map_err(|e| e.to_string()),
        })
        .collect();
    Ok(AblationTable { rows })
}
