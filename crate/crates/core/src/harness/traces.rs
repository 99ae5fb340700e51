//! Recomputes suite metrics from trace files alone, by replaying each
//! recorded action in a fresh environment.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use super::{metrics, HarnessError};
use crate::agent::Trajectory;
use crate::guienv::{EpisodeOutcome, GuiEnv, TaskSpec, TerminalReason};

#[derive(Debug, Clone, PartialEq)]
pub struct Recomputed {
    pub outcomes: Vec<(String, EpisodeOutcome)>,
    pub success_rate: f64,
    pub completion_rate: f64,
}

fn replay(task: &TaskSpec, trajectory: &Trajectory, env: &mut GuiEnv) -> Result<EpisodeOutcome, HarnessError> {
    env.reset(task, trajectory.seed)?;
    for step in &trajectory.steps {
        if env.is_terminal() {
            return Err(HarnessError::Trace(format!(
                "{}: step {} recorded after the episode ended",
                task.task_id, step.index
            )));
        }
        env.step(&step.action)?;
    }
    if trajectory.flags.iter().any(|f| f.starts_with("aborted")) {
        env.abort();
    }
    Ok(env.verify()?)
}

/// Reads `<dir>/<task_id>.jsonl` for every task. A task without a trace
/// counts as a failure with no checkpoints.
pub fn recompute(dir: &Path, suite: &[TaskSpec], env: &GuiEnv) -> Result<Recomputed, HarnessError> {
    let mut outcomes = Vec::with_capacity(suite.len());
    for task in suite {
        let path = dir.join(format!("{}.jsonl", task.task_id));
        let outcome = if path.exists() {
            let file = File::open(&path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
            let t = Trajectory::read_jsonl(BufReader::new(file))
                .map_err(|e| HarnessError::Trace(format!("{}: {e}", path.display())))?;
            replay(task, &t, &mut env.clone())?
        } else {
            EpisodeOutcome {
                success: false,
                checkpoints_completed: 0,
                checkpoints_total: task.checkpoints.len(),
                steps_taken: 0,
                terminal_reason: TerminalReason::EnvError,
            }
        };
        outcomes.push((task.task_id.clone(), outcome));
    }
    let (success_rate, completion_rate) = metrics(outcomes.iter().map(|(_, o)| o));
    Ok(Recomputed { outcomes, success_rate, completion_rate })
}
