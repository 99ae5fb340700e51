//! Episode records and their JSONL form: one `step` line per executed
//! action followed by a single `outcome` footer.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::guienv::{Action, EpisodeOutcome, Observation};

pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;

/// The reflector's judgement of one proposed action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionVerdict {
    pub caption: String,
    pub reason: String,
    pub state_change: String,
    pub score: i64,
    /// True when the provider failed and the action was let through.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fail_open: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubGoalKind {
    SkillCall { core_id: crate::skillstore::CoreId, name: String, args: Vec<String> },
    NaturalLanguage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubGoal {
    pub text: String,
    #[serde(flatten)]
    pub kind: SubGoalKind,
}

impl SubGoal {
    pub fn natural(text: impl Into<String>) -> Self {
        Self { text: text.into(), kind: SubGoalKind::NaturalLanguage }
    }

    pub fn is_skill_call(&self) -> bool {
        matches!(self.kind, SubGoalKind::SkillCall { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubGoalStatus {
    Completed,
    Failed,
    /// The episode ended before the sub-goal could finish.
    Interrupted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubGoalRecord {
    pub subgoal: SubGoal,
    /// Plain-language statement of what the sub-goal asks for.
    pub intent: String,
    pub status: SubGoalStatus,
    /// A skill call that could not be followed and was retried as plain language.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fell_back: bool,
    /// Executed steps `[first_step, end_step)` in the trajectory.
    pub first_step: usize,
    pub end_step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub index: u32,
    pub subgoal_index: usize,
    /// The screen the action was chosen on.
    pub observation: Observation,
    pub action: Action,
    pub description: String,
    pub summary: String,
    /// Body line being followed, for skill-call sub-goals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_goal: Option<String>,
    /// Label of the element the action was grounded to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<ReflectionVerdict>,
    #[serde(default)]
    pub regenerations: u32,
    /// Executed only because the regeneration budget ran out.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub goal: String,
    pub seed: u64,
    pub steps: Vec<TrajectoryStep>,
    pub subgoals: Vec<SubGoalRecord>,
    pub final_observation: Observation,
    pub outcome: EpisodeOutcome,
    /// Notable events: downgraded skill calls, fail-open reflections, errors.
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Step(TrajectoryStep),
    Outcome(Footer),
}

#[derive(Serialize, Deserialize)]
struct Footer {
    version: u32,
    task_id: String,
    goal: String,
    seed: u64,
    subgoals: Vec<SubGoalRecord>,
    final_observation: Observation,
    outcome: EpisodeOutcome,
    flags: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

impl Trajectory {
    /// The observation after step `i` was executed.
    pub fn observation_after(&self, i: usize) -> &Observation {
        self.steps.get(i + 1).map(|s| &s.observation).unwrap_or(&self.final_observation)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut out, &Line::Step(s.clone()))?;
            out.write_all(b"\n")?;
        }
        let footer = Footer {
            version: TRAJECTORY_FORMAT_VERSION,
            task_id: self.task_id.clone(),
            goal: self.goal.clone(),
            seed: self.seed,
            subgoals: self.subgoals.clone(),
            final_observation: self.final_observation.clone(),
            outcome: self.outcome.clone(),
            flags: self.flags.clone(),
        };
        serde_json::to_writer(&mut out, &Line::Outcome(footer))?;
        out.write_all(b"\n")
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, TrajectoryIoError> {
        let mut steps = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| TrajectoryIoError::Format { line: n + 1, message };
            match serde_json::from_str::<Line>(&line).map_err(|e| bad(e.to_string()))? {
                Line::Step(s) => steps.push(s),
                Line::Outcome(f) => {
                    if f.version != TRAJECTORY_FORMAT_VERSION {
                        return Err(bad(format!("unsupported trajectory format version {}", f.version)));
                    }
                    return Ok(Trajectory {
                        task_id: f.task_id,
                        goal: f.goal,
                        seed: f.seed,
                        steps,
                        subgoals: f.subgoals,
                        final_observation: f.final_observation,
                        outcome: f.outcome,
                        flags: f.flags,
                    });
                }
            }
        }
        Err(TrajectoryIoError::Format { line: 0, message: "missing outcome footer".into() })
    }
}
