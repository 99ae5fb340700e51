use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SearchError;
use crate::agent::Trajectory;

/// Decides whether a successful trajectory may be learned from.
pub trait Approver {
    fn approve(&mut self, trajectory: &Trajectory) -> Result<bool, SearchError>;
}

/// Trusts the environment's verdict.
#[derive(Debug, Default, Clone, Copy)]
pub struct AutoApprover;

impl Approver for AutoApprover {
    fn approve(&mut self, trajectory: &Trajectory) -> Result<bool, SearchError> {
        Ok(trajectory.outcome.success)
    }
}

/// Shows the steps and asks a person.
pub struct InteractiveApprover<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> InteractiveApprover<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }
}

impl<R: BufRead, W: Write> Approver for InteractiveApprover<R, W> {
    fn approve(&mut self, t: &Trajectory) -> Result<bool, SearchError> {
        let io = |e: std::io::Error| SearchError::Io(e.to_string());
        writeln!(self.output, "task {}: {}", t.task_id, t.goal).map_err(io)?;
        for s in &t.steps {
            writeln!(self.output, "  {:>3}. {}", s.index + 1, s.step_goal.as_deref().unwrap_or(&s.description)).map_err(io)?;
        }
        for _ in 0..3 {
            write!(self.output, "keep this trajectory? [y/n] ").map_err(io)?;
            self.output.flush().map_err(io)?;
            let mut line = String::new();
            if self.input.read_line(&mut line).map_err(io)? == 0 {
                return Err(SearchError::InputClosed);
            }
            match line.trim().to_lowercase().as_str() {
                "y" | "yes" => return Ok(true),
                "n" | "no" => return Ok(false),
                _ => writeln!(self.output, "please answer y or n").map_err(io)?,
            }
        }
        Ok(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub task_id: String,
    pub trajectory: Trajectory,
    pub approved: bool,
}

/// Successful, approved trajectories waiting to be learned from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayBuffer {
    entries: Vec<BufferEntry>,
}

impl ReplayBuffer {
    /// Keeps the trajectory only if it succeeded and was approved.
    pub fn admit(&mut self, task_id: &str, trajectory: Trajectory, approved: bool) -> bool {
        if !(approved && trajectory.outcome.success) {
            return false;
        }
        self.entries.push(BufferEntry { task_id: task_id.to_string(), trajectory, approved });
        true
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn drain(&mut self) -> Vec<BufferEntry> {
        std::mem::take(&mut self.entries)
    }

    /// Writes each entry as `<task_id>.jsonl` under `dir`.
    pub fn save_dir(entries: &[BufferEntry], dir: &Path) -> Result<(), SearchError> {
        let io = |e: std::io::Error| SearchError::Io(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(io)?;
        for e in entries {
            fs::write(dir.join(format!("{}.jsonl", e.task_id)), e.trajectory.to_jsonl()).map_err(io)?;
        }
        Ok(())
    }
}
