use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::guienv::{placeholders, Action};
use crate::provider::{EmbeddingVector, ParamSpec};

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(ExecId, "E");
id_type!(CoreId, "C");
id_type!(MetaId, "M");

/// Where an execution skill's trajectory came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Offline,
    Online,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecStep {
    /// 1-based position in the skill.
    pub index: u32,
    pub observation_digest: String,
    /// Layout digest of the same screen; see [`crate::guienv::Observation::layout_digest`].
    pub layout_digest: String,
    pub step_goal: String,
    pub action: Action,
    /// Label of the element the action touched, when it touched one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionSkill {
    pub id: ExecId,
    pub goal_text: String,
    pub steps: Vec<ExecStep>,
    pub final_observation_digest: String,
    pub source_trajectory_id: String,
    /// Content digest of the source trajectory, used to skip re-ingestion.
    pub trajectory_digest: String,
    pub origin: Origin,
    /// How many times this exact trajectory has been ingested.
    #[serde(default = "one")]
    pub occurrences: u32,
    pub embedding: EmbeddingVector,
}

fn one() -> u32 {
    1
}

impl ExecutionSkill {
    pub fn check(&self) -> Result<(), String> {
        if self.steps.is_empty() {
            return Err(format!("{} has no steps", self.id));
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.index != i as u32 + 1 {
                return Err(format!("{} step indices are not contiguous from 1", self.id));
            }
            if s.step_goal.trim().is_empty() {
                return Err(format!("{} step {} has an empty step goal", self.id, s.index));
            }
        }
        Ok(())
    }

    pub fn step_goals(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.step_goal.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreSkill {
    pub id: CoreId,
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub docstring: String,
    /// Step-goal templates with `{param}` slots.
    pub body: Vec<String>,
    pub execution_skill_ids: BTreeSet<ExecId>,
    pub embedding: EmbeddingVector,
}

impl CoreSkill {
    pub fn embedded_text(name: &str, docstring: &str) -> String {
        format!("{} {}", name.replace('_', " "), docstring)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.execution_skill_ids.is_empty() {
            return Err(format!("core skill '{}' links no execution skill", self.name));
        }
        for line in &self.body {
            for p in placeholders(line) {
                if !self.params.iter().any(|q| q.name == p) {
                    return Err(format!("core skill '{}' uses undeclared parameter '{p}'", self.name));
                }
            }
        }
        Ok(())
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    /// Body with arguments substituted positionally.
    pub fn bind(&self, args: &[String]) -> Result<Vec<String>, String> {
        if args.len() != self.params.len() {
            return Err(format!("'{}' takes {} argument(s), got {}", self.name, self.params.len(), args.len()));
        }
        Ok(self.body.iter().map(|line| self.fill(line, args)).collect())
    }

    pub fn bind_docstring(&self, args: &[String]) -> String {
        self.fill(&self.docstring, args)
    }

    fn fill(&self, line: &str, args: &[String]) -> String {
        let mut out = line.to_string();
        for (p, a) in self.params.iter().zip(args) {
            out = out.replace(&format!("{{{}}}", p.name), a);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaSkill {
    pub id: MetaId,
    pub name: String,
    pub description: String,
    pub core_skill_ids: BTreeSet<CoreId>,
    pub embedding: EmbeddingVector,
}

impl MetaSkill {
    pub fn embedded_text(name: &str, description: &str) -> String {
        format!("{name} {description}")
    }
}

/// An execution skill before it receives an id and embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionDraft {
    pub goal_text: String,
    pub steps: Vec<ExecStep>,
    pub final_observation_digest: String,
    pub source_trajectory_id: String,
    pub trajectory_digest: String,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkDecision {
    Attached,
    Created,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionReport {
    pub execution_id: ExecId,
    pub meta_id: MetaId,
    pub core_id: CoreId,
    pub meta_decision: LinkDecision,
    pub core_decision: LinkDecision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedPair {
    pub survivor: CoreId,
    pub removed: CoreId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub merged: Vec<MergedPair>,
    pub declined: Vec<(CoreId, CoreId)>,
    /// Pairs skipped because the provider failed, with the reason.
    pub failures: Vec<(CoreId, CoreId, String)>,
}

impl MergeReport {
    pub fn is_empty(&self) -> bool {
        self.merged.is_empty() && self.declined.is_empty() && self.failures.is_empty()
    }
}
