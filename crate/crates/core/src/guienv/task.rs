//! Tasks, checkpoint predicates and composite task generation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::app::{placeholders, StateValue, StateVars};
use super::EnvError;
use crate::digest::json_digest;

/// Step budget for one sub-goal rollout.
pub const DEFAULT_SUBGOAL_STEPS: u32 = 30;
/// Step budget for a whole episode.
pub const DEFAULT_EPISODE_STEPS: u32 = 80;

/// A boolean condition over state variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    ListContains { var: String, value: String },
    Equals { var: String, value: StateValue },
    IntAtLeast { var: String, min: i64 },
    ListLenAtLeast { var: String, min: usize },
}

impl Predicate {
    pub fn var(&self) -> &str {
        match self {
            Predicate::ListContains { var, .. }
            | Predicate::Equals { var, .. }
            | Predicate::IntAtLeast { var, .. }
            | Predicate::ListLenAtLeast { var, .. } => var,
        }
    }

    /// Text comparisons ignore case and surrounding whitespace.
    pub fn holds(&self, vars: &StateVars) -> bool {
        let norm = |s: &str| s.trim().to_lowercase();
        match (self, vars.get(self.var())) {
            (Predicate::ListContains { value, .. }, Some(StateValue::List(l))) => {
                l.iter().any(|x| norm(x) == norm(value))
            }
            (Predicate::Equals { value: StateValue::Text(want), .. }, Some(StateValue::Text(have))) => {
                norm(want) == norm(have)
            }
            (Predicate::Equals { value, .. }, Some(have)) => value == have,
            (Predicate::IntAtLeast { min, .. }, Some(StateValue::Int(i))) => i >= min,
            (Predicate::ListLenAtLeast { min, .. }, Some(StateValue::List(l))) => l.len() >= *min,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub name: String,
    pub predicate: Predicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub template_name: String,
    pub instruction: String,
    pub apps_involved: Vec<String>,
    /// Success is the conjunction of all checkpoints, in order.
    pub checkpoints: Vec<Checkpoint>,
    #[serde(default = "default_episode_steps")]
    pub max_steps: u32,
    /// Overrides applied on top of the apps' declared initial values.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial_state: StateVars,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
}

fn default_episode_steps() -> u32 {
    DEFAULT_EPISODE_STEPS
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |reason: &str| Err(EnvError::InvalidTask { task: self.task_id.clone(), reason: reason.into() });
        if self.task_id.trim().is_empty() {
            return bad("empty task id");
        }
        if self.checkpoints.is_empty() {
            return bad("a task needs at least one checkpoint");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if self.apps_involved.is_empty() {
            return bad("no apps involved");
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        json_digest(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    /// The episode has not ended yet.
    Running,
    StatusComplete,
    MaxSteps,
    InfeasibleDeclared,
    EnvError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub checkpoints_completed: usize,
    pub checkpoints_total: usize,
    pub steps_taken: u32,
    pub terminal_reason: TerminalReason,
}

impl EpisodeOutcome {
    pub fn completion_ratio(&self) -> f64 {
        if self.checkpoints_total == 0 {
            0.0
        } else {
            self.checkpoints_completed as f64 / self.checkpoints_total as f64
        }
    }
}

/// A parameterized multi-app task. Every string in the instruction,
/// checkpoints and initial state may use `{param}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositeTemplate {
    pub name: String,
    pub instruction: String,
    pub apps_involved: Vec<String>,
    pub checkpoints: Vec<Checkpoint>,
    #[serde(default = "default_episode_steps")]
    pub max_steps: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial_state: StateVars,
}

impl CompositeTemplate {
    /// Every placeholder used anywhere in the template, deduplicated.
    pub fn parameters(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut strings = vec![self.instruction.clone()];
        collect_strings(&serde_json::to_value(&self.checkpoints).expect("serializable"), &mut strings);
        collect_strings(&serde_json::to_value(&self.initial_state).expect("serializable"), &mut strings);
        for s in strings {
            for p in placeholders(&s) {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn instantiate(&self, task_id: String, row: &BTreeMap<String, String>) -> Result<TaskSpec, EnvError> {
        if let Some(p) = self.parameters().into_iter().find(|p| !row.contains_key(p)) {
            return Err(EnvError::UnboundPlaceholder { template: self.name.clone(), placeholder: p });
        }
        let fill = |s: &str| {
            let mut out = s.to_string();
            for (k, v) in row {
                out = out.replace(&format!("{{{k}}}"), v);
            }
            out
        };
        let subst = |v: Value| -> Value { map_strings(v, &fill) };
        let checkpoints: Vec<Checkpoint> =
            serde_json::from_value(subst(serde_json::to_value(&self.checkpoints).expect("serializable")))
                .expect("substitution preserves shape");
        let initial_state: StateVars =
            serde_json::from_value(subst(serde_json::to_value(&self.initial_state).expect("serializable")))
                .expect("substitution preserves shape");
        let task = TaskSpec {
            task_id,
            template_name: self.name.clone(),
            instruction: fill(&self.instruction),
            apps_involved: self.apps_involved.clone(),
            checkpoints,
            max_steps: self.max_steps,
            initial_state,
            params: row.clone(),
        };
        task.validate()?;
        Ok(task)
    }
}

fn collect_strings(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::String(s) => out.push(s.clone()),
        Value::Array(a) => a.iter().for_each(|x| collect_strings(x, out)),
        Value::Object(o) => o.iter().for_each(|(k, x)| {
            out.push(k.clone());
            collect_strings(x, out)
        }),
        _ => {}
    }
}

fn map_strings(v: Value, f: &dyn Fn(&str) -> String) -> Value {
    match v {
        Value::String(s) => Value::String(f(&s)),
        Value::Array(a) => Value::Array(a.into_iter().map(|x| map_strings(x, f)).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, x)| (f(&k), map_strings(x, f))).collect()),
        other => other,
    }
}

/// Expands each template once per binding row. Task ids combine the
/// template name, row index and a short seed tag, so they are unique
/// within a call and stable across calls with the same seed.
pub fn generate_composite_tasks(
    templates: &[CompositeTemplate],
    bindings: &BTreeMap<String, Vec<BTreeMap<String, String>>>,
    seed: u64,
) -> Result<Vec<TaskSpec>, EnvError> {
    let tag = &json_digest(&seed)[..6];
    let mut out = Vec::new();
    for t in templates {
        for (i, row) in bindings.get(&t.name).map(Vec::as_slice).unwrap_or(&[]).iter().enumerate() {
            out.push(t.instantiate(format!("{}-{i:03}-{tag}", t.name), row)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars() -> StateVars {
        let mut v = StateVars::new();
        v.insert("c.list".into(), StateValue::List(vec!["Ann|123".into()]));
        v.insert("s.wifi".into(), StateValue::Bool(true));
        v.insert("n.count".into(), StateValue::Int(2));
        v.insert("b.answer".into(), StateValue::Text(" Seven ".into()));
        v
    }

    #[test]
    fn predicates_evaluate_against_typed_vars() {
        let v = vars();
        assert!(Predicate::ListContains { var: "c.list".into(), value: "ann|123".into() }.holds(&v));
        assert!(!Predicate::ListContains { var: "c.list".into(), value: "Bob|1".into() }.holds(&v));
        assert!(Predicate::Equals { var: "s.wifi".into(), value: StateValue::Bool(true) }.holds(&v));
        assert!(Predicate::Equals { var: "b.answer".into(), value: StateValue::Text("seven".into()) }.holds(&v));
        assert!(Predicate::IntAtLeast { var: "n.count".into(), min: 2 }.holds(&v));
        assert!(!Predicate::IntAtLeast { var: "n.count".into(), min: 3 }.holds(&v));
        assert!(Predicate::ListLenAtLeast { var: "c.list".into(), min: 1 }.holds(&v));
        assert!(!Predicate::IntAtLeast { var: "missing".into(), min: 0 }.holds(&v));
        assert!(!Predicate::IntAtLeast { var: "s.wifi".into(), min: 0 }.holds(&v), "type mismatch is false");
    }

    fn template() -> CompositeTemplate {
        CompositeTemplate {
            name: "AddContactAndCall".into(),
            instruction: "Create a new contact for {name}. His number is {number}. Then call him.".into(),
            apps_involved: vec!["contacts".into()],
            checkpoints: vec![
                Checkpoint {
                    name: "contact".into(),
                    predicate: Predicate::ListContains { var: "contacts.list".into(), value: "{name}|{number}".into() },
                },
                Checkpoint {
                    name: "call".into(),
                    predicate: Predicate::ListContains { var: "contacts.calls".into(), value: "{number}".into() },
                },
            ],
            max_steps: 40,
            initial_state: StateVars::new(),
        }
    }

    fn row(name: &str, number: &str) -> BTreeMap<String, String> {
        [("name".to_string(), name.to_string()), ("number".to_string(), number.to_string())].into()
    }

    #[test]
    fn one_binding_row_yields_one_task_with_two_checkpoints() {
        let b = [("AddContactAndCall".to_string(), vec![row("Ann", "555")])].into();
        let tasks = generate_composite_tasks(&[template()], &b, 1).unwrap();
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].checkpoints.len(), 2);
        assert_eq!(tasks[0].instruction, "Create a new contact for Ann. His number is 555. Then call him.");
        assert_eq!(
            tasks[0].checkpoints[0].predicate,
            Predicate::ListContains { var: "contacts.list".into(), value: "Ann|555".into() }
        );
    }

    #[test]
    fn zero_rows_yield_nothing_and_missing_columns_are_errors() {
        assert!(generate_composite_tasks(&[template()], &BTreeMap::new(), 1).unwrap().is_empty());
        let mut partial = row("Ann", "555");
        partial.remove("number");
        let b = [("AddContactAndCall".to_string(), vec![partial])].into();
        match generate_composite_tasks(&[template()], &b, 1) {
            Err(EnvError::UnboundPlaceholder { placeholder, .. }) => assert_eq!(placeholder, "number"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ids_are_unique_and_seed_stable() {
        let b = [("AddContactAndCall".to_string(), vec![row("A", "1"), row("B", "2")])].into();
        let a = generate_composite_tasks(&[template()], &b, 7).unwrap();
        let again = generate_composite_tasks(&[template()], &b, 7).unwrap();
        assert_eq!(a, again);
        assert_ne!(a[0].task_id, a[1].task_id);
    }
}
