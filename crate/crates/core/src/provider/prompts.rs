//! Prompt builders, one per role.
//!
//! Every user prompt ends with a machine-readable context block after
//! [`CONTEXT_MARKER`]. Remote models read the prose and the block alike;
//! the offline simulator reads only the block.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::schema::schema_hint;
use super::{ParamSpec, PromptRequest, Role};
use crate::guienv::{Action, ActionKind, ElementRole, Observation};
use crate::skillstore::Origin;

pub const CONTEXT_MARKER: &str = "Context (JSON):";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSummary {
    pub id: String,
    pub role: ElementRole,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenSummary {
    pub screen_id: String,
    pub app_name: String,
    pub digest: String,
    pub layout: String,
    pub elements: Vec<ElementSummary>,
    pub focused: Option<String>,
}

impl ScreenSummary {
    pub fn of(obs: &Observation) -> Self {
        Self {
            screen_id: obs.screen_id.clone(),
            app_name: obs.app_name.clone(),
            digest: obs.screen_digest(),
            layout: obs.layout_digest(),
            elements: obs
                .elements
                .iter()
                .map(|e| ElementSummary { id: e.element_id.clone(), role: e.role, text: e.text.clone() })
                .collect(),
            focused: obs.focused_element.clone(),
        }
    }

    fn describe(&self) -> String {
        let items: Vec<String> =
            self.elements.iter().map(|e| format!("{} \"{}\"", e.role.noun(), e.text)).collect();
        format!("screen {} of {}: {}", self.screen_id, self.app_name, items.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreSummary {
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub docstring: String,
    pub body: Vec<String>,
    /// Origins of the execution skills behind this core skill.
    #[serde(default)]
    pub origins: Vec<Origin>,
}

impl CoreSummary {
    fn signature(&self) -> String {
        let p: Vec<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
        format!("{}({}): {}", self.name, p.join(", "), self.docstring)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaSummary {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub cores: Vec<String>,
}

// ---- step-goal extraction -------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepGoalContext {
    pub goal: String,
    pub action: Action,
    /// Label and kind of the touched element, e.g. "Save button".
    pub target: Option<String>,
    pub before: ScreenSummary,
    pub after: ScreenSummary,
}

pub fn step_goal(ctx: &StepGoalContext) -> PromptRequest {
    let system = "You annotate recorded phone interactions. Given the screen before and after one \
                  action, state in a short imperative phrase what that action was meant to do \
                  (for example: open an app, tap a named control, type some text).";
    let user = format!(
        "Overall goal: {}\nAction taken: {:?}{}\nBefore: {}\nAfter: {}",
        ctx.goal,
        ctx.action.kind(),
        ctx.target.as_ref().map(|t| format!(" on {t}")).unwrap_or_default(),
        ctx.before.describe(),
        ctx.after.describe()
    );
    request(Role::StepGoalExtraction, system, user, ctx)
}

// ---- core skill synthesis and merging -------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CoreContext {
    /// Abstract one execution skill, reusing an existing function if one fits.
    Synthesize { goal: String, step_goals: Vec<String>, existing: Vec<CoreSummary> },
    /// Decide whether near-duplicate functions should become one, and which survives.
    Merge { candidates: Vec<CoreSummary> },
}

pub fn core_skill(ctx: &CoreContext) -> PromptRequest {
    let system = "You maintain a library of reusable phone-automation functions. Each function \
                  has a snake_case name, typed parameters, a one-sentence docstring and a body \
                  of step goals whose variable parts are written as {parameter}.";
    let user = match ctx {
        CoreContext::Synthesize { goal, step_goals, existing } => format!(
            "A finished task and its steps:\nGoal: {goal}\nSteps:\n- {}\n\nFunctions already in the library:\n{}\n\n\
             If one of them already captures this task in general form, name it in `existing`. \
             Otherwise write a new function in `new_skill` that generalizes the steps.",
            step_goals.join("\n- "),
            list_or_none(existing.iter().map(CoreSummary::signature))
        ),
        CoreContext::Merge { candidates } => format!(
            "These functions look nearly identical:\n{}\n\nIf they do the same job, put the name of \
             the one to keep in `existing`; if they should stay separate, leave both fields null.",
            list_or_none(candidates.iter().map(CoreSummary::signature))
        ),
    };
    request(Role::CoreSkillSynthesis, system, user, ctx)
}

// ---- meta classification ----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MetaContext {
    /// File a new execution skill under a category, or propose a new one.
    Classify { goal: String, step_goals: Vec<String>, existing: Vec<MetaSummary> },
    /// Choose the category whose functions best serve the task.
    Select { goal: String, candidates: Vec<MetaSummary> },
}

pub fn meta(ctx: &MetaContext) -> PromptRequest {
    let system = "You organize phone-automation functions into broad categories such as \
                  communication or device control. Answer with the category name exactly as listed.";
    let user = match ctx {
        MetaContext::Classify { goal, step_goals, existing } => format!(
            "Task: {goal}\nSteps: {}\n\nExisting categories:\n{}\n\nPick the category this task belongs to. \
             If none fits, answer \"New Skill\" and give the new category a name, a description and \
             the functions it combines.",
            step_goals.join("; "),
            list_or_none(existing.iter().map(|m| format!("{}: {}", m.name, m.description)))
        ),
        MetaContext::Select { goal, candidates } => format!(
            "Task: {goal}\n\nCandidate categories and their functions:\n{}\n\nPick the single category \
             most useful for completing the task.",
            list_or_none(candidates.iter().map(|m| format!("{}: {} [{}]", m.name, m.description, m.cores.join(", "))))
        ),
    };
    request(Role::MetaClassification, system, user, ctx)
}

// ---- planning -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PlanMode {
    /// The full ordered list of sub-goals for the task.
    Plan,
    /// `count` alternative candidates for the next sub-goal only.
    Propose { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanContext {
    pub goal: String,
    pub mode: PlanMode,
    /// Category whose functions are offered, when one was selected.
    pub category: Option<String>,
    pub cores: Vec<CoreSummary>,
    /// Sub-goals already achieved, oldest first.
    pub completed: Vec<String>,
    pub screen: Option<ScreenSummary>,
}

pub fn plan(ctx: &PlanContext) -> PromptRequest {
    let system = "You break phone tasks into sub-goals. A sub-goal is either a plain sentence or a \
                  call of an available function written as Category.function(\"arg\", ...). Prefer \
                  a function when one fits; never invent functions.";
    let funcs = match &ctx.category {
        Some(c) => list_or_none(ctx.cores.iter().map(|s| format!("{c}.{}", s.signature()))),
        None => list_or_none(ctx.cores.iter().map(CoreSummary::signature)),
    };
    let ask = match ctx.mode {
        PlanMode::Plan => "List every sub-goal needed, in order.".to_string(),
        PlanMode::Propose { count } => format!("Suggest {count} different candidates for the next sub-goal only."),
    };
    let user = format!(
        "Task: {}\nAvailable functions:\n{funcs}\nAlready done:\n{}\n{}\n\n{ask}",
        ctx.goal,
        list_or_none(ctx.completed.iter().cloned()),
        ctx.screen.as_ref().map(ScreenSummary::describe).unwrap_or_default()
    );
    request(Role::SubgoalPlanning, system, user, ctx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingContext {
    pub goal: String,
    pub completed: Vec<String>,
    pub candidates: Vec<String>,
}

pub fn ranking(ctx: &RankingContext) -> PromptRequest {
    let system = "You judge which next step moves a phone task forward the most. Return the \
                  candidate indices (0-based) from most to least useful; include every index once.";
    let numbered: Vec<String> = ctx.candidates.iter().enumerate().map(|(i, c)| format!("{i}. {c}")).collect();
    let user = format!(
        "Task: {}\nAlready done:\n{}\nCandidates:\n{}",
        ctx.goal,
        list_or_none(ctx.completed.iter().cloned()),
        numbered.join("\n")
    );
    request(Role::SubgoalRanking, system, user, ctx).with_expected_items(ctx.candidates.len())
}

// ---- reflection -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedAction {
    pub action: Action,
    pub description: String,
    /// Label of the element the action would touch.
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarStep {
    pub observation_digest: String,
    pub layout_digest: String,
    pub step_goal: String,
    pub action_type: ActionKind,
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub goal: String,
    pub steps: Vec<ExemplarStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionContext {
    pub goal: String,
    pub subgoal: String,
    pub screen: ScreenSummary,
    pub proposed: ProposedAction,
    pub history: Vec<String>,
    pub exemplars: Vec<Exemplar>,
    /// Previously rejected proposals for this step.
    pub rejected: Vec<String>,
}

pub fn reflection(ctx: &ReflectionContext) -> PromptRequest {
    let system = "You review a phone agent's next action before it runs. Describe the screen, \
                  predict how the action would change it, and score from 0 (harmful or useless) \
                  to 10 (clearly right) how well it serves the current sub-goal. Worked examples \
                  of similar tasks are included; use them to anticipate the outcome.";
    let examples: Vec<String> = ctx
        .exemplars
        .iter()
        .map(|e| {
            let steps: Vec<&str> = e.steps.iter().map(|s| s.step_goal.as_str()).collect();
            format!("{}: {}", e.goal, steps.join(" -> "))
        })
        .collect();
    let user = format!(
        "Task: {}\nSub-goal: {}\nHistory: {}\nCurrent {}\nProposed action: {} ({:?})\nExamples:\n{}{}",
        ctx.goal,
        ctx.subgoal,
        if ctx.history.is_empty() { "none".into() } else { ctx.history.join("; ") },
        ctx.screen.describe(),
        ctx.proposed.description,
        ctx.proposed.action.kind(),
        list_or_none(examples.into_iter()),
        if ctx.rejected.is_empty() { String::new() } else { format!("\nAlready rejected: {}", ctx.rejected.join("; ")) }
    );
    request(Role::Reflection, system, user, ctx)
}

// ---- action decision ----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgoalStyle {
    /// A single step goal from a function body; exactly one action.
    Step,
    /// A free-form sentence; act until it is done, then report completion.
    NaturalLanguage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionContext {
    pub goal: String,
    pub subgoal: String,
    pub style: SubgoalStyle,
    pub screen: ScreenSummary,
    /// Descriptions of actions already executed for this sub-goal.
    pub done: Vec<String>,
    /// Proposals the reviewer turned down at this step.
    pub rejected: Vec<String>,
}

pub fn action(ctx: &ActionContext) -> PromptRequest {
    let system = "You operate an Android phone one action at a time. Choose the next action for the \
                  current sub-goal and describe its target element by its visible label and kind \
                  (button, field, item, toggle). When the sub-goal is achieved, answer with a \
                  status action set to complete.";
    let user = format!(
        "Task: {}\nSub-goal: {}\nCurrent {}\nDone so far: {}{}",
        ctx.goal,
        ctx.subgoal,
        ctx.screen.describe(),
        if ctx.done.is_empty() { "nothing".into() } else { ctx.done.join("; ") },
        if ctx.rejected.is_empty() {
            String::new()
        } else {
            format!("\nThese proposals were judged wrong, choose differently: {}", ctx.rejected.join("; "))
        }
    );
    request(Role::ActionDecision, system, user, ctx)
}

// ---- task generation --------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppDescription {
    pub name: String,
    /// Visible labels per screen.
    pub screens: Vec<(String, Vec<String>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskGenContext {
    pub apps: Vec<AppDescription>,
    pub count: usize,
    /// Instructions to avoid repeating.
    pub avoid: Vec<String>,
    pub seed: u64,
}

pub fn tasks(ctx: &TaskGenContext) -> PromptRequest {
    let system = "You write practice tasks for a phone agent. Each task is one or two sentences, \
                  names the app(s) it uses, and can be completed with the screens described.";
    let apps: Vec<String> = ctx
        .apps
        .iter()
        .map(|a| {
            let screens: Vec<String> = a.screens.iter().map(|(s, l)| format!("{s} [{}]", l.join(", "))).collect();
            format!("{}: {}", a.name, screens.join("; "))
        })
        .collect();
    let user = format!("Apps:\n{}\n\nWrite {} distinct tasks.", apps.join("\n"), ctx.count);
    request(Role::TaskGeneration, system, user, ctx)
}

// ---- shared ---------------------------------------------------------------------------

fn list_or_none(items: impl Iterator<Item = String>) -> String {
    let v: Vec<String> = items.map(|s| format!("- {s}")).collect();
    if v.is_empty() {
        "(none)".into()
    } else {
        v.join("\n")
    }
}

fn request<T: Serialize>(role: Role, system: &str, user: String, ctx: &T) -> PromptRequest {
    let system = format!("{system}\n\nReply with one JSON object of this shape and nothing else:\n{}", schema_hint(role));
    let block = serde_json::to_string(ctx).expect("context serializes");
    PromptRequest::new(role, system, format!("{user}\n\n{CONTEXT_MARKER}\n{block}"))
}

/// Reads the context block back out of a user prompt. Trailing text after
/// the block (such as a retry notice) is ignored.
pub fn parse_context<T: DeserializeOwned>(user_text: &str) -> Option<T> {
    let start = user_text.find(CONTEXT_MARKER)? + CONTEXT_MARKER.len();
    let mut stream = serde_json::Deserializer::from_str(user_text[start..].trim_start()).into_iter::<T>();
    stream.next()?.ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_survives_retry_suffix() {
        let ctx = RankingContext { goal: "g".into(), completed: vec![], candidates: vec!["a".into(), "b".into()] };
        let req = ranking(&ctx);
        assert_eq!(req.expected_items, Some(2));
        let retried = format!("{}\n\nYour previous reply could not be parsed.", req.user_text);
        assert_eq!(parse_context::<RankingContext>(&retried), Some(ctx));
        assert!(req.system_text.contains("ranking"));
    }

    #[test]
    fn every_builder_sets_its_role() {
        let screen = ScreenSummary {
            screen_id: "home".into(),
            app_name: "launcher".into(),
            digest: "d".into(),
            layout: "l".into(),
            elements: vec![],
            focused: None,
        };
        let a = action(&ActionContext {
            goal: "g".into(),
            subgoal: "s".into(),
            style: SubgoalStyle::Step,
            screen: screen.clone(),
            done: vec![],
            rejected: vec![],
        });
        assert_eq!(a.role, Role::ActionDecision);
        let p = plan(&PlanContext {
            goal: "g".into(),
            mode: PlanMode::Plan,
            category: None,
            cores: vec![],
            completed: vec![],
            screen: Some(screen),
        });
        assert_eq!(p.role, Role::SubgoalPlanning);
        assert!(p.validate().is_ok());
    }
}
