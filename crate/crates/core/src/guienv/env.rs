//! The environment engine.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::app::{AppMachine, ElementDef, ScreenDef, StateValue, StateVars};
use super::task::{EpisodeOutcome, TaskSpec, TerminalReason};
use super::types::{Action, ActionKind, Element, ElementRole, Observation, Rect, StatusKind};
use super::EnvError;
use crate::digest::json_digest;
use crate::seed::SeedSplitter;

pub const HOME_SCREEN: &str = "home";
pub const HOME_APP: &str = "launcher";

/// One JSONL trace line per executed step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step_index: u32,
    pub observation_digest: String,
    pub action: Action,
    pub state_var_digest: String,
    /// Set when the action had no effect for a recoverable reason.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
struct Episode {
    task: TaskSpec,
    vars: StateVars,
    screen: String,
    back: Vec<String>,
    focused: Option<String>,
    step_index: u32,
    terminal: TerminalReason,
    trace: Vec<TraceRecord>,
    satisfied: Vec<bool>,
    monotonicity_violations: u32,
}

/// A registry of apps plus at most one active episode.
///
/// Cloning is cheap for the registry and copies the episode state, so a
/// clone can explore without disturbing the original.
#[derive(Debug, Clone)]
pub struct GuiEnv {
    apps: Arc<BTreeMap<String, AppMachine>>,
    home: Arc<ScreenDef>,
    episode: Option<Episode>,
}

fn qualified(app: &str, screen: &str) -> String {
    format!("{app}/{screen}")
}

fn launcher_label(app: &str) -> String {
    let mut c = app.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl GuiEnv {
    pub fn new(apps: Vec<AppMachine>) -> Result<Self, EnvError> {
        let mut map = BTreeMap::new();
        for app in apps {
            app.validate()?;
            if map.contains_key(&app.app_name) {
                return Err(EnvError::DuplicateApp(app.app_name));
            }
            map.insert(app.app_name.clone(), app);
        }
        let home = Self::build_home(map.keys());
        Ok(Self { apps: Arc::new(map), home: Arc::new(home), episode: None })
    }

    /// Launcher grid: four columns of icons below a status strip.
    fn build_home<'a>(names: impl Iterator<Item = &'a String>) -> ScreenDef {
        let elements = names
            .enumerate()
            .map(|(i, name)| {
                let (col, row) = ((i % 4) as i32, (i / 4) as i32);
                let left = 40 + col * 250;
                let top = 300 + row * 320;
                ElementDef {
                    id: format!("launch_{name}"),
                    role: ElementRole::Button,
                    text: launcher_label(name),
                    bounds: Rect::new(left, top, left + 220, top + 260),
                    binds: None,
                }
            })
            .collect();
        ScreenDef { elements, transitions: Vec::new() }
    }

    pub fn app_names(&self) -> Vec<String> {
        self.apps.keys().cloned().collect()
    }

    pub fn app(&self, name: &str) -> Option<&AppMachine> {
        self.apps.get(name)
    }

    pub fn apps(&self) -> impl Iterator<Item = &AppMachine> {
        self.apps.values()
    }

    /// Starts an episode. All variables take their declared initial values,
    /// seeded lists receive a seed-dependent sample of pre-existing entries,
    /// then the task's overrides apply.
    pub fn reset(&mut self, task: &TaskSpec, seed: u64) -> Result<Observation, EnvError> {
        task.validate()?;
        if let Some(app) = task.apps_involved.iter().find(|a| !self.apps.contains_key(*a)) {
            return Err(EnvError::UnknownApp { task: task.task_id.clone(), app: app.clone() });
        }
        let seeds = SeedSplitter::new(seed);
        let mut vars = StateVars::new();
        for app in self.apps.values() {
            vars.extend(app.state_vars.clone());
            for (var, pool) in &app.seeded_lists {
                let mut rng = seeds.rng(&format!("seeded/{var}"));
                let n = rng.gen_range(0..=pool.len().min(3));
                let picked: Vec<String> = pool.choose_multiple(&mut rng, n).cloned().collect();
                if let Some(StateValue::List(l)) = vars.get_mut(var) {
                    l.extend(picked);
                }
            }
        }
        for (k, v) in &task.initial_state {
            vars.insert(k.clone(), v.clone());
        }
        let satisfied = task.checkpoints.iter().map(|c| c.predicate.holds(&vars)).collect();
        self.episode = Some(Episode {
            task: task.clone(),
            vars,
            screen: HOME_SCREEN.to_string(),
            back: Vec::new(),
            focused: None,
            step_index: 0,
            terminal: TerminalReason::Running,
            trace: Vec::new(),
            satisfied,
            monotonicity_violations: 0,
        });
        Ok(self.observe().expect("episode just started"))
    }

    fn screen_def<'a>(&'a self, screen: &str) -> Option<(&'a str, &'a ScreenDef)> {
        if screen == HOME_SCREEN {
            return Some((HOME_APP, &self.home));
        }
        let (app, local) = screen.split_once('/')?;
        let machine = self.apps.get(app)?;
        machine.screens.get(local).map(|s| (machine.app_name.as_str(), s))
    }

    pub fn observe(&self) -> Result<Observation, EnvError> {
        let ep = self.episode.as_ref().ok_or(EnvError::NotStarted)?;
        let (app, def) = self.screen_def(&ep.screen).expect("current screen always exists");
        let elements = def
            .elements
            .iter()
            .map(|e| Element { element_id: e.id.clone(), role: e.role, text: e.text.clone(), bounds: e.bounds })
            .collect();
        Ok(Observation::new(ep.step_index, ep.screen.clone(), app.to_string(), elements, ep.focused.clone()))
    }

    pub fn task(&self) -> Option<&TaskSpec> {
        self.episode.as_ref().map(|e| &e.task)
    }

    pub fn state_vars(&self) -> Option<&StateVars> {
        self.episode.as_ref().map(|e| &e.vars)
    }

    pub fn state_digest(&self) -> Option<String> {
        self.state_vars().map(json_digest)
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.episode.as_ref().map(|e| e.trace.as_slice()).unwrap_or(&[])
    }

    pub fn terminal_reason(&self) -> TerminalReason {
        self.episode.as_ref().map(|e| e.terminal).unwrap_or(TerminalReason::Running)
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal_reason() != TerminalReason::Running
    }

    /// Times a satisfied checkpoint later became unsatisfied.
    pub fn monotonicity_violations(&self) -> u32 {
        self.episode.as_ref().map(|e| e.monotonicity_violations).unwrap_or(0)
    }

    /// Ends the episode from the outside, e.g. after a provider failure.
    pub fn abort(&mut self) {
        if let Some(ep) = self.episode.as_mut() {
            if ep.terminal == TerminalReason::Running {
                ep.terminal = TerminalReason::EnvError;
            }
        }
    }

    pub fn step(&mut self, action: &Action) -> Result<Observation, EnvError> {
        if !action.is_well_formed() {
            return Err(EnvError::MalformedAction(format!("{action:?}")));
        }
        let terminal = self.episode.as_ref().ok_or(EnvError::NotStarted)?.terminal;
        if terminal != TerminalReason::Running {
            return Err(EnvError::Terminal(terminal));
        }
        let note = self.apply(action);
        let ep = self.episode.as_mut().expect("checked above");
        ep.step_index += 1;
        if ep.terminal == TerminalReason::Running && ep.step_index >= ep.task.max_steps {
            ep.terminal = TerminalReason::MaxSteps;
        }
        for (i, c) in ep.task.checkpoints.iter().enumerate() {
            let now = c.predicate.holds(&ep.vars);
            if ep.satisfied[i] && !now {
                ep.monotonicity_violations += 1;
                log::warn!("checkpoint '{}' of task '{}' regressed", c.name, ep.task.task_id);
            }
            ep.satisfied[i] = now;
        }
        let state_var_digest = json_digest(&ep.vars);
        let obs = self.observe()?;
        let ep = self.episode.as_mut().expect("checked above");
        ep.trace.push(TraceRecord {
            step_index: obs.step_index,
            observation_digest: obs.digest.clone(),
            action: action.clone(),
            state_var_digest,
            note,
        });
        Ok(obs)
    }

    fn go_to(ep: &mut Episode, target: String) {
        if target != ep.screen {
            let prev = std::mem::replace(&mut ep.screen, target);
            ep.back.push(prev);
            ep.focused = None;
        }
    }

    fn open_app(&mut self, name: &str) -> Option<String> {
        let Some(app) = self.apps.get(name) else {
            return Some(format!("no app named '{name}'"));
        };
        let target = qualified(name, &app.initial_screen);
        Self::go_to(self.episode.as_mut().expect("active"), target);
        None
    }

    /// Applies one action; returns a note when it was a recoverable no-op.
    fn apply(&mut self, action: &Action) -> Option<String> {
        let screen = self.episode.as_ref().expect("active").screen.clone();
        let (app_name, def) = {
            let (a, d) = self.screen_def(&screen).expect("current screen always exists");
            (a.to_string(), d.clone())
        };
        let ep = self.episode.as_mut().expect("active");
        let kind = action.kind();
        match action {
            Action::Status { status: StatusKind::Complete } => {
                ep.terminal = TerminalReason::StatusComplete;
                None
            }
            Action::Status { status: StatusKind::Infeasible } => {
                ep.terminal = TerminalReason::InfeasibleDeclared;
                None
            }
            Action::Status { status: StatusKind::InProgress } | Action::Answer { .. } | Action::Wait => None,
            Action::NavigateHome => {
                Self::go_to(ep, HOME_SCREEN.into());
                None
            }
            Action::NavigateBack => match ep.back.pop() {
                Some(prev) => {
                    ep.screen = prev;
                    ep.focused = None;
                    None
                }
                None => Some("nothing to go back to".into()),
            },
            Action::OpenApp { app_name } => self.open_app(app_name),
            Action::InputText { text } => {
                let bound = ep
                    .focused
                    .as_ref()
                    .and_then(|f| def.elements.iter().find(|e| &e.id == f))
                    .and_then(|e| e.binds.clone());
                match bound {
                    Some(var) => {
                        if let Some(StateValue::Text(t)) = ep.vars.get_mut(&var) {
                            t.push_str(text);
                        }
                        None
                    }
                    None => Some("text input without a focused text field".into()),
                }
            }
            Action::ClearText => {
                let bound = ep
                    .focused
                    .as_ref()
                    .and_then(|f| def.elements.iter().find(|e| &e.id == f))
                    .and_then(|e| e.binds.clone());
                match bound {
                    Some(var) => {
                        ep.vars.insert(var, StateValue::Text(String::new()));
                        None
                    }
                    None => Some("clear without a focused text field".into()),
                }
            }
            Action::Click { coord } | Action::DoubleTap { coord } | Action::LongPress { coord } => {
                let hit = def.elements.iter().rev().find(|e| e.bounds.contains(*coord)).cloned();
                let Some(el) = hit else {
                    return Some("no element at the touched point".into());
                };
                if app_name == HOME_APP {
                    if kind == ActionKind::Click {
                        let name = el.id.trim_start_matches("launch_").to_string();
                        return self.open_app(&name);
                    }
                    return None;
                }
                if kind == ActionKind::Click && el.role == ElementRole::TextField {
                    ep.focused = Some(el.id.clone());
                }
                Self::fire(ep, &app_name, &def, Some(&el.id), kind);
                None
            }
            Action::KeyboardEnter => {
                let focused = ep.focused.clone();
                if let Some(f) = focused.as_deref().filter(|f| def.rule(Some(f), kind).is_some()) {
                    Self::fire(ep, &app_name, &def, Some(f), kind);
                } else {
                    Self::fire(ep, &app_name, &def, None, kind);
                }
                None
            }
            Action::Scroll { .. } | Action::Swipe { .. } => {
                Self::fire(ep, &app_name, &def, None, kind);
                None
            }
        }
    }

    fn fire(ep: &mut Episode, app: &str, def: &ScreenDef, element: Option<&str>, kind: ActionKind) {
        let Some(rule) = def.rule(element, kind) else { return };
        for eff in &rule.effects {
            eff.apply(&mut ep.vars);
        }
        if let Some(t) = &rule.target {
            Self::go_to(ep, qualified(app, t));
        }
    }

    /// Scores the current state against the episode's task.
    pub fn verify(&self) -> Result<EpisodeOutcome, EnvError> {
        let ep = self.episode.as_ref().ok_or(EnvError::NotStarted)?;
        let completed = ep.task.checkpoints.iter().filter(|c| c.predicate.holds(&ep.vars)).count();
        let total = ep.task.checkpoints.len();
        Ok(EpisodeOutcome {
            success: completed == total,
            checkpoints_completed: completed,
            checkpoints_total: total,
            steps_taken: ep.step_index,
            terminal_reason: ep.terminal,
        })
    }

    /// Number of checkpoints currently satisfied.
    pub fn checkpoints_satisfied(&self) -> usize {
        self.verify().map(|o| o.checkpoints_completed).unwrap_or(0)
    }
}
