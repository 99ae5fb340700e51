//! Declarative app state machines.

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::types::{ActionKind, ElementRole, Rect};
use super::EnvError;

/// A typed environment variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateValue {
    Bool(bool),
    Int(i64),
    Text(String),
    List(Vec<String>),
}

impl StateValue {
    pub fn cleared(&self) -> StateValue {
        match self {
            StateValue::Bool(_) => StateValue::Bool(false),
            StateValue::Int(_) => StateValue::Int(0),
            StateValue::Text(_) => StateValue::Text(String::new()),
            StateValue::List(_) => StateValue::List(Vec::new()),
        }
    }

    pub fn render(&self) -> String {
        match self {
            StateValue::Bool(b) => b.to_string(),
            StateValue::Int(i) => i.to_string(),
            StateValue::Text(t) => t.clone(),
            StateValue::List(l) => l.join(","),
        }
    }

    fn same_type(&self, other: &StateValue) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

pub type StateVars = BTreeMap<String, StateValue>;

/// A mutation applied when a transition fires. Every effect is a pure
/// function of the current variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SideEffect {
    Set { var: String, value: StateValue },
    Toggle { var: String },
    Increment { var: String, by: i64 },
    /// Appends a rendered `{var}` template to a list variable.
    Push { var: String, template: String },
    Clear { var: String },
}

impl SideEffect {
    pub fn target(&self) -> &str {
        match self {
            SideEffect::Set { var, .. }
            | SideEffect::Toggle { var }
            | SideEffect::Increment { var, .. }
            | SideEffect::Push { var, .. }
            | SideEffect::Clear { var } => var,
        }
    }

    pub fn apply(&self, vars: &mut StateVars) {
        match self {
            SideEffect::Set { var, value } => {
                vars.insert(var.clone(), value.clone());
            }
            SideEffect::Toggle { var } => {
                if let Some(StateValue::Bool(b)) = vars.get_mut(var) {
                    *b = !*b;
                }
            }
            SideEffect::Increment { var, by } => {
                if let Some(StateValue::Int(i)) = vars.get_mut(var) {
                    *i += by;
                }
            }
            SideEffect::Push { var, template } => {
                let rendered = render_template(template, vars);
                if let Some(StateValue::List(l)) = vars.get_mut(var) {
                    l.push(rendered);
                }
            }
            SideEffect::Clear { var } => {
                if let Some(v) = vars.get_mut(var) {
                    *v = v.cleared();
                }
            }
        }
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z0-9_.]+)\}").expect("static regex"))
}

/// Names referenced as `{name}` in a template.
pub fn placeholders(template: &str) -> Vec<String> {
    placeholder_re().captures_iter(template).map(|c| c[1].to_string()).collect()
}

/// Substitutes `{var}` with the rendered variable; unknown names stay verbatim.
pub fn render_template(template: &str, vars: &StateVars) -> String {
    placeholder_re()
        .replace_all(template, |c: &regex::Captures<'_>| match vars.get(&c[1]) {
            Some(v) => v.render(),
            None => c[0].to_string(),
        })
        .into_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementDef {
    pub id: String,
    pub role: ElementRole,
    pub text: String,
    pub bounds: Rect,
    /// Text variable that receives typed input while this field has focus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binds: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRule {
    /// `None` matches the action anywhere on the screen (enter, scroll, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<String>,
    pub action: ActionKind,
    /// Screen to move to; `None` stays on the current screen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<SideEffect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenDef {
    pub elements: Vec<ElementDef>,
    #[serde(default)]
    pub transitions: Vec<TransitionRule>,
}

impl ScreenDef {
    pub fn rule(&self, element: Option<&str>, kind: ActionKind) -> Option<&TransitionRule> {
        self.transitions.iter().find(|r| r.element.as_deref() == element && r.action == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppMachine {
    pub app_name: String,
    pub initial_screen: String,
    pub screens: BTreeMap<String, ScreenDef>,
    pub state_vars: StateVars,
    /// Per list variable, a pool from which reset draws pre-existing entries.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub seeded_lists: BTreeMap<String, Vec<String>>,
}

impl AppMachine {
    /// Structural validation run by the loader.
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidApp { app: self.app_name.clone(), reason: msg });
        if self.app_name.trim().is_empty() {
            return bad("empty app name".into());
        }
        if !self.screens.contains_key(&self.initial_screen) {
            return bad(format!("initial screen '{}' not defined", self.initial_screen));
        }
        for (sid, screen) in &self.screens {
            let mut ids = BTreeSet::new();
            for e in &screen.elements {
                if !ids.insert(e.id.as_str()) {
                    return bad(format!("duplicate element '{}' on screen '{sid}'", e.id));
                }
                if !e.bounds.is_valid() {
                    return bad(format!("element '{}' on '{sid}' has bounds outside the screen", e.id));
                }
                if let Some(var) = &e.binds {
                    if e.role != ElementRole::TextField {
                        return bad(format!("element '{}' binds a variable but is not a text field", e.id));
                    }
                    match self.state_vars.get(var) {
                        Some(StateValue::Text(_)) => {}
                        _ => return bad(format!("element '{}' binds unknown text variable '{var}'", e.id)),
                    }
                }
            }
            for rule in &screen.transitions {
                if let Some(el) = &rule.element {
                    if !ids.contains(el.as_str()) {
                        return bad(format!("rule on '{sid}' references missing element '{el}'"));
                    }
                }
                if let Some(t) = &rule.target {
                    if !self.screens.contains_key(t) {
                        return bad(format!("rule on '{sid}' targets missing screen '{t}'"));
                    }
                }
                for eff in &rule.effects {
                    let Some(current) = self.state_vars.get(eff.target()) else {
                        return bad(format!("effect on '{sid}' mutates undeclared variable '{}'", eff.target()));
                    };
                    let type_ok = match eff {
                        SideEffect::Set { value, .. } => value.same_type(current),
                        SideEffect::Toggle { .. } => matches!(current, StateValue::Bool(_)),
                        SideEffect::Increment { .. } => matches!(current, StateValue::Int(_)),
                        SideEffect::Push { template, .. } => {
                            if let Some(p) = placeholders(template).into_iter().find(|p| !self.state_vars.contains_key(p)) {
                                return bad(format!("template on '{sid}' references undeclared variable '{p}'"));
                            }
                            matches!(current, StateValue::List(_))
                        }
                        SideEffect::Clear { .. } => true,
                    };
                    if !type_ok {
                        return bad(format!("effect on '{sid}' has the wrong type for '{}'", eff.target()));
                    }
                }
            }
        }
        for var in self.seeded_lists.keys() {
            if !matches!(self.state_vars.get(var), Some(StateValue::List(_))) {
                return bad(format!("seeded list '{var}' is not a declared list variable"));
            }
        }
        Ok(())
    }
}
