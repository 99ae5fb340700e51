//! Deterministic simulated GUI environment.
//!
//! Apps are declarative state machines; the environment owns a home
//! launcher screen, a back stack, keyboard focus and the typed state
//! variables that task checkpoints are evaluated against.

mod app;
mod env;
mod task;
mod types;

use thiserror::Error;

pub use app::{
    placeholders, render_template, AppMachine, ElementDef, ScreenDef, SideEffect, StateValue, StateVars,
    TransitionRule,
};
pub use env::{GuiEnv, TraceRecord, HOME_APP, HOME_SCREEN};
pub use task::{
    generate_composite_tasks, Checkpoint, CompositeTemplate, EpisodeOutcome, Predicate, TaskSpec, TerminalReason,
    DEFAULT_EPISODE_STEPS, DEFAULT_SUBGOAL_STEPS,
};
pub use types::{
    Action, ActionKind, Direction, Element, ElementRole, Observation, Point, Rect, StatusKind, SCREEN_HEIGHT,
    SCREEN_WIDTH,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("app '{app}' is invalid: {reason}")]
    InvalidApp { app: String, reason: String },
    #[error("task '{task}' references unregistered app '{app}'")]
    UnknownApp { task: String, app: String },
    #[error("app '{0}' is registered twice")]
    DuplicateApp(String),
    #[error("task '{task}' is invalid: {reason}")]
    InvalidTask { task: String, reason: String },
    #[error("template '{template}' uses unbound placeholder '{placeholder}'")]
    UnboundPlaceholder { template: String, placeholder: String },
    #[error("no episode is active; call reset first")]
    NotStarted,
    #[error("episode already ended ({0:?})")]
    Terminal(TerminalReason),
    #[error("malformed action: {0}")]
    MalformedAction(String),
}
