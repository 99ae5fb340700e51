use serde::{Deserialize, Serialize};

use crate::digest::json_digest;

/// Logical screen size, taken from the Pixel-class 1080×2400 portrait display.
pub const SCREEN_WIDTH: i32 = 1080;
pub const SCREEN_HEIGHT: i32 = 2400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn in_screen(&self) -> bool {
        (0..SCREEN_WIDTH).contains(&self.x) && (0..SCREEN_HEIGHT).contains(&self.y)
    }
}

/// Half-open integer rectangle `[left, right) × [top, bottom)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl Rect {
    pub fn new(left: i32, top: i32, right: i32, bottom: i32) -> Self {
        Self { left, top, right, bottom }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.left && p.x < self.right && p.y >= self.top && p.y < self.bottom
    }

    pub fn center(&self) -> Point {
        Point::new((self.left + self.right) / 2, (self.top + self.bottom) / 2)
    }

    pub fn is_valid(&self) -> bool {
        self.left < self.right
            && self.top < self.bottom
            && self.left >= 0
            && self.top >= 0
            && self.right <= SCREEN_WIDTH
            && self.bottom <= SCREEN_HEIGHT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum ElementRole {
    Button,
    TextField,
    ListItem,
    Toggle,
    Label,
}

impl ElementRole {
    /// The word a person would use for this kind of widget.
    pub fn noun(self) -> &'static str {
        match self {
            ElementRole::Button => "button",
            ElementRole::TextField => "field",
            ElementRole::ListItem => "item",
            ElementRole::Toggle => "toggle",
            ElementRole::Label => "label",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Element {
    pub element_id: String,
    pub role: ElementRole,
    pub text: String,
    pub bounds: Rect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub step_index: u32,
    pub screen_id: String,
    pub app_name: String,
    pub elements: Vec<Element>,
    pub focused_element: Option<String>,
    pub digest: String,
}

#[derive(Serialize)]
struct ObservationContent<'a> {
    step_index: Option<u32>,
    screen_id: &'a str,
    app_name: &'a str,
    elements: &'a [Element],
    focused_element: &'a Option<String>,
}

impl Observation {
    pub fn new(
        step_index: u32,
        screen_id: String,
        app_name: String,
        elements: Vec<Element>,
        focused_element: Option<String>,
    ) -> Self {
        let mut obs = Self { step_index, screen_id, app_name, elements, focused_element, digest: String::new() };
        obs.digest = obs.compute_digest();
        obs
    }

    pub fn compute_digest(&self) -> String {
        json_digest(&self.content(true))
    }

    /// Digest of what is on screen, ignoring the step counter. Two visits to
    /// the same screen in the same focus state share this digest.
    pub fn screen_digest(&self) -> String {
        json_digest(&self.content(false))
    }

    /// Digest of which screen this is, ignoring what data it currently
    /// shows: the screen, the app, and its controls with their captions.
    /// List items and labels change with the data and are reduced to their
    /// position in the layout.
    pub fn layout_digest(&self) -> String {
        let widgets: Vec<(&str, ElementRole, &str)> = self
            .elements
            .iter()
            .map(|e| {
                let caption = match e.role {
                    ElementRole::ListItem | ElementRole::Label => "",
                    _ => e.text.as_str(),
                };
                (e.element_id.as_str(), e.role, caption)
            })
            .collect();
        json_digest(&(&self.screen_id, &self.app_name, widgets))
    }

    fn content(&self, with_step: bool) -> ObservationContent<'_> {
        ObservationContent {
            step_index: with_step.then_some(self.step_index),
            screen_id: &self.screen_id,
            app_name: &self.app_name,
            elements: &self.elements,
            focused_element: &self.focused_element,
        }
    }

    /// Topmost element containing `p`; later elements are drawn above earlier ones.
    pub fn hit_test(&self, p: Point) -> Option<&Element> {
        self.elements.iter().rev().find(|e| e.bounds.contains(p))
    }

    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.element_id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusKind {
    InProgress,
    Complete,
    Infeasible,
}

/// The mobile action space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Click { coord: Point },
    DoubleTap { coord: Point },
    LongPress { coord: Point },
    InputText { text: String },
    NavigateHome,
    NavigateBack,
    Scroll { direction: Direction },
    Swipe { direction: Direction },
    OpenApp { app_name: String },
    Wait,
    KeyboardEnter,
    ClearText,
    Status { status: StatusKind },
    Answer { text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    DoubleTap,
    LongPress,
    InputText,
    NavigateHome,
    NavigateBack,
    Scroll,
    Swipe,
    OpenApp,
    Wait,
    KeyboardEnter,
    ClearText,
    Status,
    Answer,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Click { .. } => ActionKind::Click,
            Action::DoubleTap { .. } => ActionKind::DoubleTap,
            Action::LongPress { .. } => ActionKind::LongPress,
            Action::InputText { .. } => ActionKind::InputText,
            Action::NavigateHome => ActionKind::NavigateHome,
            Action::NavigateBack => ActionKind::NavigateBack,
            Action::Scroll { .. } => ActionKind::Scroll,
            Action::Swipe { .. } => ActionKind::Swipe,
            Action::OpenApp { .. } => ActionKind::OpenApp,
            Action::Wait => ActionKind::Wait,
            Action::KeyboardEnter => ActionKind::KeyboardEnter,
            Action::ClearText => ActionKind::ClearText,
            Action::Status { .. } => ActionKind::Status,
            Action::Answer { .. } => ActionKind::Answer,
        }
    }

    pub fn coord(&self) -> Option<Point> {
        match self {
            Action::Click { coord } | Action::DoubleTap { coord } | Action::LongPress { coord } => Some(*coord),
            _ => None,
        }
    }

    /// Actions that need a target element located on screen.
    pub fn needs_grounding(&self) -> bool {
        self.coord().is_some()
    }

    pub fn with_coord(&self, p: Point) -> Action {
        match self {
            Action::Click { .. } => Action::Click { coord: p },
            Action::DoubleTap { .. } => Action::DoubleTap { coord: p },
            Action::LongPress { .. } => Action::LongPress { coord: p },
            other => other.clone(),
        }
    }

    /// Checks the static part of the action-space contract.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Action::Click { coord } | Action::DoubleTap { coord } | Action::LongPress { coord } => coord.in_screen(),
            Action::OpenApp { app_name } => !app_name.trim().is_empty(),
            _ => true,
        }
    }
}
