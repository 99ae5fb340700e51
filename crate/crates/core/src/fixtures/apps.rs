//! The shipped app state machines.

use std::collections::BTreeMap;

use crate::guienv::{
    ActionKind, AppMachine, ElementDef, ElementRole, Rect, ScreenDef, SideEffect, StateValue, StateVars,
    TransitionRule,
};

/// Songs offered by the music app's library screen.
pub const SONGS: [&str; 4] = ["Sunrise", "Ocean Drive", "Blue Moon", "Night Train"];
/// Shapes offered by the drawing canvas.
pub const SHAPES: [&str; 3] = ["Circle", "Square", "Triangle"];

const ROW_TOP: i32 = 220;
const ROW_PITCH: i32 = 190;
const ROW_HEIGHT: i32 = 150;

/// Vertical single-column layout, one row per element.
#[derive(Default)]
struct ScreenBuilder {
    elements: Vec<ElementDef>,
    transitions: Vec<TransitionRule>,
}

impl ScreenBuilder {
    fn push(mut self, id: &str, role: ElementRole, text: &str, binds: Option<&str>) -> Self {
        let top = ROW_TOP + ROW_PITCH * self.elements.len() as i32;
        self.elements.push(ElementDef {
            id: id.into(),
            role,
            text: text.into(),
            bounds: Rect::new(60, top, 1020, top + ROW_HEIGHT),
            binds: binds.map(str::to_string),
        });
        self
    }

    fn label(self, id: &str, text: &str) -> Self {
        self.push(id, ElementRole::Label, text, None)
    }
    fn button(self, id: &str, text: &str) -> Self {
        self.push(id, ElementRole::Button, text, None)
    }
    fn item(self, id: &str, text: &str) -> Self {
        self.push(id, ElementRole::ListItem, text, None)
    }
    fn toggle(self, id: &str, text: &str) -> Self {
        self.push(id, ElementRole::Toggle, text, None)
    }
    fn field(self, id: &str, text: &str, var: &str) -> Self {
        self.push(id, ElementRole::TextField, text, Some(var))
    }

    /// Click on `element` moves to `target` (if any) with `effects`.
    fn on_click(self, element: &str, target: Option<&str>, effects: Vec<SideEffect>) -> Self {
        self.on(Some(element), ActionKind::Click, target, effects)
    }

    fn on(mut self, element: Option<&str>, action: ActionKind, target: Option<&str>, effects: Vec<SideEffect>) -> Self {
        self.transitions.push(TransitionRule {
            element: element.map(str::to_string),
            action,
            target: target.map(str::to_string),
            effects,
        });
        self
    }

    fn build(self) -> ScreenDef {
        ScreenDef { elements: self.elements, transitions: self.transitions }
    }
}

fn set_text(var: &str, value: &str) -> SideEffect {
    SideEffect::Set { var: var.into(), value: StateValue::Text(value.into()) }
}
fn set_bool(var: &str, value: bool) -> SideEffect {
    SideEffect::Set { var: var.into(), value: StateValue::Bool(value) }
}
fn set_int(var: &str, value: i64) -> SideEffect {
    SideEffect::Set { var: var.into(), value: StateValue::Int(value) }
}
fn toggle(var: &str) -> SideEffect {
    SideEffect::Toggle { var: var.into() }
}
fn incr(var: &str) -> SideEffect {
    SideEffect::Increment { var: var.into(), by: 1 }
}
fn push(var: &str, template: &str) -> SideEffect {
    SideEffect::Push { var: var.into(), template: template.into() }
}
fn clear(var: &str) -> SideEffect {
    SideEffect::Clear { var: var.into() }
}

fn text() -> StateValue {
    StateValue::Text(String::new())
}
fn list() -> StateValue {
    StateValue::List(Vec::new())
}

fn machine(
    name: &str,
    screens: Vec<(&str, ScreenDef)>,
    vars: Vec<(&str, StateValue)>,
    seeded: Vec<(&str, Vec<&str>)>,
) -> AppMachine {
    AppMachine {
        app_name: name.into(),
        initial_screen: screens[0].0.into(),
        screens: screens.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        state_vars: vars.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<StateVars>(),
        seeded_lists: seeded
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.into_iter().map(str::to_string).collect()))
            .collect::<BTreeMap<_, _>>(),
    }
}

fn settings() -> AppMachine {
    let main = ScreenBuilder::default()
        .label("title", "Settings")
        .toggle("wifi", "Wi-Fi")
        .toggle("bluetooth", "Bluetooth")
        .button("display", "Display")
        .on_click("wifi", None, vec![toggle("settings.wifi")])
        .on_click("bluetooth", None, vec![toggle("settings.bluetooth")])
        .on_click("display", Some("display"), vec![]);
    let display = ScreenBuilder::default()
        .label("title", "Display")
        .button("max", "Max brightness")
        .button("dim", "Dim")
        .on_click("max", None, vec![set_int("settings.brightness", 100)])
        .on_click("dim", None, vec![set_int("settings.brightness", 20)]);
    machine(
        "settings",
        vec![("main", main.build()), ("display", display.build())],
        vec![
            ("settings.wifi", StateValue::Bool(false)),
            ("settings.bluetooth", StateValue::Bool(false)),
            ("settings.brightness", StateValue::Int(50)),
        ],
        vec![],
    )
}

fn clock() -> AppMachine {
    let main = ScreenBuilder::default()
        .label("title", "Clock")
        .button("alarm", "Alarm")
        .button("stopwatch", "Stopwatch")
        .on_click("stopwatch", Some("stopwatch"), vec![]);
    let sw = ScreenBuilder::default()
        .label("title", "Stopwatch")
        .button("start", "Start")
        .button("pause", "Pause")
        .button("lap", "Lap")
        .on_click("start", None, vec![incr("clock.starts"), set_bool("clock.running", true)])
        .on_click("pause", None, vec![incr("clock.pauses"), set_bool("clock.running", false)]);
    machine(
        "clock",
        vec![("main", main.build()), ("stopwatch", sw.build())],
        vec![
            ("clock.running", StateValue::Bool(false)),
            ("clock.starts", StateValue::Int(0)),
            ("clock.pauses", StateValue::Int(0)),
        ],
        vec![],
    )
}

fn camera() -> AppMachine {
    let main = ScreenBuilder::default()
        .label("title", "Camera")
        .button("shutter", "Shutter")
        .button("video", "Video")
        .on_click("shutter", None, vec![incr("camera.photos")])
        .on_click("video", Some("video"), vec![]);
    let video = ScreenBuilder::default()
        .label("title", "Video")
        .button("record", "Record")
        .button("photo", "Photo")
        .on_click("record", None, vec![incr("camera.videos")])
        .on_click("photo", Some("main"), vec![]);
    machine(
        "camera",
        vec![("main", main.build()), ("video", video.build())],
        vec![("camera.photos", StateValue::Int(0)), ("camera.videos", StateValue::Int(0))],
        vec![],
    )
}

fn contacts() -> AppMachine {
    let main = ScreenBuilder::default()
        .label("title", "Contacts")
        .button("add", "Add contact")
        .button("dialer", "Dialer")
        .on_click("add", Some("edit"), vec![])
        .on_click("dialer", Some("dialer"), vec![]);
    let edit = ScreenBuilder::default()
        .field("name", "Name", "contacts.name_input")
        .field("phone", "Phone", "contacts.phone_input")
        .button("discard", "Discard")
        .button("save", "Save")
        .on_click("discard", Some("main"), vec![clear("contacts.name_input"), clear("contacts.phone_input")])
        .on_click(
            "save",
            Some("main"),
            vec![
                push("contacts.list", "{contacts.name_input}|{contacts.phone_input}"),
                clear("contacts.name_input"),
                clear("contacts.phone_input"),
            ],
        );
    let dialer = ScreenBuilder::default()
        .field("number", "Number", "contacts.dial_input")
        .button("cancel", "Cancel")
        .button("call", "Call")
        .on_click("cancel", Some("main"), vec![clear("contacts.dial_input")])
        .on_click("call", None, vec![push("contacts.calls", "{contacts.dial_input}"), clear("contacts.dial_input")]);
    machine(
        "contacts",
        vec![("main", main.build()), ("edit", edit.build()), ("dialer", dialer.build())],
        vec![
            ("contacts.name_input", text()),
            ("contacts.phone_input", text()),
            ("contacts.dial_input", text()),
            ("contacts.list", list()),
            ("contacts.calls", list()),
        ],
        vec![("contacts.list", vec!["Zoe Park|555-0199", "Max Bell|555-0142", "Ivy Stone|555-0177", "Leo Hart|555-0110"])],
    )
}

fn messenger() -> AppMachine {
    let main = ScreenBuilder::default()
        .label("title", "Messages")
        .button("new", "New message")
        .on_click("new", Some("compose"), vec![]);
    let compose = ScreenBuilder::default()
        .field("to", "Recipient", "messenger.to_input")
        .field("body", "Message", "messenger.body_input")
        .button("delete", "Delete draft")
        .button("send", "Send")
        .on_click("delete", Some("main"), vec![clear("messenger.to_input"), clear("messenger.body_input")])
        .on_click(
            "send",
            Some("main"),
            vec![
                push("messenger.sent", "{messenger.to_input}|{messenger.body_input}"),
                clear("messenger.to_input"),
                clear("messenger.body_input"),
            ],
        );
    machine(
        "messenger",
        vec![("main", main.build()), ("compose", compose.build())],
        vec![("messenger.to_input", text()), ("messenger.body_input", text()), ("messenger.sent", list())],
        vec![("messenger.sent", vec!["555-0199|see you soon", "555-0142|thanks"])],
    )
}

fn notes() -> AppMachine {
    let main = ScreenBuilder::default()
        .label("title", "Notes")
        .button("new_note", "New note")
        .button("new_folder", "New folder")
        .on_click("new_note", Some("editor"), vec![])
        .on_click("new_folder", Some("folder"), vec![]);
    let editor = ScreenBuilder::default()
        .field("title", "Title", "notes.title_input")
        .field("body", "Body", "notes.body_input")
        .button("save", "Save note")
        .on_click(
            "save",
            Some("main"),
            vec![
                push("notes.list", "{notes.title_input}|{notes.body_input}"),
                clear("notes.title_input"),
                clear("notes.body_input"),
            ],
        );
    let folder = ScreenBuilder::default()
        .field("name", "Folder name", "notes.folder_input")
        .button("create", "Create folder")
        .on_click("create", Some("main"), vec![push("notes.folders", "{notes.folder_input}"), clear("notes.folder_input")]);
    machine(
        "notes",
        vec![("main", main.build()), ("editor", editor.build()), ("folder", folder.build())],
        vec![
            ("notes.title_input", text()),
            ("notes.body_input", text()),
            ("notes.folder_input", text()),
            ("notes.list", list()),
            ("notes.folders", list()),
        ],
        vec![("notes.list", vec!["Todo|water plants", "Books|dune"]), ("notes.folders", vec!["Archive"])],
    )
}

fn calendar() -> AppMachine {
    let main = ScreenBuilder::default()
        .label("title", "Calendar")
        .button("new", "New event")
        .on_click("new", Some("editor"), vec![]);
    let editor = ScreenBuilder::default()
        .field("title", "Event title", "calendar.title_input")
        .field("date", "Date", "calendar.date_input")
        .button("save", "Save event")
        .on_click(
            "save",
            Some("main"),
            vec![
                push("calendar.events", "{calendar.title_input}|{calendar.date_input}"),
                clear("calendar.title_input"),
                clear("calendar.date_input"),
            ],
        );
    machine(
        "calendar",
        vec![("main", main.build()), ("editor", editor.build())],
        vec![("calendar.title_input", text()), ("calendar.date_input", text()), ("calendar.events", list())],
        vec![("calendar.events", vec!["Standup|May 2", "Lunch|May 9"])],
    )
}

fn expense() -> AppMachine {
    let main = ScreenBuilder::default()
        .label("title", "Expenses")
        .button("add", "Add expense")
        .on_click("add", Some("editor"), vec![]);
    let editor = ScreenBuilder::default()
        .field("item", "Item", "expense.item_input")
        .field("amount", "Amount", "expense.amount_input")
        .button("cancel", "Cancel")
        .button("save", "Save expense")
        .on_click("cancel", Some("main"), vec![clear("expense.item_input"), clear("expense.amount_input")])
        .on_click(
            "save",
            Some("main"),
            vec![
                push("expense.list", "{expense.item_input}|{expense.amount_input}"),
                clear("expense.item_input"),
                clear("expense.amount_input"),
            ],
        );
    machine(
        "expense",
        vec![("main", main.build()), ("editor", editor.build())],
        vec![("expense.item_input", text()), ("expense.amount_input", text()), ("expense.list", list())],
        vec![("expense.list", vec!["Rent|900", "Coffee|4"])],
    )
}

/// Labels that differ between the current and the outdated release of an app.
struct MusicLabels {
    library: &'static str,
    play: &'static str,
}

fn music_with(labels: MusicLabels) -> AppMachine {
    let main = ScreenBuilder::default()
        .label("title", "Music")
        .button("library", labels.library)
        .on_click("library", Some("songs"), vec![]);
    let mut songs = ScreenBuilder::default().label("title", "Songs");
    for (i, s) in SONGS.iter().enumerate() {
        let id = format!("song{i}");
        songs = songs.item(&id, s).on_click(&id, Some("player"), vec![set_text("music.selected", s)]);
    }
    let player = ScreenBuilder::default()
        .label("title", "Now playing")
        .button("queue", "Add to queue")
        .button("play", labels.play)
        .on_click("queue", None, vec![push("music.queue", "{music.selected}")])
        .on_click("play", None, vec![push("music.played", "{music.selected}")]);
    machine(
        "music",
        vec![("main", main.build()), ("songs", songs.build()), ("player", player.build())],
        vec![("music.selected", text()), ("music.queue", list()), ("music.played", list())],
        vec![],
    )
}

struct RecorderLabels {
    new: &'static str,
    save: &'static str,
}

fn recorder_with(labels: RecorderLabels) -> AppMachine {
    let main = ScreenBuilder::default()
        .label("title", "Recorder")
        .button("new", labels.new)
        .on_click("new", Some("recording"), vec![]);
    let rec = ScreenBuilder::default()
        .field("name", "File name", "recorder.name_input")
        .button("record", "Record")
        .button("discard", "Discard recording")
        .button("save", labels.save)
        .on_click("record", None, vec![incr("recorder.takes")])
        .on_click("discard", Some("main"), vec![clear("recorder.name_input")])
        .on_click("save", Some("main"), vec![push("recorder.files", "{recorder.name_input}"), clear("recorder.name_input")]);
    machine(
        "recorder",
        vec![("main", main.build()), ("recording", rec.build())],
        vec![("recorder.name_input", text()), ("recorder.takes", StateValue::Int(0)), ("recorder.files", list())],
        vec![],
    )
}

fn browser() -> AppMachine {
    let main = ScreenBuilder::default()
        .label("title", "Browser")
        .item("maze", "Maze game")
        .item("quiz", "Quiz")
        .on_click("maze", Some("maze0"), vec![])
        .on_click("quiz", Some("quiz"), vec![]);
    // The exit is two cells right and two cells down; a wrong move restarts.
    let path = [("maze0", "right"), ("maze1", "right"), ("maze2", "down"), ("maze3", "down")];
    let mut screens = vec![("main", main.build())];
    for (i, (sid, good)) in path.iter().enumerate() {
        let next = path.get(i + 1).map(|p| p.0).unwrap_or("exit");
        let mut s = ScreenBuilder::default()
            .label("title", &format!("Maze step {}", i + 1))
            .button("up", "Up")
            .button("down", "Down")
            .button("left", "Left")
            .button("right", "Right");
        for dir in ["up", "down", "left", "right"] {
            let target = if dir == *good { next } else { "maze0" };
            s = s.on_click(dir, Some(target), vec![]);
        }
        screens.push((sid, s.build()));
    }
    let exit = ScreenBuilder::default()
        .label("title", "You reached the exit")
        .button("done", "Exit maze")
        .on_click("done", Some("main"), vec![set_bool("browser.maze_solved", true)]);
    let quiz = ScreenBuilder::default()
        .label("question", "What is 3 plus 4?")
        .field("answer", "Answer", "browser.answer_input")
        .button("submit", "Submit")
        .on_click("submit", None, vec![push("browser.answers", "{browser.answer_input}"), clear("browser.answer_input")]);
    screens.push(("exit", exit.build()));
    screens.push(("quiz", quiz.build()));
    machine(
        "browser",
        screens,
        vec![("browser.maze_solved", StateValue::Bool(false)), ("browser.answer_input", text()), ("browser.answers", list())],
        vec![],
    )
}

fn draw() -> AppMachine {
    let main = ScreenBuilder::default()
        .label("title", "Draw")
        .button("new", "New canvas")
        .on_click("new", Some("canvas"), vec![]);
    let mut canvas = ScreenBuilder::default().label("title", "Canvas");
    for s in SHAPES {
        let id = s.to_lowercase();
        canvas = canvas.button(&id, s).on_click(&id, None, vec![set_text("draw.shape", &id)]);
    }
    let canvas = canvas.button("save", "Save drawing").on_click("save", Some("main"), vec![push("draw.saved", "{draw.shape}")]);
    machine(
        "draw",
        vec![("main", main.build()), ("canvas", canvas.build())],
        vec![("draw.shape", text()), ("draw.saved", list())],
        vec![],
    )
}

/// The current release of every shipped app, in launcher order.
pub fn apps() -> Vec<AppMachine> {
    vec![
        settings(),
        contacts(),
        messenger(),
        notes(),
        clock(),
        camera(),
        calendar(),
        music_with(MusicLabels { library: "Library", play: "Play" }),
        recorder_with(RecorderLabels { new: "New recording", save: "Save recording" }),
        browser(),
        expense(),
        draw(),
    ]
}

/// The app set as it looked when the offline corpus was recorded: music
/// and recorder shipped different button labels back then.
pub fn legacy_apps() -> Vec<AppMachine> {
    apps()
        .into_iter()
        .map(|a| match a.app_name.as_str() {
            "music" => music_with(MusicLabels { library: "Browse", play: "Play now" }),
            "recorder" => recorder_with(RecorderLabels { new: "Start new", save: "Keep" }),
            _ => a,
        })
        .collect()
}

pub const APP_NAMES: [&str; 12] = [
    "settings", "contacts", "messenger", "notes", "clock", "camera", "calendar", "music", "recorder", "browser",
    "expense", "draw",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_shipped_app_validates() {
        for a in apps().iter().chain(legacy_apps().iter()) {
            a.validate().unwrap_or_else(|e| panic!("{e}"));
        }
        let names: Vec<_> = apps().into_iter().map(|a| a.app_name).collect();
        assert_eq!(names, APP_NAMES);
    }

    #[test]
    fn legacy_variants_differ_only_for_music_and_recorder() {
        let now = apps();
        let old = legacy_apps();
        let differing: Vec<_> =
            now.iter().zip(old.iter()).filter(|(a, b)| a != b).map(|(a, _)| a.app_name.clone()).collect();
        assert_eq!(differing, vec!["music", "recorder"]);
    }
}
