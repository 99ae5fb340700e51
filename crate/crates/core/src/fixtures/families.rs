//! Subtask families: the unit tasks that composite tasks are built from.
//!
//! A family ties a natural-language phrasing to the app procedure that
//! accomplishes it and the checkpoint that proves it happened.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use regex::Regex;

use super::apps::{SHAPES, SONGS};
use crate::guienv::{Checkpoint, CompositeTemplate, Predicate, StateValue, StateVars, TaskSpec, DEFAULT_EPISODE_STEPS};
use crate::seed::SeedSplitter;

#[derive(Debug, Clone, Copy)]
pub struct Family {
    pub name: &'static str,
    pub app: &'static str,
    /// Thematic group the family belongs to.
    pub domain: &'static str,
    pub params: &'static [(&'static str, &'static str)],
    /// Canonical sentence, with `{param}` slots; ends with a period.
    pub phrasing: &'static str,
    /// Step-goal procedure on the current app release.
    pub steps: &'static [&'static str],
    /// Procedure on the outdated release, where it differs.
    pub legacy_steps: Option<&'static [&'static str]>,
    /// Index of the committing step and the misleading alternative next to it.
    pub confirm: Option<(usize, &'static str)>,
    checkpoint: fn() -> Predicate,
    initial: fn() -> StateVars,
}

fn none() -> StateVars {
    StateVars::new()
}

fn contains(var: &str, value: &str) -> Predicate {
    Predicate::ListContains { var: var.into(), value: value.into() }
}

fn at_least(var: &str, min: i64) -> Predicate {
    Predicate::IntAtLeast { var: var.into(), min }
}

fn equals_bool(var: &str, value: bool) -> Predicate {
    Predicate::Equals { var: var.into(), value: StateValue::Bool(value) }
}

fn bool_var(var: &str, value: bool) -> StateVars {
    [(var.to_string(), StateValue::Bool(value))].into()
}

pub const DOMAINS: [(&str, &str); 5] = [
    ("Communication", "Reach people: manage contacts, place phone calls and send text messages."),
    ("Productivity", "Record information: notes, note folders, calendar events and expenses."),
    ("DeviceControl", "Change device settings such as radios and brightness, and use the clock utilities."),
    ("Media", "Capture and play media: photos, videos, songs, audio memos and drawings."),
    ("Web", "Complete interactive pages such as puzzles and quizzes in the web browser."),
];

const NAME: (&str, &str) = ("name", "full name of the person");
const NUMBER: (&str, &str) = ("number", "phone number");

pub const FAMILIES: &[Family] = &[
    Family {
        name: "add_contact",
        app: "contacts",
        domain: "Communication",
        params: &[NAME, NUMBER],
        phrasing: "Create a contact named {name} whose number is {number}.",
        steps: &[
            "open the contacts app",
            "tap the Add contact button",
            "tap the Name field",
            "type {name}",
            "tap the Phone field",
            "type {number}",
            "tap the Save button",
        ],
        legacy_steps: None,
        confirm: Some((6, "Discard")),
        checkpoint: || contains("contacts.list", "{name}|{number}"),
        initial: none,
    },
    Family {
        name: "call_number",
        app: "contacts",
        domain: "Communication",
        params: &[NUMBER],
        phrasing: "Call the number {number}.",
        steps: &["open the contacts app", "tap the Dialer button", "tap the Number field", "type {number}", "tap the Call button"],
        legacy_steps: None,
        confirm: Some((4, "Cancel")),
        checkpoint: || contains("contacts.calls", "{number}"),
        initial: none,
    },
    Family {
        name: "send_sms",
        app: "messenger",
        domain: "Communication",
        params: &[NUMBER, ("message", "text of the message")],
        phrasing: "Text {number} the message {message}.",
        steps: &[
            "open the messenger app",
            "tap the New message button",
            "tap the Recipient field",
            "type {number}",
            "tap the Message field",
            "type {message}",
            "tap the Send button",
        ],
        legacy_steps: None,
        confirm: Some((6, "Delete draft")),
        checkpoint: || contains("messenger.sent", "{number}|{message}"),
        initial: none,
    },
    Family {
        name: "create_note",
        app: "notes",
        domain: "Productivity",
        params: &[("title", "title of the note"), ("text", "body of the note")],
        phrasing: "Create a note titled {title} containing {text}.",
        steps: &[
            "open the notes app",
            "tap the New note button",
            "tap the Title field",
            "type {title}",
            "tap the Body field",
            "type {text}",
            "tap the Save note button",
        ],
        legacy_steps: None,
        confirm: None,
        checkpoint: || contains("notes.list", "{title}|{text}"),
        initial: none,
    },
    Family {
        name: "create_folder",
        app: "notes",
        domain: "Productivity",
        params: &[("folder", "name of the folder")],
        phrasing: "Make a notes folder called {folder}.",
        steps: &[
            "open the notes app",
            "tap the New folder button",
            "tap the Folder name field",
            "type {folder}",
            "tap the Create folder button",
        ],
        legacy_steps: None,
        confirm: None,
        checkpoint: || contains("notes.folders", "{folder}"),
        initial: none,
    },
    Family {
        name: "add_event",
        app: "calendar",
        domain: "Productivity",
        params: &[("event", "title of the event"), ("date", "day of the event")],
        phrasing: "Add a calendar event {event} on {date}.",
        steps: &[
            "open the calendar app",
            "tap the New event button",
            "tap the Event title field",
            "type {event}",
            "tap the Date field",
            "type {date}",
            "tap the Save event button",
        ],
        legacy_steps: None,
        confirm: None,
        checkpoint: || contains("calendar.events", "{event}|{date}"),
        initial: none,
    },
    Family {
        name: "add_expense",
        app: "expense",
        domain: "Productivity",
        params: &[("item", "what the money was spent on"), ("amount", "amount spent")],
        phrasing: "Log an expense for {item} costing {amount}.",
        steps: &[
            "open the expense app",
            "tap the Add expense button",
            "tap the Item field",
            "type {item}",
            "tap the Amount field",
            "type {amount}",
            "tap the Save expense button",
        ],
        legacy_steps: None,
        confirm: Some((6, "Cancel")),
        checkpoint: || contains("expense.list", "{item}|{amount}"),
        initial: none,
    },
    Family {
        name: "wifi_on",
        app: "settings",
        domain: "DeviceControl",
        params: &[],
        phrasing: "Switch Wi-Fi on.",
        steps: &["open the settings app", "tap the Wi-Fi toggle"],
        legacy_steps: None,
        confirm: None,
        checkpoint: || equals_bool("settings.wifi", true),
        initial: || bool_var("settings.wifi", false),
    },
    Family {
        name: "wifi_off",
        app: "settings",
        domain: "DeviceControl",
        params: &[],
        phrasing: "Switch Wi-Fi off.",
        steps: &["open the settings app", "tap the Wi-Fi toggle"],
        legacy_steps: None,
        confirm: None,
        checkpoint: || equals_bool("settings.wifi", false),
        initial: || bool_var("settings.wifi", true),
    },
    Family {
        name: "bluetooth_on",
        app: "settings",
        domain: "DeviceControl",
        params: &[],
        phrasing: "Switch Bluetooth on.",
        steps: &["open the settings app", "tap the Bluetooth toggle"],
        legacy_steps: None,
        confirm: None,
        checkpoint: || equals_bool("settings.bluetooth", true),
        initial: || bool_var("settings.bluetooth", false),
    },
    Family {
        name: "bluetooth_off",
        app: "settings",
        domain: "DeviceControl",
        params: &[],
        phrasing: "Switch Bluetooth off.",
        steps: &["open the settings app", "tap the Bluetooth toggle"],
        legacy_steps: None,
        confirm: None,
        checkpoint: || equals_bool("settings.bluetooth", false),
        initial: || bool_var("settings.bluetooth", true),
    },
    Family {
        name: "max_brightness",
        app: "settings",
        domain: "DeviceControl",
        params: &[],
        phrasing: "Set the screen brightness to maximum.",
        steps: &["open the settings app", "tap the Display button", "tap the Max brightness button"],
        legacy_steps: None,
        confirm: None,
        checkpoint: || at_least("settings.brightness", 100),
        initial: none,
    },
    Family {
        name: "start_stopwatch",
        app: "clock",
        domain: "DeviceControl",
        params: &[],
        phrasing: "Start the stopwatch.",
        steps: &["open the clock app", "tap the Stopwatch button", "tap the Start button"],
        legacy_steps: None,
        confirm: None,
        checkpoint: || at_least("clock.starts", 1),
        initial: none,
    },
    Family {
        name: "pause_stopwatch",
        app: "clock",
        domain: "DeviceControl",
        params: &[],
        phrasing: "Pause the stopwatch.",
        steps: &["open the clock app", "tap the Stopwatch button", "tap the Pause button"],
        legacy_steps: None,
        confirm: None,
        checkpoint: || at_least("clock.pauses", 1),
        initial: none,
    },
    Family {
        name: "take_photo",
        app: "camera",
        domain: "Media",
        params: &[],
        phrasing: "Take a photo with the camera.",
        steps: &["open the camera app", "tap the Shutter button"],
        legacy_steps: None,
        confirm: None,
        checkpoint: || at_least("camera.photos", 1),
        initial: none,
    },
    Family {
        name: "record_video",
        app: "camera",
        domain: "Media",
        params: &[],
        phrasing: "Record a video with the camera.",
        steps: &["open the camera app", "tap the Video button", "tap the Record button"],
        legacy_steps: None,
        confirm: None,
        checkpoint: || at_least("camera.videos", 1),
        initial: none,
    },
    Family {
        name: "play_music",
        app: "music",
        domain: "Media",
        params: &[("song", "title of the song")],
        phrasing: "Play the song {song} in the music app.",
        steps: &["open the music app", "tap the Library button", "tap the {song} item", "tap the Play button"],
        legacy_steps: Some(&["open the music app", "tap the Browse button", "tap the {song} item", "tap the Play now button"]),
        confirm: Some((3, "Add to queue")),
        checkpoint: || contains("music.played", "{song}"),
        initial: none,
    },
    Family {
        name: "record_audio",
        app: "recorder",
        domain: "Media",
        params: &[("file", "name of the recording")],
        phrasing: "Record an audio memo named {file}.",
        steps: &[
            "open the recorder app",
            "tap the New recording button",
            "tap the File name field",
            "type {file}",
            "tap the Record button",
            "tap the Save recording button",
        ],
        legacy_steps: Some(&[
            "open the recorder app",
            "tap the Start new button",
            "tap the File name field",
            "type {file}",
            "tap the Record button",
            "tap the Keep button",
        ]),
        confirm: Some((5, "Discard recording")),
        checkpoint: || contains("recorder.files", "{file}"),
        initial: none,
    },
    Family {
        name: "create_drawing",
        app: "draw",
        domain: "Media",
        params: &[("shape", "shape to draw")],
        phrasing: "Draw a {shape} and save the drawing.",
        steps: &["open the draw app", "tap the New canvas button", "tap the {shape} button", "tap the Save drawing button"],
        legacy_steps: None,
        confirm: None,
        checkpoint: || contains("draw.saved", "{shape}"),
        initial: none,
    },
    Family {
        name: "solve_maze",
        app: "browser",
        domain: "Web",
        params: &[],
        phrasing: "Solve the maze puzzle in the browser.",
        steps: &[
            "open the browser app",
            "tap the Maze game item",
            "tap the Right button",
            "tap the Right button",
            "tap the Down button",
            "tap the Down button",
            "tap the Exit maze button",
        ],
        legacy_steps: None,
        confirm: None,
        checkpoint: || equals_bool("browser.maze_solved", true),
        initial: none,
    },
    Family {
        name: "answer_quiz",
        app: "browser",
        domain: "Web",
        params: &[],
        phrasing: "Answer the arithmetic quiz in the browser.",
        steps: &["open the browser app", "tap the Quiz item", "tap the Answer field", "type 7", "tap the Submit button"],
        legacy_steps: None,
        confirm: None,
        checkpoint: || contains("browser.answers", "7"),
        initial: none,
    },
];

impl PartialEq for Family {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl Eq for Family {}

/// A family occurrence recognized in text, with its bound parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Match {
    pub family: &'static Family,
    pub args: BTreeMap<String, String>,
    /// Byte offset of the match, for ordering.
    pub start: usize,
    pub end: usize,
}

impl Family {
    pub fn by_name(name: &str) -> Option<&'static Family> {
        FAMILIES.iter().find(|f| f.name == name)
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        self.params.iter().map(|p| p.0).collect()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { name: self.name.into(), predicate: (self.checkpoint)() }
    }

    pub fn initial_state(&self) -> StateVars {
        (self.initial)()
    }

    /// Case-insensitive pattern for the phrasing; each slot captures a
    /// period-free value.
    pub fn regex(&self) -> &'static Regex {
        static CACHE: OnceLock<Vec<Regex>> = OnceLock::new();
        let all = CACHE.get_or_init(|| FAMILIES.iter().map(Family::compile).collect());
        let i = FAMILIES.iter().position(|f| f.name == self.name).expect("shipped family");
        &all[i]
    }

    fn compile(&self) -> Regex {
        let mut pat = String::from("(?i)");
        let mut rest = self.phrasing;
        while let Some(open) = rest.find('{') {
            let close = rest[open..].find('}').expect("balanced phrasing") + open;
            pat.push_str(&regex::escape(&rest[..open]));
            pat.push_str(&format!("(?P<{}>[^.]+?)", &rest[open + 1..close]));
            rest = &rest[close + 1..];
        }
        pat.push_str(&regex::escape(rest));
        Regex::new(&pat).expect("phrasing compiles")
    }

    pub fn render(&self, template: &str, args: &BTreeMap<String, String>) -> String {
        let mut out = template.to_string();
        for (k, v) in args {
            out = out.replace(&format!("{{{k}}}"), v);
        }
        out
    }

    pub fn sentence(&self, args: &BTreeMap<String, String>) -> String {
        self.render(self.phrasing, args)
    }

    pub fn procedure(&self, args: &BTreeMap<String, String>, legacy: bool) -> Vec<String> {
        let steps = if legacy { self.legacy_steps.unwrap_or(self.steps) } else { self.steps };
        steps.iter().map(|s| self.render(s, args)).collect()
    }

    pub fn pool(param: &str) -> &'static [&'static str] {
        match param {
            "name" => &["Ann Lee", "Bo Chen", "Cara Diaz", "Dev Rao", "Eli Moss", "Fay Wong"],
            "number" => &["555-0101", "555-0123", "555-0147", "555-0168", "555-0182"],
            "message" => &["running late", "see you at noon", "call me back", "happy birthday"],
            "title" => &["Groceries", "Trip plan", "Ideas", "Reading list"],
            "text" => &["buy milk", "pack socks", "learn rust", "read dune"],
            "folder" => &["Work", "Travel", "Recipes"],
            "event" => &["Dentist", "Team sync", "Yoga class"],
            "date" => &["May 3", "June 12", "July 20"],
            "item" => &["Lunch", "Taxi", "Books"],
            "amount" => &["12", "30", "45"],
            "song" => &SONGS,
            "file" => &["memo one", "lecture", "voice idea"],
            "shape" => &SHAPES,
            _ => &[],
        }
    }
}

/// All family occurrences in `text`, in order of appearance. Overlapping
/// matches keep the earliest.
pub fn find_families(text: &str) -> Vec<Match> {
    let mut found: Vec<Match> = Vec::new();
    for f in FAMILIES {
        let re = f.regex();
        for caps in re.captures_iter(text) {
            let m = caps.get(0).expect("whole match");
            let args = re
                .capture_names()
                .flatten()
                .map(|n| (n.to_string(), caps[n].trim().to_string()))
                .collect();
            found.push(Match { family: f, args, start: m.start(), end: m.end() });
        }
    }
    found.sort_by_key(|m| (m.start, std::cmp::Reverse(m.end)));
    let mut out: Vec<Match> = Vec::new();
    for m in found {
        if out.last().is_none_or(|last| m.start >= last.end) {
            out.push(m);
        }
    }
    out
}

/// Joins family sentences the way composite instructions read.
pub fn compose_instruction(sentences: &[String]) -> String {
    sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if i == 0 {
                s.clone()
            } else {
                let mut c = s.chars();
                let first = c.next().map(|f| f.to_lowercase().collect::<String>()).unwrap_or_default();
                format!("Then {first}{}", c.as_str())
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Builds a runnable task from free text by recognizing its families.
/// Returns `None` when no family is recognized.
pub fn task_from_instruction(task_id: &str, template_name: &str, instruction: &str) -> Option<TaskSpec> {
    let matches = find_families(instruction);
    if matches.is_empty() {
        return None;
    }
    let mut apps: Vec<String> = Vec::new();
    let mut checkpoints = Vec::new();
    let mut initial = StateVars::new();
    let mut params = BTreeMap::new();
    for m in &matches {
        if !apps.iter().any(|a| a == m.family.app) {
            apps.push(m.family.app.into());
        }
        let mut cp = m.family.checkpoint();
        let rendered = serde_json::to_string(&cp.predicate).expect("serializable");
        cp.predicate = serde_json::from_str(&m.family.render(&rendered, &m.args)).expect("same shape");
        checkpoints.push(cp);
        initial.extend(m.family.initial_state());
        params.extend(m.args.clone());
    }
    Some(TaskSpec {
        task_id: task_id.into(),
        template_name: template_name.into(),
        instruction: instruction.into(),
        apps_involved: apps,
        checkpoints,
        max_steps: DEFAULT_EPISODE_STEPS,
        initial_state: initial,
        params,
    })
}

/// Composite template from an ordered list of family names.
pub fn composite(name: &str, families: &[&str]) -> CompositeTemplate {
    let fams: Vec<&Family> = families.iter().map(|f| Family::by_name(f).expect("known family")).collect();
    let sentences: Vec<String> = fams.iter().map(|f| f.phrasing.to_string()).collect();
    let mut apps: Vec<String> = Vec::new();
    let mut initial = StateVars::new();
    for f in &fams {
        if !apps.iter().any(|a| a == f.app) {
            apps.push(f.app.into());
        }
        initial.extend(f.initial_state());
    }
    CompositeTemplate {
        name: name.into(),
        instruction: compose_instruction(&sentences),
        apps_involved: apps,
        checkpoints: fams.iter().map(|f| f.checkpoint()).collect(),
        max_steps: DEFAULT_EPISODE_STEPS,
        initial_state: initial,
    }
}

/// One binding row drawing each parameter from its value pool.
pub fn sample_bindings(template: &CompositeTemplate, seeds: &SeedSplitter) -> BTreeMap<String, String> {
    let mut rng = seeds.rng(&format!("bindings/{}", template.name));
    template
        .parameters()
        .into_iter()
        .map(|p| {
            let v = Family::pool(&p).choose(&mut rng).copied().unwrap_or("x");
            (p, v.to_string())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_family_is_well_formed() {
        for f in FAMILIES {
            assert!(f.phrasing.ends_with('.'), "{}", f.name);
            assert!(DOMAINS.iter().any(|d| d.0 == f.domain), "{}", f.name);
            for (p, _) in f.params {
                assert!(!Family::pool(p).is_empty(), "no pool for {p}");
                assert!(f.phrasing.contains(&format!("{{{p}}}")));
            }
            if let Some((i, _)) = f.confirm {
                assert!(i < f.steps.len());
            }
            if let Some(l) = f.legacy_steps {
                assert_eq!(l.len(), f.steps.len());
            }
        }
    }

    #[test]
    fn sentences_round_trip_through_recognition() {
        for f in FAMILIES {
            let args: BTreeMap<String, String> =
                f.params.iter().map(|(p, _)| (p.to_string(), Family::pool(p)[1].to_string())).collect();
            let found = find_families(&f.sentence(&args));
            assert_eq!(found.len(), 1, "{}", f.name);
            assert_eq!(found[0].family.name, f.name);
            assert_eq!(found[0].args, args);
        }
    }

    #[test]
    fn composite_instructions_are_recognized_in_order() {
        let t = composite("AddContactAndCall", &["add_contact", "call_number"]);
        assert_eq!(t.instruction, "Create a contact named {name} whose number is {number}. Then call the number {number}.");
        let row: BTreeMap<String, String> =
            [("name".to_string(), "Ann Lee".to_string()), ("number".to_string(), "555-0101".to_string())].into();
        let task = t.instantiate("t".into(), &row).unwrap();
        let found = find_families(&task.instruction);
        let names: Vec<_> = found.iter().map(|m| m.family.name).collect();
        assert_eq!(names, ["add_contact", "call_number"]);
        let rebuilt = task_from_instruction("t", "AddContactAndCall", &task.instruction).unwrap();
        assert_eq!(rebuilt.checkpoints, task.checkpoints);
    }
}
