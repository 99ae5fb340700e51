//! The 30 composite templates and the suites built from them.

use std::collections::BTreeMap;

use super::families::{composite, sample_bindings};
use crate::guienv::{generate_composite_tasks, CompositeTemplate, EnvError, TaskSpec};
use crate::seed::SeedSplitter;

/// Template name and the families it chains, in order.
pub const TEMPLATES: [(&str, &[&str]); 30] = [
    ("AddContactAndCall", &["add_contact", "call_number"]),
    ("AddContactAndSms", &["add_contact", "send_sms"]),
    ("AddContactCallAndSms", &["add_contact", "call_number", "send_sms"]),
    ("AddContactNoteAndSms", &["add_contact", "create_note", "send_sms"]),
    ("NoteAndSms", &["create_note", "send_sms"]),
    ("FolderAndNote", &["create_folder", "create_note"]),
    ("EventAndNote", &["add_event", "create_note"]),
    ("EventAndSms", &["add_event", "send_sms"]),
    ("ExpenseAndNote", &["add_expense", "create_note"]),
    ("WifiOffAndRecorder", &["wifi_off", "record_audio"]),
    ("WifiOffBluetoothOnAndMusic", &["wifi_off", "bluetooth_on", "play_music"]),
    ("BluetoothOnAndMusic", &["bluetooth_on", "play_music"]),
    ("WifiOffBluetoothOffAndRecorder", &["wifi_off", "bluetooth_off", "record_audio"]),
    ("WifiOnAndMaze", &["wifi_on", "solve_maze"]),
    ("StopwatchAndMaze", &["start_stopwatch", "solve_maze"]),
    ("StopwatchMazeAndPause", &["start_stopwatch", "solve_maze", "pause_stopwatch"]),
    ("StopwatchAndQuiz", &["start_stopwatch", "answer_quiz"]),
    ("StopwatchQuizAndPause", &["start_stopwatch", "answer_quiz", "pause_stopwatch"]),
    ("StopwatchAndPause", &["start_stopwatch", "pause_stopwatch"]),
    ("StopwatchDrawingAndPause", &["start_stopwatch", "create_drawing", "pause_stopwatch"]),
    ("PhotoAndDrawing", &["take_photo", "create_drawing"]),
    ("PhotoAndVideo", &["take_photo", "record_video"]),
    ("WifiOffAndBluetoothOn", &["wifi_off", "bluetooth_on"]),
    ("WifiOffAndBluetoothOff", &["wifi_off", "bluetooth_off"]),
    ("WifiOnAndBrightness", &["wifi_on", "max_brightness"]),
    ("MusicAndRecorder", &["play_music", "record_audio"]),
    ("AddContactAndEvent", &["add_contact", "add_event"]),
    ("ExpenseAndSms", &["add_expense", "send_sms"]),
    ("VideoAndMusic", &["record_video", "play_music"]),
    ("CallAndNote", &["call_number", "create_note"]),
];

/// Tasks whose contact step offers a tempting wrong confirm button next to
/// the right one, paired with an easy step elsewhere.
pub const ADVERSARIAL_TEMPLATES: [(&str, &[&str]); 10] = [
    ("ContactOnly", &["add_contact"]),
    ("ContactAndWifiOn", &["add_contact", "wifi_on"]),
    ("ContactAndBluetoothOff", &["add_contact", "bluetooth_off"]),
    ("WifiOffAndContact", &["wifi_off", "add_contact"]),
    ("ContactAndStopwatch", &["add_contact", "start_stopwatch"]),
    ("ContactAndPhoto", &["add_contact", "take_photo"]),
    ("BrightnessAndContact", &["max_brightness", "add_contact"]),
    ("ContactAndVideo", &["add_contact", "record_video"]),
    ("BluetoothOnAndContact", &["bluetooth_on", "add_contact"]),
    ("PhotoAndContact", &["take_photo", "add_contact"]),
];

pub fn composite_templates() -> Vec<CompositeTemplate> {
    TEMPLATES.iter().map(|(name, fams)| composite(name, fams)).collect()
}

/// One task per template with seed-drawn parameter values.
pub fn composite_suite(seed: u64) -> Result<Vec<TaskSpec>, EnvError> {
    suite_from(composite_templates(), seed)
}

/// One task per adversarial template.
pub fn adversarial_suite(seed: u64) -> Result<Vec<TaskSpec>, EnvError> {
    suite_from(ADVERSARIAL_TEMPLATES.iter().map(|(name, fams)| composite(name, fams)).collect(), seed)
}

fn suite_from(templates: Vec<CompositeTemplate>, seed: u64) -> Result<Vec<TaskSpec>, EnvError> {
    let seeds = SeedSplitter::new(seed);
    let bindings: BTreeMap<String, Vec<BTreeMap<String, String>>> =
        templates.iter().map(|t| (t.name.clone(), vec![sample_bindings(t, &seeds)])).collect();
    generate_composite_tasks(&templates, &bindings, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::apps::apps;
    use crate::guienv::GuiEnv;
    use std::collections::BTreeSet;

    #[test]
    fn thirty_distinct_tasks_that_reset_cleanly() {
        let tasks = composite_suite(3).unwrap();
        assert_eq!(tasks.len(), 30);
        let ids: BTreeSet<_> = tasks.iter().map(|t| &t.task_id).collect();
        assert_eq!(ids.len(), 30);
        let mut env = GuiEnv::new(apps()).unwrap();
        for t in &tasks {
            env.reset(t, 0).unwrap();
            let o = env.verify().unwrap();
            assert_eq!(o.checkpoints_completed, 0, "{} starts partly solved", t.task_id);
            assert_eq!(o.checkpoints_total, TEMPLATES.iter().find(|x| x.0 == t.template_name).unwrap().1.len());
        }
    }
}
