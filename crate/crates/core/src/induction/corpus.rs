//! The shipped offline corpus: scripted demonstrations recorded on the
//! older release of the apps, one family per trajectory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use super::InductionError;
use crate::agent::{best_element, SubGoal, SubGoalRecord, SubGoalStatus, Trajectory, TrajectoryStep, DEFAULT_GROUNDING_THRESHOLD};
use crate::fixtures::{legacy_apps, task_from_instruction, Family};
use crate::guienv::{Action, GuiEnv, StatusKind};
use crate::seed::SeedSplitter;
use crate::sim::step_action;

pub const DEFAULT_CORPUS_SIZE: usize = 60;

/// Families demonstrated in the corpus. Calling, texting and expense entry
/// were never recorded, so those skills can only be learned online.
pub const CORPUS_FAMILIES: &[&str] = &[
    "add_contact",
    "create_note",
    "create_folder",
    "add_event",
    "wifi_on",
    "wifi_off",
    "bluetooth_on",
    "bluetooth_off",
    "max_brightness",
    "start_stopwatch",
    "pause_stopwatch",
    "take_photo",
    "record_video",
    "play_music",
    "record_audio",
    "create_drawing",
    "solve_maze",
    "answer_quiz",
];

fn demonstrate(env: &mut GuiEnv, family: &Family, args: &BTreeMap<String, String>, id: &str, seed: u64) -> Trajectory {
    let text = family.sentence(args);
    let task = task_from_instruction(id, family.name, &text).expect("family sentence parses back");
    env.reset(&task, seed).expect("fixture task resets");
    let mut steps = Vec::new();
    let mut script: Vec<(String, Option<String>)> =
        family.procedure(args, true).into_iter().map(|s| (s.clone(), Some(s))).collect();
    script.push(("report the task as complete".into(), None));
    for (line, step_goal) in script {
        let obs = env.observe().expect("episode active");
        let reply = step_action(&line);
        let mut action = reply.to_action().unwrap_or(Action::Status { status: StatusKind::Complete });
        let mut target = None;
        if action.needs_grounding() {
            let (el, _) = best_element(&reply.description, &obs, DEFAULT_GROUNDING_THRESHOLD)
                .unwrap_or_else(|| panic!("demonstration step '{line}' of {} does not ground", family.name));
            action = action.with_coord(el.bounds.center());
            target = Some(el.text.clone());
        }
        if step_goal.is_none() {
            action = Action::Status { status: StatusKind::Complete };
        }
        env.step(&action).expect("demonstration step");
        steps.push(TrajectoryStep {
            index: obs.step_index,
            subgoal_index: 0,
            observation: obs,
            action,
            description: reply.description.clone(),
            summary: reply.description,
            step_goal,
            target,
            reflection: None,
            regenerations: 0,
            forced: false,
        });
    }
    let outcome = env.verify().expect("episode active");
    assert!(outcome.success, "demonstration of {} failed: {outcome:?}", family.name);
    let end = steps.len() - 1;
    Trajectory {
        task_id: id.to_string(),
        goal: text.clone(),
        seed,
        steps,
        subgoals: vec![SubGoalRecord {
            subgoal: SubGoal::natural(text.clone()),
            intent: text,
            status: SubGoalStatus::Completed,
            fell_back: false,
            first_step: 0,
            end_step: end,
        }],
        final_observation: env.observe().expect("episode active"),
        outcome,
        flags: Vec::new(),
    }
}

/// `count` demonstrations cycling through [`CORPUS_FAMILIES`] with
/// arguments drawn from the seed.
pub fn generate_corpus(count: usize, seed: u64) -> Vec<Trajectory> {
    let seeds = SeedSplitter::new(seed);
    let mut env = GuiEnv::new(legacy_apps()).expect("legacy fixtures load");
    (0..count)
        .map(|i| {
            let family = Family::by_name(CORPUS_FAMILIES[i % CORPUS_FAMILIES.len()]).expect("known family");
            let mut rng = seeds.rng(&format!("corpus/{i}"));
            let args: BTreeMap<String, String> = family
                .param_names()
                .into_iter()
                .map(|p| (p.to_string(), Family::pool(p).choose(&mut rng).copied().unwrap_or("x").to_string()))
                .collect();
            let id = format!("corpus-{i:03}-{}", family.name);
            demonstrate(&mut env, family, &args, &id, seeds.derive(&format!("corpus-env/{i}")))
        })
        .collect()
}

/// Writes one `<task_id>.jsonl` file per trajectory.
pub fn write_corpus(dir: &Path, corpus: &[Trajectory]) -> Result<(), InductionError> {
    let io = |e: std::io::Error| InductionError::Io { path: dir.display().to_string(), message: e.to_string() };
    fs::create_dir_all(dir).map_err(io)?;
    for t in corpus {
        fs::write(dir.join(format!("{}.jsonl", t.task_id)), t.to_jsonl()).map_err(io)?;
    }
    Ok(())
}
