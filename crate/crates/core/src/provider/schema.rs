//! Structured reply shapes, one per prompt role.
//!
//! Every schema is strict: all listed keys must be present (nullable keys
//! may hold `null`), unknown keys are rejected, and role-specific value
//! constraints are checked after decoding.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::guienv::{Action, ActionKind, Direction, Point, StatusKind};

use super::Role;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepGoalReply {
    pub action_type: ActionKind,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreSkillDraft {
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub docstring: String,
    pub body: Vec<String>,
}

/// Either names an existing skill that already covers the task, or
/// proposes a new one. Merge requests reuse this shape: `existing` names
/// the survivor, and both `null` declines the merge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoreSkillReply {
    pub reason: String,
    pub existing: Option<String>,
    pub new_skill: Option<CoreSkillDraft>,
}

pub const NEW_SKILL_CATEGORY: &str = "New Skill";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaReply {
    pub reason: String,
    pub category: String,
    pub skill_name: Option<String>,
    pub skill_description: Option<String>,
    pub skill_combination: Option<Vec<String>>,
}

impl MetaReply {
    pub fn is_new(&self) -> bool {
        self.category == NEW_SKILL_CATEGORY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanReply {
    pub reason: String,
    pub plans: Vec<String>,
}

/// Candidate indices (0-based), best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingReply {
    pub ranking: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectionReply {
    pub caption: String,
    pub reason: String,
    pub state_change: String,
    pub score: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionReply {
    pub action_type: ActionKind,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<StatusKind>,
}

impl ActionReply {
    /// Converts to an executable action. Coordinate actions get a
    /// placeholder point that grounding replaces.
    pub fn to_action(&self) -> Result<Action, String> {
        let origin = Point::new(0, 0);
        let need = |v: &Option<String>, what: &str| {
            v.clone().filter(|s| !s.is_empty()).ok_or_else(|| format!("{:?} requires '{what}'", self.action_type))
        };
        Ok(match self.action_type {
            ActionKind::Click => Action::Click { coord: origin },
            ActionKind::DoubleTap => Action::DoubleTap { coord: origin },
            ActionKind::LongPress => Action::LongPress { coord: origin },
            ActionKind::InputText => Action::InputText { text: need(&self.text, "text")? },
            ActionKind::Answer => Action::Answer { text: need(&self.text, "text")? },
            ActionKind::OpenApp => Action::OpenApp { app_name: need(&self.app_name, "app_name")? },
            ActionKind::NavigateHome => Action::NavigateHome,
            ActionKind::NavigateBack => Action::NavigateBack,
            ActionKind::Wait => Action::Wait,
            ActionKind::KeyboardEnter => Action::KeyboardEnter,
            ActionKind::ClearText => Action::ClearText,
            ActionKind::Scroll => Action::Scroll {
                direction: self.direction.ok_or("scroll requires 'direction'")?,
            },
            ActionKind::Swipe => Action::Swipe {
                direction: self.direction.ok_or("swipe requires 'direction'")?,
            },
            ActionKind::Status => Action::Status { status: self.status.ok_or("status requires 'status'")? },
        })
    }

    pub fn from_action(action: &Action, description: impl Into<String>) -> Self {
        let mut reply = ActionReply {
            action_type: action.kind(),
            description: description.into(),
            text: None,
            app_name: None,
            direction: None,
            status: None,
        };
        match action {
            Action::InputText { text } | Action::Answer { text } => reply.text = Some(text.clone()),
            Action::OpenApp { app_name } => reply.app_name = Some(app_name.clone()),
            Action::Scroll { direction } | Action::Swipe { direction } => reply.direction = Some(*direction),
            Action::Status { status } => reply.status = Some(*status),
            _ => {}
        }
        reply
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskListReply {
    pub tasks: Vec<String>,
}

/// A decoded reply; the variant is fixed by the request role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schema", content = "value", rename_all = "snake_case")]
pub enum Parsed {
    StepGoal(StepGoalReply),
    CoreSkill(CoreSkillReply),
    Meta(MetaReply),
    Plan(PlanReply),
    Ranking(RankingReply),
    Reflection(ReflectionReply),
    Action(ActionReply),
    Tasks(TaskListReply),
}

impl Parsed {
    /// JSON body as the provider would send it.
    pub fn to_reply_json(&self) -> Value {
        let v = match self {
            Parsed::StepGoal(r) => serde_json::to_value(r),
            Parsed::CoreSkill(r) => serde_json::to_value(r),
            Parsed::Meta(r) => serde_json::to_value(r),
            Parsed::Plan(r) => serde_json::to_value(r),
            Parsed::Ranking(r) => serde_json::to_value(r),
            Parsed::Reflection(r) => serde_json::to_value(r),
            Parsed::Action(r) => serde_json::to_value(r),
            Parsed::Tasks(r) => serde_json::to_value(r),
        };
        v.expect("reply types serialize")
    }
}

fn required_keys(role: Role) -> &'static [&'static str] {
    match role {
        Role::StepGoalExtraction => &["action_type", "description"],
        Role::CoreSkillSynthesis => &["reason", "existing", "new_skill"],
        Role::MetaClassification => &["reason", "category", "skill_name", "skill_description", "skill_combination"],
        Role::SubgoalPlanning => &["reason", "plans"],
        Role::SubgoalRanking => &["ranking"],
        Role::Reflection => &["caption", "reason", "state_change", "score"],
        Role::ActionDecision => &["action_type", "description"],
        Role::TaskGeneration => &["tasks"],
    }
}

/// Human-readable shape restated to the model after a parse failure.
pub fn schema_hint(role: Role) -> &'static str {
    match role {
        Role::StepGoalExtraction => r#"{"action_type": <action type>, "description": <step goal>}"#,
        Role::CoreSkillSynthesis => {
            r#"{"reason": <text>, "existing": <skill name or null>, "new_skill": null or {"name": <snake_case>, "params": [{"name":..., "description":...}], "docstring": <text>, "body": [<step-goal template>...]}}"#
        }
        Role::MetaClassification => {
            r#"{"reason": <text>, "category": <existing skill name or "New Skill">, "skill_name": <name or null>, "skill_description": <text or null>, "skill_combination": <list or null>}"#
        }
        Role::SubgoalPlanning => r#"{"reason": <text>, "plans": [<plan line>...]}"#,
        Role::SubgoalRanking => r#"{"ranking": [<candidate index, best first>...]}"#,
        Role::Reflection => r#"{"caption": <text>, "reason": <text>, "state_change": <text>, "score": <0-10>}"#,
        Role::ActionDecision => {
            r#"{"action_type": <action type>, "description": <target element or intent>, "text"?: ..., "app_name"?: ..., "direction"?: ..., "status"?: ...}"#
        }
        Role::TaskGeneration => r#"{"tasks": [<instruction>...]}"#,
    }
}

/// Pulls the JSON object out of a reply that may be wrapped in prose or a
/// code fence.
pub fn extract_json(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    (end > start).then(|| &raw[start..=end])
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Decodes and validates `raw` against the schema for `role`.
pub fn decode(role: Role, raw: &str, expected_items: Option<usize>) -> Result<Parsed, String> {
    let body = extract_json(raw).ok_or("no JSON object in reply")?;
    let value: Value = serde_json::from_str(body).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("reply is not a JSON object")?;
    if let Some(missing) = required_keys(role).iter().find(|k| !obj.contains_key(**k)) {
        return Err(format!("missing required field '{missing}'"));
    }
    fn typed<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, String> {
        serde_json::from_value(v).map_err(|e| format!("schema mismatch: {e}"))
    }
    let parsed = match role {
        Role::StepGoalExtraction => {
            let r: StepGoalReply = typed(value)?;
            if r.description.trim().is_empty() {
                return Err("empty step-goal description".into());
            }
            Parsed::StepGoal(r)
        }
        Role::CoreSkillSynthesis => {
            let r: CoreSkillReply = typed(value)?;
            if let Some(draft) = &r.new_skill {
                validate_draft(draft)?;
            }
            if r.existing.is_some() && r.new_skill.is_some() {
                return Err("reply names an existing skill and a new skill".into());
            }
            Parsed::CoreSkill(r)
        }
        Role::MetaClassification => {
            let r: MetaReply = typed(value)?;
            if r.category.trim().is_empty() {
                return Err("empty category".into());
            }
            if r.is_new() {
                let name_ok = r.skill_name.as_deref().is_some_and(|n| !n.trim().is_empty());
                let desc_ok = r.skill_description.as_deref().is_some_and(|d| !d.trim().is_empty());
                if !(name_ok && desc_ok) {
                    return Err("new meta skill requires a name and a description".into());
                }
            }
            Parsed::Meta(r)
        }
        Role::SubgoalPlanning => Parsed::Plan(typed(value)?),
        Role::SubgoalRanking => {
            let r: RankingReply = typed(value)?;
            if let Some(n) = expected_items {
                let mut seen = vec![false; n];
                if r.ranking.len() != n {
                    return Err(format!("ranking has {} entries, expected {n}", r.ranking.len()));
                }
                for &i in &r.ranking {
                    if i >= n || std::mem::replace(&mut seen[i], true) {
                        return Err(format!("ranking is not a permutation of 0..{n}"));
                    }
                }
            }
            Parsed::Ranking(r)
        }
        Role::Reflection => {
            let r: ReflectionReply = typed(value)?;
            if !(0..=10).contains(&r.score) {
                return Err(format!("score {} outside 0..=10", r.score));
            }
            Parsed::Reflection(r)
        }
        Role::ActionDecision => {
            let r: ActionReply = typed(value)?;
            r.to_action()?;
            if r.description.trim().is_empty() {
                return Err("empty action description".into());
            }
            Parsed::Action(r)
        }
        Role::TaskGeneration => Parsed::Tasks(typed(value)?),
    };
    Ok(parsed)
}

fn validate_draft(draft: &CoreSkillDraft) -> Result<(), String> {
    if !is_identifier(&draft.name) {
        return Err(format!("skill name '{}' is not a snake_case identifier", draft.name));
    }
    if draft.body.is_empty() {
        return Err("skill body is empty".into());
    }
    if draft.docstring.trim().is_empty() {
        return Err("skill docstring is empty".into());
    }
    for p in &draft.params {
        if !is_identifier(&p.name) {
            return Err(format!("parameter '{}' is not an identifier", p.name));
        }
    }
    for line in &draft.body {
        for ph in crate::guienv::placeholders(line) {
            if !draft.params.iter().any(|p| p.name == ph) {
                return Err(format!("body placeholder '{{{ph}}}' is not a parameter"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent checker: a ranking reply is valid iff its sorted entries
    /// are exactly 0..n.
    fn is_permutation(r: &[usize], n: usize) -> bool {
        let mut v = r.to_vec();
        v.sort_unstable();
        v == (0..n).collect::<Vec<_>>()
    }

    #[test]
    fn ranking_must_permute_exactly_the_candidates() {
        for raw in [r#"{"ranking":[2,0,1]}"#, r#"{"ranking":[0,0,1]}"#, r#"{"ranking":[0,1]}"#, r#"{"ranking":[3,0,1]}"#] {
            let v: RankingReply = serde_json::from_str(raw).unwrap();
            let ok = decode(Role::SubgoalRanking, raw, Some(3)).is_ok();
            assert_eq!(ok, is_permutation(&v.ranking, 3), "{raw}");
        }
    }

    #[test]
    fn reflection_reply_with_prose_around_it_decodes() {
        let raw = "Sure.\n```json\n{\"caption\":\"c\",\"reason\":\"r\",\"state_change\":\"s\",\"score\":4}\n```";
        match decode(Role::Reflection, raw, None).unwrap() {
            Parsed::Reflection(r) => assert_eq!(r.score, 4),
            other => panic!("{other:?}"),
        }
        assert!(decode(Role::Reflection, r#"{"caption":"c","reason":"r","state_change":"s","score":11}"#, None).is_err());
    }

    #[test]
    fn missing_or_unknown_fields_are_rejected() {
        assert!(decode(Role::SubgoalPlanning, r#"{"plans":[]}"#, None).is_err());
        assert!(decode(Role::SubgoalPlanning, r#"{"reason":"","plans":[],"extra":1}"#, None).is_err());
        assert!(decode(Role::CoreSkillSynthesis, r#"{"reason":"x","existing":null}"#, None).is_err());
    }

    #[test]
    fn core_skill_placeholders_must_be_params() {
        let raw = r#"{"reason":"r","existing":null,"new_skill":{"name":"add_contact","params":[{"name":"name","description":"n"}],"docstring":"d","body":["type {name}","type {number}"]}}"#;
        let err = decode(Role::CoreSkillSynthesis, raw, None).unwrap_err();
        assert!(err.contains("number"), "{err}");
        let raw = r#"{"reason":"r","existing":null,"new_skill":{"name":"Add Contact","params":[],"docstring":"d","body":["x"]}}"#;
        assert!(decode(Role::CoreSkillSynthesis, raw, None).is_err());
    }

    #[test]
    fn action_reply_outside_action_space_is_rejected() {
        assert!(decode(Role::ActionDecision, r#"{"action_type":"teleport","description":"x"}"#, None).is_err());
        assert!(decode(Role::ActionDecision, r#"{"action_type":"input_text","description":"x"}"#, None).is_err());
        let ok = decode(Role::ActionDecision, r#"{"action_type":"open_app","description":"open it","app_name":"contacts"}"#, None);
        assert!(ok.is_ok());
    }
}
