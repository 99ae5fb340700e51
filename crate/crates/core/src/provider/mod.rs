//! Model-dependent steps behind one contract: text completion with strict
//! structured decoding, plus text embedding.

mod embed;
mod http;
pub mod prompts;
mod schema;
mod scripted;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{cosine, tokens, EmbeddingVector, Embedder, HashingEmbedder, DEFAULT_DIMENSION};
pub use http::{HttpConfig, HttpProvider};
pub use schema::{
    decode, extract_json, schema_hint, ActionReply, CoreSkillDraft, CoreSkillReply, MetaReply, ParamSpec, Parsed,
    PlanReply, RankingReply, ReflectionReply, StepGoalReply, TaskListReply, NEW_SKILL_CATEGORY,
};
pub use scripted::{Matcher, ScriptRule, ScriptedProvider};

use crate::digest::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    StepGoalExtraction,
    CoreSkillSynthesis,
    MetaClassification,
    SubgoalPlanning,
    SubgoalRanking,
    Reflection,
    ActionDecision,
    TaskGeneration,
}

impl Role {
    pub const ALL: [Role; 8] = [
        Role::StepGoalExtraction,
        Role::CoreSkillSynthesis,
        Role::MetaClassification,
        Role::SubgoalPlanning,
        Role::SubgoalRanking,
        Role::Reflection,
        Role::ActionDecision,
        Role::TaskGeneration,
    ];

    /// Identifier of the reply schema this role must produce.
    pub fn schema_id(self) -> &'static str {
        match self {
            Role::StepGoalExtraction => "step_goal.v1",
            Role::CoreSkillSynthesis => "core_skill.v1",
            Role::MetaClassification => "meta_classification.v1",
            Role::SubgoalPlanning => "plan.v1",
            Role::SubgoalRanking => "ranking.v1",
            Role::Reflection => "reflection.v1",
            Role::ActionDecision => "action.v1",
            Role::TaskGeneration => "task_list.v1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub role: Role,
    pub system_text: String,
    pub user_text: String,
    /// Opaque image payloads, forwarded verbatim to remote providers.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<Vec<u8>>,
    pub decode_schema: String,
    /// Candidate count for ranking replies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_items: Option<usize>,
}

impl PromptRequest {
    pub fn new(role: Role, system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        Self {
            role,
            system_text: system_text.into(),
            user_text: user_text.into(),
            attachments: Vec::new(),
            decode_schema: role.schema_id().to_string(),
            expected_items: None,
        }
    }

    pub fn with_expected_items(mut self, n: usize) -> Self {
        self.expected_items = Some(n);
        self
    }

    pub fn with_attachment(mut self, bytes: Vec<u8>) -> Self {
        self.attachments.push(bytes);
        self
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.user_text.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("user_text is empty".into()));
        }
        if self.decode_schema != self.role.schema_id() {
            return Err(ProviderError::InvalidRequest(format!(
                "schema '{}' does not belong to role {:?}",
                self.decode_schema, self.role
            )));
        }
        Ok(())
    }

    /// Content hash over all attachments; the only view of images the mock uses.
    pub fn attachments_digest(&self) -> String {
        let mut all = Vec::new();
        for a in &self.attachments {
            all.extend_from_slice(&(a.len() as u64).to_le_bytes());
            all.extend_from_slice(a);
        }
        sha256_hex(&all)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderReply {
    pub raw_text: String,
    pub parsed: Parsed,
    pub provider_id: String,
    #[serde(with = "duration_millis")]
    pub latency: Duration,
}

mod duration_millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("reply for {role:?} failed to decode after {} attempt(s): {reason}", raw_attempts.len())]
    Decode { role: Role, reason: String, raw_attempts: Vec<String> },
    #[error("no mock script entry for {role:?} matching: {excerpt}")]
    MissingScript { role: Role, excerpt: String },
    #[error("empty text cannot be embedded")]
    EmptyText,
    #[error("provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport { .. })
    }
}

/// A backend that turns a prompt into raw reply text.
pub trait Provider: Send + Sync {
    fn id(&self) -> &str;

    /// One raw round trip. `attempt` starts at 1.
    fn send(&self, request: &PromptRequest, attempt: u32) -> Result<String, ProviderError>;
}

pub const DEFAULT_MAX_RETRIES: u32 = 2;

/// Wraps a [`Provider`] with decoding and retry.
///
/// A decode failure is retried with the expected shape restated in the
/// prompt; transport failures are retried as-is. Both share the
/// `max_retries` budget.
#[derive(Clone)]
pub struct Reasoner {
    provider: Arc<dyn Provider>,
    max_retries: u32,
}

impl std::fmt::Debug for Reasoner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Reasoner").field("provider", &self.provider.id()).field("max_retries", &self.max_retries).finish()
    }
}

impl Reasoner {
    pub fn new(provider: Arc<dyn Provider>) -> Self {
        Self { provider, max_retries: DEFAULT_MAX_RETRIES }
    }

    pub fn with_max_retries(mut self, n: u32) -> Self {
        self.max_retries = n;
        self
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    pub fn complete(&self, request: &PromptRequest) -> Result<ProviderReply, ProviderError> {
        request.validate()?;
        let started = Instant::now();
        let mut raw_attempts = Vec::new();
        let mut last_reason = String::new();
        let mut current = request.clone();
        let total = self.max_retries + 1;
        for attempt in 1..=total {
            let raw = match self.provider.send(&current, attempt) {
                Ok(raw) => raw,
                Err(e) if e.is_retryable() && attempt < total => {
                    log::warn!("provider {} transport failure (attempt {attempt}): {e}", self.provider.id());
                    continue;
                }
                Err(ProviderError::Transport { message, .. }) => {
                    return Err(ProviderError::Transport { attempts: attempt, message })
                }
                Err(e) => return Err(e),
            };
            match decode(request.role, &raw, request.expected_items) {
                Ok(parsed) => {
                    return Ok(ProviderReply {
                        raw_text: raw,
                        parsed,
                        provider_id: self.provider.id().to_string(),
                        latency: started.elapsed(),
                    })
                }
                Err(reason) => {
                    log::debug!("decode failure for {:?} (attempt {attempt}): {reason}", request.role);
                    raw_attempts.push(raw);
                    last_reason = reason;
                    current = request.clone();
                    current.user_text = format!(
                        "{}\n\nYour previous reply could not be parsed ({}). Reply with exactly one JSON object of this shape:\n{}",
                        request.user_text,
                        last_reason,
                        schema_hint(request.role)
                    );
                }
            }
        }
        Err(ProviderError::Decode { role: request.role, reason: last_reason, raw_attempts })
    }
}

macro_rules! typed_completion {
    ($name:ident, $variant:ident, $ty:ty) => {
        pub fn $name(&self, request: &PromptRequest) -> Result<$ty, ProviderError> {
            match self.complete(request)?.parsed {
                Parsed::$variant(v) => Ok(v),
                other => Err(ProviderError::Decode {
                    role: request.role,
                    reason: format!("unexpected reply variant {other:?}"),
                    raw_attempts: Vec::new(),
                }),
            }
        }
    };
}

impl Reasoner {
    typed_completion!(step_goal, StepGoal, StepGoalReply);
    typed_completion!(core_skill, CoreSkill, CoreSkillReply);
    typed_completion!(meta, Meta, MetaReply);
    typed_completion!(plan, Plan, PlanReply);
    typed_completion!(ranking, Ranking, RankingReply);
    typed_completion!(reflection, Reflection, ReflectionReply);
    typed_completion!(action, Action, ActionReply);
    typed_completion!(tasks, Tasks, TaskListReply);
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Canned {
        replies: Mutex<Vec<Result<String, ProviderError>>>,
        seen: Mutex<Vec<String>>,
    }

    impl Provider for Canned {
        fn id(&self) -> &str {
            "canned"
        }
        fn send(&self, request: &PromptRequest, _attempt: u32) -> Result<String, ProviderError> {
            self.seen.lock().unwrap().push(request.user_text.clone());
            self.replies.lock().unwrap().remove(0)
        }
    }

    fn canned(replies: Vec<Result<String, ProviderError>>) -> Arc<Canned> {
        Arc::new(Canned { replies: Mutex::new(replies), seen: Mutex::new(Vec::new()) })
    }

    #[test]
    fn malformed_replies_exhaust_retries_and_keep_every_raw_attempt() {
        let p = canned(vec![Ok("not json".into()), Ok("{\"caption\": 1".into()), Ok("{}".into())]);
        let r = Reasoner::new(p.clone()).with_max_retries(2);
        let req = PromptRequest::new(Role::Reflection, "sys", "score this");
        match r.complete(&req) {
            Err(ProviderError::Decode { raw_attempts, .. }) => assert_eq!(raw_attempts.len(), 3),
            other => panic!("{other:?}"),
        }
        let seen = p.seen.lock().unwrap();
        assert!(!seen[0].contains("could not be parsed"));
        assert!(seen[1].contains("could not be parsed"), "schema restated on retry");
    }

    #[test]
    fn transport_failures_are_retried_then_surfaced_with_attempt_count() {
        let fail = || Err(ProviderError::Transport { attempts: 1, message: "down".into() });
        let ok = r#"{"tasks":["a"]}"#.to_string();
        let r = Reasoner::new(canned(vec![fail(), Ok(ok)]));
        let req = PromptRequest::new(Role::TaskGeneration, "sys", "make tasks");
        assert_eq!(r.tasks(&req).unwrap().tasks, vec!["a"]);

        let r = Reasoner::new(canned(vec![fail(), fail(), fail()]));
        match r.complete(&req) {
            Err(ProviderError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn requests_are_validated() {
        let r = Reasoner::new(canned(vec![]));
        assert!(matches!(r.complete(&PromptRequest::new(Role::Reflection, "s", "  ")), Err(ProviderError::InvalidRequest(_))));
        let mut req = PromptRequest::new(Role::Reflection, "s", "u");
        req.decode_schema = Role::ActionDecision.schema_id().into();
        assert!(matches!(r.complete(&req), Err(ProviderError::InvalidRequest(_))));
    }
}
