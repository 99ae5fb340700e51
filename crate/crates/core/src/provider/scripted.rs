//! Deterministic scripted provider loaded from JSON.
//!
//! ```json
//! {"rules": [
//!   {"role": "reflection", "contains": "screen: contacts/edit", "reply": {"caption": "...", "reason": "...", "state_change": "...", "score": 4}},
//!   {"role": "action_decision", "regex": "sub-goal: open .*", "reply": "{\"action_type\": \"wait\", \"description\": \"wait\"}"}
//! ]}
//! ```
//!
//! The first rule whose role and matcher accept the request wins. A JSON
//! object reply is serialized as the raw reply text; a string reply is sent
//! verbatim, which lets fixtures return malformed output on purpose.

use std::path::Path;
use std::sync::Arc;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{PromptRequest, Provider, ProviderError, Role};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    pub role: Role,
    #[serde(flatten)]
    pub matcher: Matcher,
    pub reply: Value,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Matcher {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachments_digest: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ScriptFile {
    #[serde(default)]
    provider_id: Option<String>,
    rules: Vec<ScriptRule>,
}

pub struct ScriptedProvider {
    id: String,
    rules: Vec<(ScriptRule, Option<Regex>)>,
    fallback: Option<Arc<dyn Provider>>,
}

impl std::fmt::Debug for ScriptedProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedProvider")
            .field("id", &self.id)
            .field("rules", &self.rules.len())
            .field("fallback", &self.fallback.as_ref().map(|p| p.id().to_string()))
            .finish()
    }
}

impl ScriptedProvider {
    pub fn new(rules: Vec<ScriptRule>) -> Result<Self, ProviderError> {
        let rules = rules
            .into_iter()
            .map(|r| {
                let re = r
                    .matcher
                    .regex
                    .as_deref()
                    .map(Regex::new)
                    .transpose()
                    .map_err(|e| ProviderError::Config(format!("bad matcher regex: {e}")))?;
                Ok((r, re))
            })
            .collect::<Result<Vec<_>, ProviderError>>()?;
        Ok(Self { id: "scripted".into(), rules, fallback: None })
    }

    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let file: ScriptFile = serde_json::from_str(text).map_err(|e| ProviderError::Config(format!("mock script: {e}")))?;
        let mut p = Self::new(file.rules)?;
        if let Some(id) = file.provider_id {
            p.id = id;
        }
        Ok(p)
    }

    pub fn from_path(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("cannot read mock script {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Requests no rule matches are forwarded to `provider` instead of failing.
    pub fn with_fallback(mut self, provider: Arc<dyn Provider>) -> Self {
        self.fallback = Some(provider);
        self
    }

    /// Convenience: one rule matching `contains` for `role`.
    pub fn rule(role: Role, contains: Option<&str>, reply: Value) -> ScriptRule {
        ScriptRule { role, matcher: Matcher { contains: contains.map(str::to_string), ..Default::default() }, reply }
    }
}

impl Provider for ScriptedProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn send(&self, request: &PromptRequest, attempt: u32) -> Result<String, ProviderError> {
        let digest = request.attachments_digest();
        let hit = self.rules.iter().find(|(rule, re)| {
            rule.role == request.role
                && rule.matcher.contains.as_deref().is_none_or(|c| request.user_text.contains(c))
                && re.as_ref().is_none_or(|re| re.is_match(&request.user_text))
                && rule.matcher.attachments_digest.as_deref().is_none_or(|d| d == digest)
        });
        match hit {
            Some((rule, _)) => Ok(match &rule.reply {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            }),
            None if self.fallback.is_some() => self.fallback.as_ref().expect("checked").send(request, attempt),
            None => Err(ProviderError::MissingScript {
                role: request.role,
                excerpt: request.user_text.chars().take(120).collect(),
            }),
        }
    }
}
