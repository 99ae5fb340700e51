//! Layered configuration: built-in defaults, then a TOML file, then
//! `MIRAGE_*` environment variables, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use mirage_core::agent::AgentConfig;
use mirage_core::provider::DEFAULT_DIMENSION;
use mirage_core::samcts::SearchConfig;
use serde::{Deserialize, Serialize};
use toml::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Deterministic in-process simulator.
    Mock,
    /// Replies read from a JSON script file.
    Scripted,
    /// A chat-completions compatible HTTP endpoint.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Mock competence profile: "default" or "solver".
    pub profile: String,
    pub script: String,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            profile: "default".into(),
            script: String::new(),
            endpoint: String::new(),
            model: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedderConfig {
    pub dimension: usize,
    pub seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self { dimension: DEFAULT_DIMENSION, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub store: PathBuf,
    pub corpus: PathBuf,
    pub suite: PathBuf,
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            store: "skills.json".into(),
            corpus: "corpus".into(),
            suite: "suite".into(),
            output: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalConfig {
    pub seed: u64,
    pub provider: ProviderConfig,
    pub embedder: EmbedderConfig,
    pub paths: PathsConfig,
    pub agent: AgentConfig,
    pub search: SearchConfig,
}

impl GlobalConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.agent.validate()?;
        self.search.validate()?;
        if self.embedder.dimension == 0 {
            return Err("embedder.dimension must be at least 1".into());
        }
        match self.provider.kind {
            ProviderKind::Scripted if self.provider.script.is_empty() => {
                Err("provider.script must name a script file when provider.kind is scripted".into())
            }
            ProviderKind::Http if self.provider.endpoint.is_empty() => {
                Err("provider.endpoint must be set when provider.kind is http".into())
            }
            _ => Ok(()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn defaults_value() -> Value {
    Value::try_from(GlobalConfig::default()).expect("defaults serialize")
}

/// Every leaf key with its default, in file order.
pub fn keys() -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
            Value::Table(t) => {
                for (k, v) in t {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, out);
                }
            }
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", &defaults_value(), &mut out);
    out
}

/// The `--help` appendix listing every key.
pub fn key_help() -> String {
    let mut s = String::from("Configuration keys (flags override MIRAGE_<KEY> env vars, which override the file; dots become underscores):\n");
    for (k, d) in keys() {
        s.push_str(&format!("  {k:<32} default {d}\n"));
    }
    s
}

pub fn env_name(key: &str) -> String {
    format!("MIRAGE_{}", key.replace('.', "_").to_uppercase())
}

fn merge(base: &mut Value, over: Value, path: &str) -> Result<(), String> {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key)?,
                    None => return Err(format!("unknown configuration key '{key}'")),
                }
            }
            Ok(())
        }
        (Value::Table(_), _) => Err(format!("'{path}' must be a table")),
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// Parses `raw` as the same kind of value the default for `key` has.
fn typed(key: &str, raw: &str) -> Result<Value, String> {
    let mut cur = &defaults_value();
    for part in key.split('.') {
        cur = cur.get(part).ok_or_else(|| format!("unknown configuration key '{key}'"))?;
    }
    let bad = |what: &str| format!("{key}: '{raw}' is not {what}");
    Ok(match cur {
        Value::Integer(_) => Value::Integer(raw.parse().map_err(|_| bad("an integer"))?),
        Value::Float(_) => Value::Float(raw.parse().map_err(|_| bad("a number"))?),
        Value::Boolean(_) => Value::Boolean(raw.parse().map_err(|_| bad("true or false"))?),
        Value::String(_) => Value::String(raw.to_string()),
        _ => return Err(format!("'{key}' is a table, not a value")),
    })
}

fn set(base: &mut Value, key: &str, raw: &str) -> Result<(), String> {
    let value = typed(key, raw)?;
    let mut over = value;
    for part in key.rsplit('.') {
        let mut t = toml::map::Map::new();
        t.insert(part.to_string(), over);
        over = Value::Table(t);
    }
    merge(base, over, "")
}

/// Resolves the effective configuration. `flags` are `(key, value)` pairs
/// from the command line and win over everything else.
pub fn resolve(
    file: Option<&Path>,
    env: &dyn Fn(&str) -> Option<String>,
    flags: &[(String, String)],
) -> Result<GlobalConfig, String> {
    let mut value = defaults_value();
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let parsed: Value = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        merge(&mut value, parsed, "").map_err(|e| format!("{}: {e}", path.display()))?;
    }
    for (key, _) in keys() {
        if let Some(raw) = env(&env_name(&key)) {
            set(&mut value, &key, &raw).map_err(|e| format!("{}: {e}", env_name(&key)))?;
        }
    }
    for (key, raw) in flags {
        set(&mut value, key, raw)?;
    }
    let config: GlobalConfig = value.try_into().map_err(|e: toml::de::Error| e.to_string())?;
    config.validate()?;
    Ok(config)
}
