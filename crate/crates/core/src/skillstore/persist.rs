use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CoreSkill, ExecutionSkill, MetaSkill, SkillStore, StoreError};
use crate::provider::Embedder;
use crate::provider::HashingEmbedder;

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk layout of a skill store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreFile {
    pub schema_version: u32,
    pub dimension: usize,
    pub embedder_seed: u64,
    pub revision: u64,
    pub next_id: u64,
    pub meta_skills: Vec<MetaSkill>,
    pub core_skills: Vec<CoreSkill>,
    pub execution_skills: Vec<ExecutionSkill>,
}

impl SkillStore {
    pub fn to_file(&self) -> StoreFile {
        StoreFile {
            schema_version: SCHEMA_VERSION,
            dimension: self.embedder.dimension(),
            embedder_seed: self.embedder.seed(),
            revision: self.revision,
            next_id: self.next_id,
            meta_skills: self.meta_skills.values().cloned().collect(),
            core_skills: self.core_skills.values().cloned().collect(),
            execution_skills: self.execution_skills.values().cloned().collect(),
        }
    }

    pub fn from_file(file: StoreFile) -> Result<Self, StoreError> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(StoreError::SchemaVersion { found: file.schema_version, expected: SCHEMA_VERSION });
        }
        let store = SkillStore {
            embedder: HashingEmbedder::new(file.dimension, file.embedder_seed),
            revision: file.revision,
            next_id: file.next_id,
            execution_skills: file.execution_skills.into_iter().map(|e| (e.id, e)).collect(),
            core_skills: file.core_skills.into_iter().map(|c| (c.id, c)).collect(),
            meta_skills: file.meta_skills.into_iter().map(|m| (m.id, m)).collect(),
        };
        let max_id = store
            .execution_skills
            .keys()
            .map(|i| i.0)
            .chain(store.core_skills.keys().map(|i| i.0))
            .chain(store.meta_skills.keys().map(|i| i.0))
            .max()
            .unwrap_or(0);
        let mut errs = store.check_integrity().err().unwrap_or_default();
        if store.next_id <= max_id {
            errs.push(format!("next_id {} does not exceed the largest id {max_id}", store.next_id));
        }
        if errs.is_empty() {
            Ok(store)
        } else {
            Err(StoreError::Integrity(errs))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("store serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, StoreError> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let v: Version = serde_json::from_str(text).map_err(|e| StoreError::Parse(e.to_string()))?;
        if v.schema_version != SCHEMA_VERSION {
            return Err(StoreError::SchemaVersion { found: v.schema_version, expected: SCHEMA_VERSION });
        }
        let file: StoreFile = serde_json::from_str(text).map_err(|e| StoreError::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    /// Writes to a sibling temporary file, then renames over `path`, so a
    /// crash never leaves a half-written store.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let io = |e: std::io::Error| StoreError::Io { path: path.display().to_string(), message: e.to_string() };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let tmp = path.with_extension("json.tmp");
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(self.to_json().as_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let text = fs::read_to_string(path)
            .map_err(|e| StoreError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }
}
