use serde::{Deserialize, Serialize};

use super::{CoreSkill, ExecutionSkill, MetaSkill, SkillStore};

/// Which levels of the store a reader may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelMask {
    pub execution: bool,
    pub core: bool,
    pub meta: bool,
}

impl LevelMask {
    pub const ALL: LevelMask = LevelMask { execution: true, core: true, meta: true };
    pub const NONE: LevelMask = LevelMask { execution: false, core: false, meta: false };
}

/// Read-only access to a store with some levels hidden. Hidden levels
/// behave as if empty.
#[derive(Debug, Clone, Copy)]
pub struct StoreView<'a> {
    store: &'a SkillStore,
    mask: LevelMask,
}

impl<'a> StoreView<'a> {
    pub fn new(store: &'a SkillStore, mask: LevelMask) -> Self {
        Self { store, mask }
    }

    pub fn full(store: &'a SkillStore) -> Self {
        Self::new(store, LevelMask::ALL)
    }

    pub fn store(&self) -> &'a SkillStore {
        self.store
    }

    pub fn mask(&self) -> LevelMask {
        self.mask
    }

    /// Category retrieval needs both the meta level and the core skills
    /// it groups.
    pub fn uses_meta(&self) -> bool {
        self.mask.meta && self.mask.core
    }

    pub fn uses_core(&self) -> bool {
        self.mask.core
    }

    pub fn uses_execution(&self) -> bool {
        self.mask.execution
    }

    pub fn retrieve_meta_candidates(&self, goal: &str, k: usize) -> Vec<(&'a MetaSkill, f64)> {
        if self.uses_meta() {
            self.store.retrieve_meta_candidates(goal, k)
        } else {
            Vec::new()
        }
    }

    pub fn core_skills_of(&self, meta: &MetaSkill) -> Vec<&'a CoreSkill> {
        if self.uses_core() {
            self.store.core_skills_of(meta.id).unwrap_or_default()
        } else {
            Vec::new()
        }
    }

    pub fn retrieve_cores(&self, text: &str, k: usize) -> Vec<(&'a CoreSkill, f64)> {
        if self.uses_core() {
            self.store.retrieve_cores(text, k)
        } else {
            Vec::new()
        }
    }

    pub fn core_by_name(&self, name: &str) -> Option<&'a CoreSkill> {
        self.uses_core().then(|| self.store.core_by_name(name)).flatten()
    }

    pub fn retrieve_executions(&self, text: &str, k: usize) -> Vec<(&'a ExecutionSkill, f64)> {
        if self.uses_execution() {
            self.store.retrieve_executions(text, k)
        } else {
            Vec::new()
        }
    }
}
