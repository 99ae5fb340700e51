use serde::{Deserialize, Serialize};

use crate::samcts::SearchMode;
use crate::skillstore::{LevelMask, Origin};

/// Which parts of the skill store and agent a benchmark run may use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSpec {
    pub name: String,
    pub offline_skills: bool,
    pub online_skills: bool,
    pub execution_level: bool,
    pub core_level: bool,
    pub meta_level: bool,
    pub reflector: bool,
    #[serde(default = "direct")]
    pub mode: SearchMode,
}

fn direct() -> SearchMode {
    SearchMode::Direct
}

pub const PRESETS: &[&str] = &["all", "none", "exec-only", "core-meta", "offline-only", "online-only", "no-reflector"];

impl AblationSpec {
    pub fn all() -> Self {
        Self {
            name: "all".into(),
            offline_skills: true,
            online_skills: true,
            execution_level: true,
            core_level: true,
            meta_level: true,
            reflector: true,
            mode: SearchMode::Direct,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        let base = Self { name: name.to_string(), ..Self::all() };
        Some(match name {
            "all" => base,
            "none" => Self { execution_level: false, core_level: false, meta_level: false, ..base },
            "exec-only" => Self { core_level: false, meta_level: false, ..base },
            "core-meta" => Self { execution_level: false, ..base },
            "offline-only" => Self { online_skills: false, ..base },
            "online-only" => Self { offline_skills: false, ..base },
            "no-reflector" => Self { reflector: false, ..base },
            _ => return None,
        })
    }

    /// Levels visible to the agent. Hiding the core level also hides the
    /// meta level, since categories are only useful through their cores.
    pub fn mask(&self) -> LevelMask {
        LevelMask { execution: self.execution_level, core: self.core_level, meta: self.meta_level && self.core_level }
    }

    pub fn origins(&self) -> Vec<Origin> {
        let mut v = Vec::new();
        if self.offline_skills {
            v.push(Origin::Offline);
        }
        if self.online_skills {
            v.push(Origin::Online);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_preset_resolves_and_keeps_its_name() {
        for p in PRESETS {
            assert_eq!(AblationSpec::preset(p).unwrap().name, *p);
        }
        assert!(AblationSpec::preset("bogus").is_none());
    }

    #[test]
    fn hiding_cores_hides_categories() {
        let s = AblationSpec { core_level: false, ..AblationSpec::all() };
        assert!(!s.mask().meta);
        assert!(s.mask().execution);
    }
}
