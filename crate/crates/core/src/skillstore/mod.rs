//! The hierarchical skill store: execution skills (concrete trajectories),
//! core skills (parameterized step-goal functions) and meta skills
//! (categories of core skills), with embedding retrieval and persistence.

mod persist;
mod types;
mod view;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use persist::{StoreFile, SCHEMA_VERSION};
pub use types::{
    CoreId, CoreSkill, ExecId, ExecStep, ExecutionDraft, ExecutionSkill, InsertionReport, LinkDecision, MergeReport,
    MergedPair, MetaId, MetaSkill, Origin,
};
pub use view::{LevelMask, StoreView};

use crate::digest::json_digest;
use crate::provider::prompts::{self, CoreContext, CoreSummary, MetaContext, MetaSummary};
use crate::provider::{cosine, Embedder, EmbeddingVector, HashingEmbedder, ParamSpec, ProviderError, Reasoner};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MERGE_THRESHOLD: f64 = 0.92;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("invalid skill: {0}")]
    Invalid(String),
    #[error("unknown meta skill {0}")]
    UnknownMeta(MetaId),
    #[error("unknown core skill {0}")]
    UnknownCore(CoreId),
    #[error("store schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("store integrity violated: {}", .0.join("; "))]
    Integrity(Vec<String>),
    #[error("merge threshold {0} must lie in (0, 1]")]
    BadThreshold(f64),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("store file is malformed: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillStore {
    embedder: HashingEmbedder,
    revision: u64,
    next_id: u64,
    execution_skills: BTreeMap<ExecId, ExecutionSkill>,
    core_skills: BTreeMap<CoreId, CoreSkill>,
    meta_skills: BTreeMap<MetaId, MetaSkill>,
}

impl Default for SkillStore {
    fn default() -> Self {
        Self::new(HashingEmbedder::default())
    }
}

/// Ranks `items` by cosine similarity to `query`, best first, ties by id.
pub(crate) fn rank<'a, I: Ord + Copy + 'a>(
    query: &EmbeddingVector,
    items: impl Iterator<Item = (I, &'a EmbeddingVector)>,
    k: usize,
) -> Vec<(I, f64)> {
    let mut scored: Vec<(I, f64)> = items.map(|(id, e)| (id, cosine(query, e))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

impl SkillStore {
    pub fn new(embedder: HashingEmbedder) -> Self {
        Self {
            embedder,
            revision: 0,
            next_id: 1,
            execution_skills: BTreeMap::new(),
            core_skills: BTreeMap::new(),
            meta_skills: BTreeMap::new(),
        }
    }

    pub fn embedder(&self) -> &HashingEmbedder {
        &self.embedder
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn execution_skills(&self) -> impl Iterator<Item = &ExecutionSkill> {
        self.execution_skills.values()
    }

    pub fn core_skills(&self) -> impl Iterator<Item = &CoreSkill> {
        self.core_skills.values()
    }

    pub fn meta_skills(&self) -> impl Iterator<Item = &MetaSkill> {
        self.meta_skills.values()
    }

    pub fn execution(&self, id: ExecId) -> Option<&ExecutionSkill> {
        self.execution_skills.get(&id)
    }

    pub fn core(&self, id: CoreId) -> Option<&CoreSkill> {
        self.core_skills.get(&id)
    }

    pub fn meta(&self, id: MetaId) -> Option<&MetaSkill> {
        self.meta_skills.get(&id)
    }

    pub fn core_by_name(&self, name: &str) -> Option<&CoreSkill> {
        self.core_skills.values().find(|c| c.name == name)
    }

    pub fn meta_by_name(&self, name: &str) -> Option<&MetaSkill> {
        self.meta_skills.values().find(|m| m.name == name)
    }

    pub fn execution_by_trajectory(&self, digest: &str) -> Option<&ExecutionSkill> {
        self.execution_skills.values().find(|e| e.trajectory_digest == digest)
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.meta_skills.len(), self.core_skills.len(), self.execution_skills.len())
    }

    /// Structural digest over everything that is persisted.
    pub fn digest(&self) -> String {
        json_digest(&self.to_file())
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        self.embedder.embed(text)
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Metas most similar to `goal`, best first; ties broken by ascending id.
    pub fn retrieve_meta_candidates(&self, goal: &str, k: usize) -> Vec<(&MetaSkill, f64)> {
        let Ok(q) = self.embed(goal) else { return Vec::new() };
        rank(&q, self.meta_skills.iter().map(|(id, m)| (*id, &m.embedding)), k)
            .into_iter()
            .map(|(id, s)| (&self.meta_skills[&id], s))
            .collect()
    }

    pub fn retrieve_cores(&self, text: &str, k: usize) -> Vec<(&CoreSkill, f64)> {
        let Ok(q) = self.embed(text) else { return Vec::new() };
        rank(&q, self.core_skills.iter().map(|(id, c)| (*id, &c.embedding)), k)
            .into_iter()
            .map(|(id, s)| (&self.core_skills[&id], s))
            .collect()
    }

    pub fn retrieve_executions(&self, text: &str, k: usize) -> Vec<(&ExecutionSkill, f64)> {
        let Ok(q) = self.embed(text) else { return Vec::new() };
        rank(&q, self.execution_skills.iter().map(|(id, e)| (*id, &e.embedding)), k)
            .into_iter()
            .map(|(id, s)| (&self.execution_skills[&id], s))
            .collect()
    }

    /// Core skills of a meta skill, ordered by id.
    pub fn core_skills_of(&self, meta: MetaId) -> Result<Vec<&CoreSkill>, StoreError> {
        let m = self.meta_skills.get(&meta).ok_or(StoreError::UnknownMeta(meta))?;
        Ok(m.core_skill_ids.iter().filter_map(|id| self.core_skills.get(id)).collect())
    }

    pub fn metas_of_core(&self, core: CoreId) -> Vec<&MetaSkill> {
        self.meta_skills.values().filter(|m| m.core_skill_ids.contains(&core)).collect()
    }

    pub fn core_summary(&self, core: &CoreSkill) -> CoreSummary {
        let origins: BTreeSet<Origin> =
            core.execution_skill_ids.iter().filter_map(|id| self.execution_skills.get(id)).map(|e| e.origin).collect();
        CoreSummary {
            name: core.name.clone(),
            params: core.params.clone(),
            docstring: core.docstring.clone(),
            body: core.body.clone(),
            origins: origins.into_iter().collect(),
        }
    }

    pub fn meta_summary(&self, meta: &MetaSkill) -> MetaSummary {
        MetaSummary {
            name: meta.name.clone(),
            description: meta.description.clone(),
            cores: meta.core_skill_ids.iter().filter_map(|id| self.core_skills.get(id)).map(|c| c.name.clone()).collect(),
        }
    }

    // ---- direct construction ------------------------------------------------

    /// Adds a meta skill without consulting a model.
    pub fn add_meta(&mut self, name: &str, description: &str) -> Result<MetaId, StoreError> {
        if name.trim().is_empty() || description.trim().is_empty() {
            return Err(StoreError::Invalid("meta skills need a name and a description".into()));
        }
        if self.meta_by_name(name).is_some() {
            return Err(StoreError::Invalid(format!("meta skill '{name}' already exists")));
        }
        let embedding = self.embed(&MetaSkill::embedded_text(name, description))?;
        let id = MetaId(self.fresh_id());
        self.meta_skills.insert(
            id,
            MetaSkill { id, name: name.into(), description: description.into(), core_skill_ids: BTreeSet::new(), embedding },
        );
        self.revision += 1;
        Ok(id)
    }

    /// Adds an execution skill without classifying it.
    pub fn add_execution(&mut self, draft: ExecutionDraft) -> Result<ExecId, StoreError> {
        let embedding = self.embed(&draft.goal_text)?;
        let id = ExecId(self.fresh_id());
        let skill = ExecutionSkill {
            id,
            goal_text: draft.goal_text,
            steps: draft.steps,
            final_observation_digest: draft.final_observation_digest,
            source_trajectory_id: draft.source_trajectory_id,
            trajectory_digest: draft.trajectory_digest,
            origin: draft.origin,
            occurrences: 1,
            embedding,
        };
        skill.check().map_err(StoreError::Invalid)?;
        self.execution_skills.insert(id, skill);
        self.revision += 1;
        Ok(id)
    }

    /// Adds a core skill linked to existing execution skills and metas.
    pub fn add_core(
        &mut self,
        name: &str,
        params: Vec<ParamSpec>,
        docstring: &str,
        body: Vec<String>,
        executions: &[ExecId],
        metas: &[MetaId],
    ) -> Result<CoreId, StoreError> {
        if self.core_by_name(name).is_some() {
            return Err(StoreError::Invalid(format!("core skill '{name}' already exists")));
        }
        if let Some(e) = executions.iter().find(|e| !self.execution_skills.contains_key(e)) {
            return Err(StoreError::Invalid(format!("unknown execution skill {e}")));
        }
        if let Some(m) = metas.iter().find(|m| !self.meta_skills.contains_key(m)) {
            return Err(StoreError::UnknownMeta(*m));
        }
        if metas.is_empty() {
            return Err(StoreError::Invalid(format!("core skill '{name}' must belong to a meta skill")));
        }
        let embedding = self.embed(&CoreSkill::embedded_text(name, docstring))?;
        let id = CoreId(self.fresh_id());
        let core = CoreSkill {
            id,
            name: name.into(),
            params,
            docstring: docstring.into(),
            body,
            execution_skill_ids: executions.iter().copied().collect(),
            embedding,
        };
        core.check().map_err(StoreError::Invalid)?;
        self.core_skills.insert(id, core);
        for m in metas {
            self.meta_skills.get_mut(m).expect("checked").core_skill_ids.insert(id);
        }
        self.revision += 1;
        Ok(id)
    }

    // ---- model-driven insertion ----------------------------------------------

    /// Files an execution skill: the model first picks (or creates) its meta
    /// skill, then names an existing core skill of that meta or writes a new
    /// one. Nothing changes unless every step succeeds; the revision moves by
    /// exactly one on success.
    pub fn insert_execution_skill(
        &mut self,
        draft: ExecutionDraft,
        reasoner: &Reasoner,
    ) -> Result<InsertionReport, StoreError> {
        let mut next = self.clone();
        let report = next.insert_inner(draft, reasoner)?;
        next.check_integrity().map_err(StoreError::Integrity)?;
        next.revision = self.revision + 1;
        *self = next;
        Ok(report)
    }

    fn insert_inner(&mut self, draft: ExecutionDraft, reasoner: &Reasoner) -> Result<InsertionReport, StoreError> {
        let goal = draft.goal_text.clone();
        let step_goals: Vec<String> = draft.steps.iter().map(|s| s.step_goal.clone()).collect();
        let exec_id = self.add_execution(draft)?;

        let existing_metas: Vec<MetaSummary> = self.meta_skills.values().map(|m| self.meta_summary(m)).collect();
        let meta_reply = reasoner.meta(&prompts::meta(&MetaContext::Classify {
            goal: goal.clone(),
            step_goals: step_goals.clone(),
            existing: existing_metas,
        }))?;
        let (meta_id, meta_decision) = if meta_reply.is_new() {
            let name = meta_reply.skill_name.clone().unwrap_or_default();
            match self.meta_by_name(&name) {
                Some(m) => (m.id, LinkDecision::Attached),
                None => {
                    let desc = meta_reply.skill_description.clone().unwrap_or_default();
                    (self.add_meta(&name, &desc)?, LinkDecision::Created)
                }
            }
        } else {
            match self.meta_by_name(&meta_reply.category) {
                Some(m) => (m.id, LinkDecision::Attached),
                None => return Err(StoreError::Invalid(format!("unknown category '{}'", meta_reply.category))),
            }
        };

        let existing_cores: Vec<CoreSummary> =
            self.core_skills_of(meta_id)?.into_iter().map(|c| self.core_summary(c)).collect();
        let core_reply = reasoner.core_skill(&prompts::core_skill(&CoreContext::Synthesize {
            goal,
            step_goals,
            existing: existing_cores.clone(),
        }))?;
        let (core_id, core_decision) = match (&core_reply.existing, &core_reply.new_skill) {
            (Some(name), None) => {
                if !existing_cores.iter().any(|c| &c.name == name) {
                    return Err(StoreError::Invalid(format!("'{name}' is not a core skill of the chosen category")));
                }
                let id = self.core_by_name(name).expect("listed").id;
                self.core_skills.get_mut(&id).expect("exists").execution_skill_ids.insert(exec_id);
                (id, LinkDecision::Attached)
            }
            (None, Some(draft)) => {
                let id = self.add_core(
                    &draft.name,
                    draft.params.clone(),
                    &draft.docstring,
                    draft.body.clone(),
                    &[exec_id],
                    &[meta_id],
                )?;
                (id, LinkDecision::Created)
            }
            _ => return Err(StoreError::Invalid("reply must either reuse or create a core skill".into())),
        };
        self.meta_skills.get_mut(&meta_id).expect("exists").core_skill_ids.insert(core_id);
        Ok(InsertionReport { execution_id: exec_id, meta_id, core_id, meta_decision, core_decision })
    }

    /// Records another sighting of an already stored trajectory.
    pub fn note_occurrence(&mut self, id: ExecId) -> Result<(), StoreError> {
        let e = self.execution_skills.get_mut(&id).ok_or_else(|| StoreError::Invalid(format!("unknown {id}")))?;
        e.occurrences += 1;
        self.revision += 1;
        Ok(())
    }

    /// Asks the model about every pair of same-arity core skills whose
    /// embeddings are at least `threshold` similar. The survivor takes over
    /// the other's execution links and meta memberships.
    pub fn merge_core_skills(&mut self, threshold: f64, reasoner: &Reasoner) -> Result<MergeReport, StoreError> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(StoreError::BadThreshold(threshold));
        }
        let mut report = MergeReport::default();
        let ids: Vec<CoreId> = self.core_skills.keys().copied().collect();
        let mut removed = BTreeSet::new();
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                if removed.contains(&a) {
                    break;
                }
                if removed.contains(&b) {
                    continue;
                }
                let (ca, cb) = (&self.core_skills[&a], &self.core_skills[&b]);
                if ca.params.len() != cb.params.len() || cosine(&ca.embedding, &cb.embedding) < threshold {
                    continue;
                }
                let ctx = CoreContext::Merge { candidates: vec![self.core_summary(ca), self.core_summary(cb)] };
                let reply = match reasoner.core_skill(&prompts::core_skill(&ctx)) {
                    Ok(r) => r,
                    Err(e) => {
                        report.failures.push((a, b, e.to_string()));
                        continue;
                    }
                };
                let (survivor, gone) = match reply.existing.as_deref() {
                    Some(n) if n == ca.name => (a, b),
                    Some(n) if n == cb.name => (b, a),
                    None if reply.new_skill.is_none() => {
                        report.declined.push((a, b));
                        continue;
                    }
                    _ => {
                        report.failures.push((a, b, "merge reply named neither candidate".into()));
                        continue;
                    }
                };
                let gone_core = self.core_skills.remove(&gone).expect("present");
                self.core_skills.get_mut(&survivor).expect("present").execution_skill_ids.extend(gone_core.execution_skill_ids);
                for m in self.meta_skills.values_mut() {
                    if m.core_skill_ids.remove(&gone) {
                        m.core_skill_ids.insert(survivor);
                    }
                }
                removed.insert(gone);
                self.revision += 1;
                report.merged.push(MergedPair { survivor, removed: gone });
            }
        }
        Ok(report)
    }

    /// A copy holding only execution skills from the given origins. Core
    /// skills left without executions, and meta skills left without cores,
    /// are dropped with them.
    pub fn restrict_to_origins(&self, origins: &[Origin]) -> SkillStore {
        let mut out = self.clone();
        out.execution_skills.retain(|_, e| origins.contains(&e.origin));
        let execs = &out.execution_skills;
        out.core_skills.retain(|_, c| {
            c.execution_skill_ids.retain(|id| execs.contains_key(id));
            !c.execution_skill_ids.is_empty()
        });
        let cores = &out.core_skills;
        out.meta_skills.retain(|_, m| {
            m.core_skill_ids.retain(|id| cores.contains_key(id));
            !m.core_skill_ids.is_empty()
        });
        out
    }

    /// Full reference walk. Returns every violation found.
    pub fn check_integrity(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let dim = self.dimension();
        let mut names = BTreeSet::new();
        for e in self.execution_skills.values() {
            if let Err(m) = e.check() {
                errs.push(m);
            }
            if e.embedding.dimension() != dim {
                errs.push(format!("{} has embedding dimension {}", e.id, e.embedding.dimension()));
            }
        }
        for c in self.core_skills.values() {
            if let Err(m) = c.check() {
                errs.push(m);
            }
            if !names.insert(c.name.as_str()) {
                errs.push(format!("core skill name '{}' is not unique", c.name));
            }
            for id in &c.execution_skill_ids {
                if !self.execution_skills.contains_key(id) {
                    errs.push(format!("core skill {} references missing execution skill {id}", c.id));
                }
            }
            if !self.meta_skills.values().any(|m| m.core_skill_ids.contains(&c.id)) {
                errs.push(format!("core skill {} belongs to no meta skill", c.id));
            }
        }
        let mut meta_names = BTreeSet::new();
        for m in self.meta_skills.values() {
            if !meta_names.insert(m.name.as_str()) {
                errs.push(format!("meta skill name '{}' is not unique", m.name));
            }
            if m.description.trim().is_empty() {
                errs.push(format!("meta skill {} has no description", m.id));
            }
            for id in &m.core_skill_ids {
                if !self.core_skills.contains_key(id) {
                    errs.push(format!("meta skill {} references missing core skill {id}", m.id));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}
