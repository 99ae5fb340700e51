//! An offline stand-in for the reasoning model.
//!
//! [`SimProvider`] answers every prompt role from the context block alone,
//! using the fixture families as its "world knowledge". Its competence is
//! set per app by a [`MockProfile`]:
//!
//! * familiar apps: plain instructions are carried out correctly;
//! * trap apps: at the committing step the operator reaches for the
//!   misleading control next to the right one, unless the instruction names
//!   the right control or a reviewer has already rejected the wrong one;
//! * unknown apps: the operator guesses from word overlap and declares
//!   success early.
//!
//! Step goals from function bodies are followed literally, so core skills
//! make unknown apps tractable. The exception is the committing tap, which
//! step-goal extraction records by purpose ("confirm to add contact") rather
//! than by caption: on a trap app the operator grounds that purpose to the
//! misleading control unless a reviewer rejects it, which takes a worked
//! example of the same screen.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::fixtures::{find_families, Family, Match, DOMAINS, FAMILIES};
use crate::guienv::{Action, ActionKind, Direction, StatusKind};
use crate::provider::prompts::{
    parse_context, ActionContext, CoreContext, CoreSummary, MetaContext, PlanContext, PlanMode, RankingContext,
    ReflectionContext, StepGoalContext, SubgoalStyle, TaskGenContext,
};
use crate::provider::{
    tokens, ActionReply, CoreSkillDraft, CoreSkillReply, MetaReply, ParamSpec, PlanReply, PromptRequest, Provider,
    ProviderError, RankingReply, ReflectionReply, Role, StepGoalReply, TaskListReply, NEW_SKILL_CATEGORY,
};
use crate::seed::SeedSplitter;
use crate::skillstore::Origin;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppClass {
    Familiar,
    Trap,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockProfile {
    pub name: String,
    pub classes: BTreeMap<String, AppClass>,
    /// Actions an unknown-app guess makes before declaring success.
    pub guess_budget: usize,
}

impl Default for MockProfile {
    fn default() -> Self {
        let mut classes = BTreeMap::new();
        for a in ["settings", "clock", "camera"] {
            classes.insert(a.to_string(), AppClass::Familiar);
        }
        for a in ["contacts", "messenger", "music", "recorder", "expense"] {
            classes.insert(a.to_string(), AppClass::Trap);
        }
        for a in ["notes", "calendar", "draw", "browser"] {
            classes.insert(a.to_string(), AppClass::Unknown);
        }
        Self { name: "default".into(), classes, guess_budget: 3 }
    }
}

impl MockProfile {
    /// Knows every shipped app well.
    pub fn solver() -> Self {
        let mut p = Self { name: "solver".into(), ..Self::default() };
        for c in p.classes.values_mut() {
            *c = AppClass::Familiar;
        }
        p
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default()),
            "solver" => Some(Self::solver()),
            _ => None,
        }
    }

    pub fn class(&self, app: &str) -> AppClass {
        self.classes.get(app).copied().unwrap_or(AppClass::Unknown)
    }
}

/// Name of a core skill with any `_vN` suffix removed.
pub fn base_name(name: &str) -> &str {
    match name.rfind("_v") {
        Some(i) if name[i + 2..].chars().all(|c| c.is_ascii_digit()) && i + 2 < name.len() => &name[..i],
        _ => name,
    }
}

const DETAIL_RE: &str = r"(?i)finish by tapping (?P<label>[^.]+?)\.";
const DISTRACTOR_RE: &str = r"(?i)^browse the (?P<app>\w+) app without changing anything";
const CONFIRM_RE: &str = r"(?i)^confirm to (?P<family>[a-z ]+)$";
const STEP_RE: &str = r"(?i)^tap the (?P<label>.+) (?P<noun>button|field|item|toggle|label)$";

fn re(cell: &'static OnceLock<Regex>, pat: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pat).expect("static regex"))
}

macro_rules! cached {
    ($pat:expr) => {{
        static CELL: OnceLock<Regex> = OnceLock::new();
        re(&CELL, $pat)
    }};
}

#[derive(Debug, Clone)]
pub struct SimProvider {
    id: String,
    profile: MockProfile,
}

impl SimProvider {
    pub fn new(profile: MockProfile) -> Self {
        Self { id: format!("sim-{}", profile.name), profile }
    }

    pub fn profile(&self) -> &MockProfile {
        &self.profile
    }
}

impl Default for SimProvider {
    fn default() -> Self {
        Self::new(MockProfile::default())
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("reply serializes")
}

fn missing(req: &PromptRequest) -> ProviderError {
    ProviderError::MissingScript { role: req.role, excerpt: req.user_text.chars().take(80).collect() }
}

impl Provider for SimProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn send(&self, req: &PromptRequest, _attempt: u32) -> Result<String, ProviderError> {
        let text = &req.user_text;
        let reply = match req.role {
            Role::StepGoalExtraction => to_json(&step_goal(&parse_context(text).ok_or_else(|| missing(req))?)),
            Role::CoreSkillSynthesis => to_json(&core_skill(&parse_context(text).ok_or_else(|| missing(req))?)),
            Role::MetaClassification => to_json(&meta(&parse_context(text).ok_or_else(|| missing(req))?)),
            Role::SubgoalPlanning => to_json(&plan(&parse_context(text).ok_or_else(|| missing(req))?)),
            Role::SubgoalRanking => to_json(&ranking(&parse_context(text).ok_or_else(|| missing(req))?)),
            Role::Reflection => to_json(&reflect(&parse_context(text).ok_or_else(|| missing(req))?)),
            Role::ActionDecision => to_json(&self.act(&parse_context(text).ok_or_else(|| missing(req))?)),
            Role::TaskGeneration => to_json(&generate(&parse_context(text).ok_or_else(|| missing(req))?)),
        };
        Ok(reply)
    }
}

// ---- labeling ------------------------------------------------------------------

/// The canonical step-goal phrase for an action.
pub fn describe_action(action: &Action, target: Option<&str>) -> String {
    match action {
        Action::OpenApp { app_name } => format!("open the {app_name} app"),
        Action::Click { .. } | Action::DoubleTap { .. } | Action::LongPress { .. } => match target {
            Some(t) => format!("tap the {t}"),
            None => "tap the screen".into(),
        },
        Action::InputText { text } => format!("type {text}"),
        Action::KeyboardEnter => "press enter".into(),
        Action::NavigateBack => "go back".into(),
        Action::NavigateHome => "go home".into(),
        Action::Wait => "wait".into(),
        Action::Scroll { direction } => format!("scroll {}", dir_word(*direction)),
        Action::Swipe { direction } => format!("swipe {}", dir_word(*direction)),
        Action::ClearText => "clear the field".into(),
        Action::Status { status } => format!("report the task as {status:?}").to_lowercase(),
        Action::Answer { text } => format!("answer {text}"),
    }
}

fn dir_word(d: Direction) -> &'static str {
    match d {
        Direction::Up => "up",
        Direction::Down => "down",
        Direction::Left => "left",
        Direction::Right => "right",
    }
}

/// Caption of a family's committing control on one release of its app.
fn confirm_label(f: &Family, legacy: bool) -> Option<String> {
    let (i, _) = f.confirm?;
    let steps = f.procedure(&BTreeMap::new(), legacy);
    cached!(STEP_RE).captures(steps.get(i)?).map(|c| c["label"].to_string())
}

/// The family whose committing control on `app` is captioned `label`.
fn committing_family(app: &str, label: &str) -> Option<&'static Family> {
    FAMILIES.iter().find(|f| {
        f.app == app && [false, true].into_iter().any(|legacy| confirm_label(f, legacy).is_some_and(|c| c.eq_ignore_ascii_case(label)))
    })
}

fn step_goal(ctx: &StepGoalContext) -> StepGoalReply {
    // A committing tap is remembered by what it achieves rather than by its
    // caption, so the phrase survives relabelling between app releases.
    if let (ActionKind::Click, Some(target)) = (ctx.action.kind(), ctx.target.as_deref()) {
        // Targets read "<caption> <noun>", e.g. "Save button".
        let caption = target.rsplit_once(' ').map_or(target, |(c, _)| c);
        if let Some(f) = committing_family(&ctx.before.app_name, caption) {
            return StepGoalReply {
                action_type: ActionKind::Click,
                description: format!("confirm to {}", f.name.replace('_', " ")),
            };
        }
    }
    StepGoalReply { action_type: ctx.action.kind(), description: describe_action(&ctx.action, ctx.target.as_deref()) }
}

// ---- skill abstraction ----------------------------------------------------------------

fn first_family(text: &str) -> Option<Match> {
    find_families(text).into_iter().next()
}

/// Replaces concrete argument values with `{param}` slots, longest value first.
fn templatize(steps: &[String], args: &BTreeMap<String, String>) -> Vec<String> {
    let mut pairs: Vec<(&String, &String)> = args.iter().filter(|(_, v)| !v.is_empty()).collect();
    pairs.sort_by_key(|(_, v)| std::cmp::Reverse(v.len()));
    steps
        .iter()
        .map(|s| {
            let mut out = s.clone();
            for (k, v) in &pairs {
                out = out.replace(v.as_str(), &format!("{{{k}}}"));
            }
            out
        })
        .collect()
}

fn slug(text: &str) -> String {
    let t: Vec<String> = tokens(text).into_iter().filter(|t| t.chars().all(|c| c.is_ascii_alphabetic())).take(4).collect();
    if t.is_empty() {
        "task".into()
    } else {
        t.join("_")
    }
}

fn core_skill(ctx: &CoreContext) -> CoreSkillReply {
    match ctx {
        CoreContext::Synthesize { goal, step_goals, existing } => {
            let (name, params, docstring, body) = match first_family(goal) {
                Some(m) => (
                    m.family.name.to_string(),
                    m.family.params.iter().map(|(n, d)| ParamSpec { name: n.to_string(), description: d.to_string() }).collect(),
                    m.family.phrasing.to_string(),
                    templatize(step_goals, &m.args),
                ),
                None => (slug(goal), Vec::new(), goal.clone(), step_goals.iter().map(|s| s.replace(['{', '}'], "")).collect()),
            };
            let same_family: Vec<&CoreSummary> = existing.iter().filter(|c| base_name(&c.name) == name).collect();
            if let Some(hit) = same_family.iter().find(|c| c.body == body) {
                return CoreSkillReply {
                    reason: format!("{} already covers these steps", hit.name),
                    existing: Some(hit.name.clone()),
                    new_skill: None,
                };
            }
            let name = if same_family.is_empty() { name } else { format!("{name}_v{}", same_family.len() + 1) };
            CoreSkillReply {
                reason: "no listed function performs these steps".into(),
                existing: None,
                new_skill: Some(CoreSkillDraft { name, params, docstring, body }),
            }
        }
        CoreContext::Merge { candidates } => {
            let same = candidates.len() == 2 && base_name(&candidates[0].name) == base_name(&candidates[1].name);
            if !same {
                return CoreSkillReply { reason: "these functions do different jobs".into(), existing: None, new_skill: None };
            }
            let keep = candidates.iter().find(|c| c.origins.contains(&Origin::Online)).unwrap_or(&candidates[0]);
            CoreSkillReply {
                reason: format!("same job; {} reflects the app as it is now", keep.name),
                existing: Some(keep.name.clone()),
                new_skill: None,
            }
        }
    }
}

fn domain_of(goal: &str) -> (&'static str, &'static str, Option<&'static str>) {
    match first_family(goal) {
        Some(m) => {
            let d = DOMAINS.iter().find(|d| d.0 == m.family.domain).expect("known domain");
            (d.0, d.1, Some(m.family.name))
        }
        None => ("Misc", "Tasks that fit no other category.", None),
    }
}

fn meta(ctx: &MetaContext) -> MetaReply {
    match ctx {
        MetaContext::Classify { goal, existing, .. } => {
            let (name, description, family) = domain_of(goal);
            if existing.iter().any(|m| m.name == name) {
                MetaReply {
                    reason: format!("the task belongs to {name}"),
                    category: name.into(),
                    skill_name: None,
                    skill_description: None,
                    skill_combination: None,
                }
            } else {
                MetaReply {
                    reason: "no listed category fits".into(),
                    category: NEW_SKILL_CATEGORY.into(),
                    skill_name: Some(name.into()),
                    skill_description: Some(description.into()),
                    skill_combination: Some(family.map(|f| vec![f.to_string()]).unwrap_or_default()),
                }
            }
        }
        MetaContext::Select { goal, candidates } => {
            let fams: Vec<&str> = find_families(goal).iter().map(|m| m.family.name).collect();
            let coverage = |cores: &[String]| fams.iter().filter(|f| cores.iter().any(|c| base_name(c) == **f)).count();
            let mut best = 0;
            for (i, c) in candidates.iter().enumerate() {
                if coverage(&c.cores) > coverage(&candidates[best].cores) {
                    best = i;
                }
            }
            let category = candidates.get(best).map(|c| c.name.clone()).unwrap_or_default();
            MetaReply {
                reason: format!("{category} offers the most relevant functions"),
                category,
                skill_name: None,
                skill_description: None,
                skill_combination: None,
            }
        }
    }
}

// ---- planning ------------------------------------------------------------------------

fn quote_args(f: &Family, args: &BTreeMap<String, String>) -> String {
    f.params.iter().map(|(p, _)| format!("{:?}", args.get(*p).cloned().unwrap_or_default())).collect::<Vec<_>>().join(", ")
}

/// The function to call for a family: one learned online if available.
fn pick_core<'a>(cores: &'a [CoreSummary], family: &str) -> Option<&'a CoreSummary> {
    let same: Vec<&CoreSummary> = cores.iter().filter(|c| base_name(&c.name) == family).collect();
    same.iter().find(|c| c.origins.contains(&Origin::Online)).or(same.first()).copied()
}

fn skill_call(ctx: &PlanContext, m: &Match) -> Option<String> {
    let core = pick_core(&ctx.cores, m.family.name)?;
    let category = ctx.category.clone().unwrap_or_else(|| "Skills".into());
    Some(format!("{category}.{}({})", core.name, quote_args(m.family, &m.args)))
}

pub fn detailed_sentence(m: &Match) -> String {
    let base = m.family.sentence(&m.args);
    match m.family.confirm {
        Some((i, _)) => {
            let step = m.family.procedure(&m.args, false)[i].clone();
            let label = cached!(STEP_RE).captures(&step).map(|c| c["label"].to_string());
            format!("{base} Finish by tapping {}.", label.unwrap_or(step))
        }
        None => format!("{base} Check each screen before tapping."),
    }
}

fn distractor(m: &Match) -> String {
    format!("Browse the {} app without changing anything.", m.family.app)
}

fn plan(ctx: &PlanContext) -> PlanReply {
    let matches = find_families(&ctx.goal);
    match ctx.mode {
        PlanMode::Plan => {
            let plans = matches.iter().map(|m| skill_call(ctx, m).unwrap_or_else(|| m.family.sentence(&m.args))).collect();
            PlanReply { reason: "one sub-goal per part of the task".into(), plans }
        }
        PlanMode::Propose { count } => {
            let Some(m) = matches.get(ctx.completed.len()) else {
                return PlanReply { reason: "every part is done".into(), plans: vec!["Report that the task is complete.".into()] };
            };
            let mut plans: Vec<String> = skill_call(ctx, m).into_iter().collect();
            plans.push(m.family.sentence(&m.args));
            plans.push(distractor(m));
            plans.push(detailed_sentence(m));
            plans.truncate(count.max(1));
            PlanReply { reason: format!("next part: {}", m.family.name), plans }
        }
    }
}

/// Prefers function calls, then plain restatements, then anything else.
/// The model over-values exploring the app relative to precise wording.
fn ranking(ctx: &RankingContext) -> RankingReply {
    let call = cached!(r"^\w+\.\w+\(");
    let detail = cached!(DETAIL_RE);
    let score = |c: &str| {
        if call.is_match(c) {
            3
        } else if detail.is_match(c) || c.contains("Check each screen") {
            0
        } else if first_family(c).is_some() {
            2
        } else {
            1
        }
    };
    let mut idx: Vec<usize> = (0..ctx.candidates.len()).collect();
    idx.sort_by_key(|&i| (std::cmp::Reverse(score(&ctx.candidates[i])), i));
    RankingReply { ranking: idx }
}

// ---- reflection -----------------------------------------------------------------------

fn reflect(ctx: &ReflectionContext) -> ReflectionReply {
    let kind = ctx.proposed.action.kind();
    let neutral = matches!(
        kind,
        ActionKind::Status | ActionKind::Wait | ActionKind::NavigateHome | ActionKind::NavigateBack | ActionKind::OpenApp
    );
    let here: Vec<_> =
        ctx.exemplars.iter().flat_map(|e| &e.steps).filter(|s| s.layout_digest == ctx.screen.layout).collect();
    let (score, reason) = if neutral || here.is_empty() {
        (6, "no worked example covers this screen".to_string())
    } else {
        let same_target = |t: &Option<String>| match (t, &ctx.proposed.target) {
            (Some(a), Some(b)) => a.eq_ignore_ascii_case(b),
            (None, None) => true,
            _ => false,
        };
        let agrees = here.iter().any(|s| {
            s.action_type == kind && (!ctx.proposed.action.needs_grounding() || same_target(&s.target))
        });
        if agrees {
            (9, "a worked example took the same action on this screen".into())
        } else {
            let seen: BTreeSet<String> = here.iter().map(|s| s.step_goal.clone()).collect();
            (2, format!("worked examples on this screen did: {}", seen.into_iter().collect::<Vec<_>>().join("; ")))
        }
    };
    ReflectionReply {
        caption: format!("{} on {}", ctx.screen.app_name, ctx.screen.screen_id),
        reason,
        state_change: format!("after '{}' the screen should move toward the sub-goal", ctx.proposed.description),
        score,
    }
}

// ---- acting --------------------------------------------------------------------------------

fn complete(description: &str) -> ActionReply {
    ActionReply::from_action(&Action::Status { status: StatusKind::Complete }, description)
}

/// Turns one step goal into an action, following its wording literally.
pub fn step_action(step: &str) -> ActionReply {
    let s = step.trim();
    let lower = s.to_lowercase();
    let open = cached!(r"(?i)^open the (?P<app>.+) app$");
    let tap = cached!(STEP_RE);
    let typ = cached!(r"(?i)^type (?P<text>.+)$");
    let scroll = cached!(r"(?i)^(?P<verb>scroll|swipe) (?P<dir>up|down|left|right)$");
    if let Some(c) = open.captures(s) {
        return ActionReply::from_action(&Action::OpenApp { app_name: c["app"].to_lowercase() }, s);
    }
    if let Some(c) = tap.captures(s) {
        let desc = format!("the {} {}", &c["label"], c["noun"].to_lowercase());
        return ActionReply::from_action(&Action::Click { coord: crate::guienv::Point::new(0, 0) }, desc);
    }
    if let Some(c) = typ.captures(s) {
        return ActionReply::from_action(&Action::InputText { text: c["text"].to_string() }, s);
    }
    if let Some(c) = scroll.captures(s) {
        let direction = match &c["dir"].to_lowercase()[..] {
            "up" => Direction::Up,
            "down" => Direction::Down,
            "left" => Direction::Left,
            _ => Direction::Right,
        };
        let a = if c["verb"].eq_ignore_ascii_case("scroll") { Action::Scroll { direction } } else { Action::Swipe { direction } };
        return ActionReply::from_action(&a, s);
    }
    let a = match lower.as_str() {
        "press enter" => Action::KeyboardEnter,
        "go back" => Action::NavigateBack,
        "go home" => Action::NavigateHome,
        "clear the field" => Action::ClearText,
        _ => Action::Wait,
    };
    ActionReply::from_action(&a, s)
}

impl SimProvider {
    fn act(&self, ctx: &ActionContext) -> ActionReply {
        if ctx.style == SubgoalStyle::Step {
            if let Some(c) = cached!(CONFIRM_RE).captures(&ctx.subgoal) {
                if let Some(f) = Family::by_name(&c["family"].to_lowercase().replace(' ', "_")) {
                    return self.commit(ctx, f);
                }
            }
            return step_action(&ctx.subgoal);
        }
        let Some(m) = first_family(&ctx.subgoal) else {
            if let Some(c) = cached!(DISTRACTOR_RE).captures(&ctx.subgoal) {
                if ctx.done.is_empty() {
                    return ActionReply::from_action(&Action::OpenApp { app_name: c["app"].to_lowercase() }, "open the app");
                }
            }
            return complete("nothing left to do for this sub-goal");
        };
        let i = ctx.done.len();
        match self.profile.class(m.family.app) {
            AppClass::Unknown => self.guess(ctx, &m, i),
            class => {
                let procedure = m.family.procedure(&m.args, false);
                let Some(step) = procedure.get(i) else {
                    return complete("the sub-goal is done");
                };
                if class == AppClass::Trap {
                    if let Some((ci, decoy)) = m.family.confirm {
                        let named = cached!(DETAIL_RE).is_match(&ctx.subgoal);
                        if i == ci && !named && !refused(ctx, decoy) {
                            return step_action(&format!("tap the {decoy} button"));
                        }
                    }
                }
                step_action(step)
            }
        }
    }

    /// Carries out "confirm to <family>": taps whichever release's committing
    /// control is on screen, or the decoy beside it on a trap app.
    fn commit(&self, ctx: &ActionContext, f: &Family) -> ActionReply {
        let captions: Vec<String> = [false, true].into_iter().filter_map(|legacy| confirm_label(f, legacy)).collect();
        let label = captions
            .iter()
            .find(|l| ctx.screen.elements.iter().any(|e| e.text.eq_ignore_ascii_case(l)))
            .or(captions.first());
        let Some(label) = label else { return step_action(&ctx.subgoal) };
        if self.profile.class(f.app) == AppClass::Trap {
            if let Some((_, decoy)) = f.confirm {
                if !refused(ctx, decoy) {
                    return step_action(&format!("tap the {decoy} button"));
                }
            }
        }
        step_action(&format!("tap the {label} button"))
    }

    /// Unfamiliar app: open it, poke at the controls whose labels share the
    /// most words with the instruction, then claim success.
    fn guess(&self, ctx: &ActionContext, m: &Match, i: usize) -> ActionReply {
        if i == 0 {
            return ActionReply::from_action(&Action::OpenApp { app_name: m.family.app.into() }, "open the app");
        }
        if i > self.profile.guess_budget {
            return complete("the sub-goal looks done");
        }
        let words: BTreeSet<String> = tokens(&ctx.subgoal).into_iter().collect();
        let tried = |label: &str| {
            let l = label.to_lowercase();
            ctx.done.iter().chain(&ctx.rejected).any(|d| d.to_lowercase().contains(&l))
        };
        let best = ctx
            .screen
            .elements
            .iter()
            .filter(|e| e.role != crate::guienv::ElementRole::Label && !tried(&e.text))
            .map(|e| (tokens(&e.text).iter().filter(|t| words.contains(*t)).count(), e))
            .max_by(|a, b| a.0.cmp(&b.0).then(std::cmp::Ordering::Greater));
        match best {
            Some((_, e)) => step_action(&format!("tap the {} {}", e.text, e.role.noun())),
            None => complete("the sub-goal looks done"),
        }
    }
}

fn refused(ctx: &ActionContext, decoy: &str) -> bool {
    ctx.rejected.iter().any(|r| r.to_lowercase().contains(&decoy.to_lowercase()))
}

// ---- task generation --------------------------------------------------------------------

fn generate(ctx: &TaskGenContext) -> TaskListReply {
    let names: BTreeSet<&str> = ctx.apps.iter().map(|a| a.name.as_str()).collect();
    let pool: Vec<&Family> = FAMILIES.iter().filter(|f| names.contains(f.app)).collect();
    let mut rng = SeedSplitter::new(ctx.seed).rng("task-generation");
    let mut out: Vec<String> = Vec::new();
    let avoid: BTreeSet<&str> = ctx.avoid.iter().map(String::as_str).collect();
    let mut attempts = 0;
    while out.len() < ctx.count && attempts < ctx.count * 50 && !pool.is_empty() {
        attempts += 1;
        let parts = if rng.gen_bool(0.5) { 1 } else { 2 };
        let mut fams: Vec<&Family> = Vec::new();
        while fams.len() < parts {
            let f = *pool.choose(&mut rng).expect("non-empty");
            if !fams.contains(&f) {
                fams.push(f);
            }
        }
        let mut args = BTreeMap::new();
        for f in &fams {
            for (p, _) in f.params {
                args.entry(p.to_string())
                    .or_insert_with(|| Family::pool(p).choose(&mut rng).copied().unwrap_or("x").to_string());
            }
        }
        let sentences: Vec<String> = fams.iter().map(|f| f.sentence(&args)).collect();
        let text = crate::fixtures::compose_instruction(&sentences);
        if !avoid.contains(text.as_str()) && !out.contains(&text) {
            out.push(text);
        }
    }
    TaskListReply { tasks: out }
}
