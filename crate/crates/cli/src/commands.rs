use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mirage_core::fixtures::{adversarial_suite, apps, composite_suite};
use mirage_core::guienv::GuiEnv;
use mirage_core::harness::{self, load_suite, report, report_table, run_ablation_matrix, run_suite, AblationSpec, Bench};
use mirage_core::induction::{bootstrap, generate_corpus, generate_exploration_tasks, write_corpus};
use mirage_core::provider::{HashingEmbedder, HttpConfig, HttpProvider, Provider, Reasoner, ScriptedProvider};
use mirage_core::samcts::{self, Approver, AutoApprover, InteractiveApprover, ReplayBuffer, SearchError};
use mirage_core::sim::{MockProfile, SimProvider};
use mirage_core::skillstore::{SkillStore, StoreError};

use crate::config::{GlobalConfig, ProviderKind};
use crate::error::{CliError, CliResult};
use crate::lock::StoreLock;

fn reasoner(config: &GlobalConfig) -> CliResult<Reasoner> {
    let p = &config.provider;
    let provider: Arc<dyn Provider> = match p.kind {
        ProviderKind::Mock => {
            let profile = MockProfile::by_name(&p.profile)
                .ok_or_else(|| CliError::input(format!("unknown mock profile '{}' (expected default or solver)", p.profile)))?;
            Arc::new(SimProvider::new(profile))
        }
        ProviderKind::Scripted => Arc::new(ScriptedProvider::from_path(Path::new(&p.script)).map_err(|e| CliError::input(e.to_string()))?),
        ProviderKind::Http => {
            let http = HttpConfig {
                endpoint: p.endpoint.clone(),
                api_key: std::env::var(&p.api_key_env).ok(),
                model: p.model.clone(),
                timeout_secs: p.timeout_secs,
                max_in_flight: p.max_in_flight,
                trace: false,
            };
            Arc::new(HttpProvider::new(http).map_err(|e| CliError::input(e.to_string()))?)
        }
    };
    Ok(Reasoner::new(provider))
}

fn env() -> GuiEnv {
    GuiEnv::new(apps()).expect("shipped apps are valid")
}

fn load_store(path: &Path) -> CliResult<SkillStore> {
    if !path.exists() {
        return Err(CliError::input(format!("store file {} does not exist", path.display())));
    }
    SkillStore::load(path).map_err(|e| CliError::input(format!("cannot load store: {e}")))
}

fn save_store(store: &SkillStore, path: &Path) -> CliResult {
    store.save(path).map_err(|e| CliError::internal(format!("cannot save store: {e}")))
}

fn write(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

/// Copies the store next to itself under a timestamped name.
fn backup(path: &Path) -> CliResult<PathBuf> {
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut target = path.with_file_name(format!("{name}.{stamp}.bak"));
    let mut n = 1;
    while target.exists() {
        target = path.with_file_name(format!("{name}.{stamp}-{n}.bak"));
        n += 1;
    }
    fs::copy(path, &target).map_err(|e| CliError::internal(format!("cannot back up store: {e}")))?;
    Ok(target)
}

fn suite(config: &GlobalConfig) -> CliResult<Vec<mirage_core::guienv::TaskSpec>> {
    let dir = &config.paths.suite;
    if !dir.is_dir() {
        return Err(CliError::input(format!("suite directory {} does not exist", dir.display())));
    }
    let tasks = load_suite(dir).map_err(|e| CliError::input(e.to_string()))?;
    if tasks.is_empty() {
        return Err(CliError::input(format!("suite directory {} holds no tasks", dir.display())));
    }
    Ok(tasks)
}

pub fn init_skills(config: &GlobalConfig, limit: Option<usize>) -> CliResult {
    let corpus = &config.paths.corpus;
    if !corpus.is_dir() {
        return Err(CliError::input(format!("corpus directory {} does not exist", corpus.display())));
    }
    let reasoner = reasoner(config)?;
    let store_path = &config.paths.store;
    let _lock = StoreLock::acquire(store_path)?;
    let mut store = SkillStore::new(HashingEmbedder::new(config.embedder.dimension, config.embedder.seed));
    let report = bootstrap(corpus, &mut store, &reasoner, limit).map_err(|e| CliError::input(e.to_string()))?;
    save_store(&store, store_path)?;
    let (metas, cores, execs) = store.counts();
    println!("processed            {}", report.processed);
    println!("execution skills     {} created, {} duplicates", report.execution_skills_created, report.duplicates);
    println!("core skills          {} created, {} attached", report.core_skills_created, report.core_skills_attached);
    println!("meta skills          {} created", report.meta_skills_created);
    println!("failures             {}", report.failures.len());
    for f in &report.failures {
        println!("  {f}");
    }
    println!("store                {} ({metas} meta, {cores} core, {execs} execution)", store_path.display());
    Ok(())
}

pub fn explore(config: &GlobalConfig, interactive: bool, write_out: bool) -> CliResult {
    let tasks = suite(config)?;
    let reasoner = reasoner(config)?;
    let store_path = &config.paths.store;
    let _lock = StoreLock::acquire(store_path)?;
    let mut store = load_store(store_path)?;
    let before = store.revision();
    let saved = backup(store_path)?;
    log::info!("backed up store to {}", saved.display());

    let stdin = io::stdin();
    let mut interactive_approver;
    let mut auto = AutoApprover;
    let approver: &mut dyn Approver = if interactive {
        interactive_approver = InteractiveApprover::new(stdin.lock(), io::stderr());
        &mut interactive_approver
    } else {
        &mut auto
    };
    let result =
        samcts::explore(&mut store, &tasks, &env(), &reasoner, &config.agent, &config.search, approver, config.seed);
    let output = match result {
        Ok(o) => o,
        Err(SearchError::InputClosed) => return Err(CliError::input("approval input closed before every trajectory was reviewed")),
        Err(e) if e.is_provider() => return Err(CliError::provider(e.to_string())),
        Err(e) => return Err(CliError::internal(e.to_string())),
    };
    save_store(&store, store_path)?;
    let r = &output.report;
    if write_out {
        let out = &config.paths.output;
        let buffer: Vec<_> = output
            .approved
            .iter()
            .map(|t| samcts::BufferEntry { task_id: t.task_id.clone(), trajectory: t.clone(), approved: true })
            .collect();
        ReplayBuffer::save_dir(&buffer, &out.join("approved")).map_err(|e| CliError::internal(e.to_string()))?;
        let rollouts: String = output
            .searches
            .iter()
            .flat_map(|s| s.rollouts.iter().map(move |r| serde_json::json!({ "task_id": s.task_id, "rollout": r }).to_string() + "\n"))
            .collect();
        write(&out.join("rollouts.jsonl"), &rollouts)?;
        write(&out.join("exploration.json"), &(serde_json::to_string_pretty(r).expect("serializes") + "\n"))?;
    }
    println!("mode                 {}", r.mode);
    println!("iterations           {}", r.iterations.len());
    for it in &r.iterations {
        let ok = it.tasks.iter().filter(|t| t.success).count();
        let approved = it.tasks.iter().filter(|t| t.approved).count();
        println!(
            "  round {}: {ok}/{} solved, {approved} approved, {} skills learned, {} merged",
            it.index + 1,
            it.tasks.len(),
            it.induction.execution_skills_created,
            it.merge.merged.len()
        );
    }
    println!("skills acquired      {}", r.skills_acquired);
    println!("store revision       {before} -> {}", store.revision());
    if let Some(reason) = &r.aborted {
        return Err(CliError::provider(format!("provider failed, partial results saved: {reason}")));
    }
    Ok(())
}

fn ablations(arg: &str) -> CliResult<Vec<AblationSpec>> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("{arg}: {e}")))?;
        let spec: AblationSpec = if arg.ends_with(".toml") {
            toml::from_str(&text).map_err(|e| CliError::input(format!("{arg}: {e}")))?
        } else {
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{arg}: {e}")))?
        };
        return Ok(vec![spec]);
    }
    arg.split(',')
        .map(|name| {
            AblationSpec::preset(name.trim()).ok_or_else(|| {
                CliError::input(format!("unknown ablation '{name}' (presets: {})", harness::PRESETS.join(", ")))
            })
        })
        .collect()
}

fn prepare_out(dir: &Path, force: bool) -> CliResult {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(|e| CliError::output(format!("{}: {e}", dir.display())))?.next().is_some();
        if non_empty && !force {
            return Err(CliError::output(format!("output directory {} is not empty; pass --force to write into it", dir.display())));
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::output(format!("{}: {e}", dir.display())))
}

pub fn run_bench(config: &GlobalConfig, ablation: &str, force: bool, mode_given: bool) -> CliResult {
    let tasks = suite(config)?;
    let mut specs = ablations(ablation)?;
    if mode_given {
        for s in &mut specs {
            s.mode = config.search.mode;
        }
    }
    let store = load_store(&config.paths.store)?;
    let reasoner = reasoner(config)?;
    let out = &config.paths.output;
    prepare_out(out, force)?;
    let env = env();
    let bench = Bench { env: &env, store: &store, reasoner: &reasoner, agent: &config.agent, search: &config.search };
    if specs.len() > 1 {
        let table = run_ablation_matrix(bench, &tasks, &specs, config.seed).map_err(|e| CliError::input(e.to_string()))?;
        write(&out.join("result.json"), &(serde_json::to_string_pretty(&table).expect("serializes") + "\n"))?;
        let text = report_table(&table);
        write(&out.join("report.txt"), &text)?;
        print!("{text}");
        return Ok(());
    }
    let run = run_suite(bench, &tasks, &specs[0], config.seed).map_err(|e| CliError::input(e.to_string()))?;
    write(&out.join("result.json"), &run.result.to_json())?;
    run.write_traces(&out.join("traces")).map_err(|e| CliError::internal(e.to_string()))?;
    let text = report(&run.result);
    write(&out.join("report.txt"), &text)?;
    print!("{text}");
    println!("wallclock    {:.2}s", run.wallclock.as_secs_f64());
    Ok(())
}

pub fn inspect_skills(config: &GlobalConfig, json: bool) -> CliResult {
    let store = load_store(&config.paths.store)?;
    let (metas, cores, execs) = store.counts();
    if json {
        let v = serde_json::json!({
            "meta_skills": metas,
            "core_skills": cores,
            "execution_skills": execs,
            "revision": store.revision(),
            "digest": store.digest(),
        });
        println!("{}", serde_json::to_string_pretty(&v).expect("serializes"));
        return Ok(());
    }
    println!("{metas} meta, {cores} core, {execs} execution skills (revision {}, digest {})", store.revision(), &store.digest()[..12]);
    for m in store.meta_skills() {
        println!("{} {}: {}", m.id, m.name, m.description);
        for c in store.core_skills_of(m.id).map_err(|e: StoreError| CliError::input(e.to_string()))? {
            println!("  {} {}({}) - {} execution skill(s)", c.id, c.name, c.param_names().join(", "), c.execution_skill_ids.len());
            for id in &c.execution_skill_ids {
                if let Some(e) = store.execution(*id) {
                    let origin = serde_json::to_value(e.origin).expect("serializes");
                    println!("    {} {} [{}, {} step(s), seen {}x]", e.id, e.goal_text, origin.as_str().unwrap_or("?"), e.steps.len(), e.occurrences);
                }
            }
        }
    }
    Ok(())
}

pub fn gen_tasks(config: &GlobalConfig, kind: &str, count: usize) -> CliResult {
    let tasks = match kind {
        "composite" => composite_suite(config.seed).map_err(|e| CliError::internal(e.to_string()))?,
        "adversarial" => adversarial_suite(config.seed).map_err(|e| CliError::internal(e.to_string()))?,
        "exploration" => {
            let reasoner = reasoner(config)?;
            generate_exploration_tasks(&env(), &reasoner, count, config.seed, &[]).map_err(|e| CliError::provider(e.to_string()))?
        }
        other => return Err(CliError::input(format!("unknown task kind '{other}' (expected composite, adversarial or exploration)"))),
    };
    harness::write_suite(&config.paths.suite, &tasks).map_err(|e| CliError::internal(e.to_string()))?;
    println!("wrote {} task(s) to {}", tasks.len(), config.paths.suite.display());
    Ok(())
}

pub fn gen_corpus(config: &GlobalConfig, count: usize) -> CliResult {
    let corpus = generate_corpus(count, config.seed);
    write_corpus(&config.paths.corpus, &corpus).map_err(|e| CliError::internal(e.to_string()))?;
    println!("wrote {} trajectories to {}", corpus.len(), config.paths.corpus.display());
    Ok(())
}

