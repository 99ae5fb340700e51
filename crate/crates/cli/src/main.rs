mod commands;
mod config;
mod error;
mod lock;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{exit, CliError};

#[derive(Parser, Debug)]
#[command(name = "mirage", about = "Hierarchical GUI skills: learn, explore and benchmark", disable_version_flag = true)]
#[command(after_long_help = config::key_help())]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "MIRAGE_CONFIG")]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set search.branch=4`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    config_dump: bool,
    /// Print version information as JSON and exit.
    #[arg(long)]
    version: bool,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct Common {
    /// Root seed for every random choice.
    #[arg(long)]
    seed: Option<u64>,
    /// Skill store file.
    #[arg(long)]
    store: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a skill store from a directory of demonstration trajectories.
    InitSkills {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Use at most this many trajectories.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Explore a task suite with tree search and learn from the successes.
    Explore {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        suite: Option<PathBuf>,
        /// direct, mcts or sa-mcts.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        iterations: Option<u32>,
        /// Maximum sub-goals along one search path.
        #[arg(long)]
        depth: Option<u32>,
        /// Sub-goal proposals kept per expansion.
        #[arg(long)]
        branch: Option<u32>,
        /// Ask on the terminal before learning from each success.
        #[arg(long)]
        interactive_approval: bool,
        /// Directory for approved trajectories and the exploration report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a task suite and report success and completion rates.
    RunBench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        suite: Option<PathBuf>,
        /// direct, mcts or sa-mcts. Without it the ablation's own mode
        /// (direct for every preset) is used.
        #[arg(long)]
        mode: Option<String>,
        /// Preset name, comma-separated preset names, or a JSON/TOML spec file.
        #[arg(long, default_value = "all")]
        ablation: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write into a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Print the skill tree of a store.
    InspectSkills {
        #[command(flatten)]
        common: Common,
        /// Print machine-readable counts instead of the tree.
        #[arg(long)]
        json: bool,
    },
    /// Write a task suite as one JSON file per task.
    GenTasks {
        #[command(flatten)]
        common: Common,
        /// composite, adversarial or exploration.
        #[arg(long, default_value = "composite")]
        kind: String,
        /// Number of tasks (exploration only).
        #[arg(long, default_value_t = 30)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a demonstration corpus for init-skills.
    GenCorpus {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = mirage_core::induction::DEFAULT_CORPUS_SIZE)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn flags(cli: &Cli) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for o in &cli.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| CliError::input(format!("--set expects KEY=VALUE, got '{o}'")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    let (common, mode, iterations, suite, corpus, output) = match &cli.command {
        Some(Command::InitSkills { common, corpus, .. }) => (common, None, None, None, corpus.clone(), None),
        Some(Command::Explore { common, suite, mode, iterations, depth, branch, out: dir, .. }) => {
            if let Some(d) = depth {
                out.push(("search.depth".into(), d.to_string()));
            }
            if let Some(b) = branch {
                out.push(("search.branch".into(), b.to_string()));
            }
            (common, mode.clone(), *iterations, suite.clone(), None, dir.clone())
        }
        Some(Command::RunBench { common, suite, mode, out, .. }) => (common, mode.clone(), None, suite.clone(), None, out.clone()),
        Some(Command::InspectSkills { common, .. }) => (common, None, None, None, None, None),
        Some(Command::GenTasks { common, out, .. }) => (common, None, None, out.clone(), None, None),
        Some(Command::GenCorpus { common, out, .. }) => (common, None, None, None, out.clone(), None),
        None => return Ok(out),
    };
    let path = |p: PathBuf| p.to_string_lossy().into_owned();
    if let Some(s) = common.seed {
        out.push(("seed".into(), s.to_string()));
    }
    if let Some(s) = common.store.clone() {
        out.push(("paths.store".into(), path(s)));
    }
    if let Some(m) = mode {
        let m: mirage_core::samcts::SearchMode = m.parse().map_err(CliError::input)?;
        let canonical = serde_json::to_value(m).expect("modes serialize");
        out.push(("search.mode".into(), canonical.as_str().expect("string").to_string()));
    }
    if let Some(i) = iterations {
        out.push(("search.iterations".into(), i.to_string()));
    }
    if let Some(s) = suite {
        out.push(("paths.suite".into(), path(s)));
    }
    if let Some(c) = corpus {
        out.push(("paths.corpus".into(), path(c)));
    }
    if let Some(o) = output {
        out.push(("paths.output".into(), path(o)));
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.version {
        println!(
            "{}",
            serde_json::json!({
                "name": "mirage",
                "version": env!("CARGO_PKG_VERSION"),
                "store_schema": mirage_core::skillstore::SCHEMA_VERSION,
            })
        );
        return Ok(());
    }
    let flags = flags(&cli)?;
    let env = |k: &str| std::env::var(k).ok();
    let config = config::resolve(cli.config.as_deref(), &env, &flags).map_err(CliError::input)?;
    if cli.config_dump {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CliError::input("no command given; see --help"));
    };
    match command {
        Command::InitSkills { limit, .. } => commands::init_skills(&config, limit),
        Command::Explore { interactive_approval, out, .. } => commands::explore(&config, interactive_approval, out.is_some()),
        Command::RunBench { ablation, force, mode, .. } => commands::run_bench(&config, &ablation, force, mode.is_some()),
        Command::InspectSkills { json, .. } => commands::inspect_skills(&config, json),
        Command::GenTasks { kind, count, .. } => commands::gen_tasks(&config, &kind, count),
        Command::GenCorpus { count, .. } => commands::gen_corpus(&config, count),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
