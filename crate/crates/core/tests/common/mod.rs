#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use mirage_core::fixtures::{compose_instruction, task_from_instruction, Family};
use mirage_core::guienv::TaskSpec;
use mirage_core::induction::{bootstrap, generate_corpus, write_corpus};
use mirage_core::provider::{Provider, Reasoner};
use mirage_core::sim::{MockProfile, SimProvider};
use mirage_core::skillstore::SkillStore;

pub fn sim() -> Reasoner {
    Reasoner::new(Arc::new(SimProvider::default()))
}

pub fn solver() -> Reasoner {
    Reasoner::new(Arc::new(SimProvider::new(MockProfile::solver())))
}

pub fn sim_provider() -> Arc<dyn Provider> {
    Arc::new(SimProvider::default())
}

/// The store learned from the shipped 60-trajectory corpus.
pub fn bootstrapped(reasoner: &Reasoner) -> SkillStore {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &generate_corpus(60, 3)).unwrap();
    let mut store = SkillStore::default();
    bootstrap(dir.path(), &mut store, reasoner, None).unwrap();
    store
}

/// A task chaining the given families, each with the first value of every
/// parameter pool.
pub fn task(id: &str, families: &[&str]) -> TaskSpec {
    let sentences: Vec<String> = families
        .iter()
        .map(|f| {
            let fam = Family::by_name(f).unwrap();
            let args: BTreeMap<String, String> =
                fam.param_names().into_iter().map(|p| (p.to_string(), Family::pool(p)[0].to_string())).collect();
            fam.sentence(&args)
        })
        .collect();
    task_from_instruction(id, "test", &compose_instruction(&sentences)).unwrap()
}
