//! Shipped fixtures: apps, subtask families and composite templates.

pub mod apps;
pub mod families;
pub mod templates;

pub use apps::{apps, legacy_apps, APP_NAMES};
pub use families::{compose_instruction, find_families, task_from_instruction, Family, Match, DOMAINS, FAMILIES};
pub use templates::{adversarial_suite, composite_suite, composite_templates, ADVERSARIAL_TEMPLATES, TEMPLATES};
