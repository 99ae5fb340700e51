use std::fmt::Write;

use super::{AblationTable, SuiteResult};

pub fn percent(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

/// Plain-text summary of one suite run.
pub fn report(result: &SuiteResult) -> String {
    let mut s = String::new();
    let c = &result.config;
    let _ = writeln!(s, "suite        {} tasks ({})", result.tasks.len(), short(&c.suite_digest));
    let _ = writeln!(s, "mode         {}", c.mode);
    let _ = writeln!(s, "ablation     {}", c.ablation.name);
    let _ = writeln!(s, "seed         {}", c.seed);
    let _ = writeln!(s, "store        {}", short(&c.store_digest));
    let _ = writeln!(s, "SR           {}", percent(result.success_rate));
    let _ = writeln!(s, "CR           {}", percent(result.completion_rate));
    let _ = writeln!(s, "skills       {}", result.skills_acquired);
    let _ = writeln!(s, "expansions   {}", result.expansions_total);
    let _ = writeln!(s);
    for t in &result.tasks {
        let o = &t.outcome;
        let mark = if o.success { "ok  " } else { "FAIL" };
        let _ = write!(s, "{mark} {:<40} {}/{}", t.task_id, o.checkpoints_completed, o.checkpoints_total);
        if let Some(e) = &t.error {
            let _ = write!(s, "  error: {e}");
        }
        let _ = writeln!(s);
    }
    s
}

/// One row per spec, in the order the specs were given.
pub fn report_table(table: &AblationTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>8} {:>8}  levels  origins  reflector", "spec", "SR", "CR");
    for row in &table.rows {
        let a = &row.spec;
        let levels = format!(
            "{}{}{}",
            if a.execution_level { 'E' } else { '-' },
            if a.core_level { 'C' } else { '-' },
            if a.meta_level { 'M' } else { '-' }
        );
        let origins = format!("{}{}", if a.offline_skills { "off" } else { "---" }, if a.online_skills { "+on" } else { "---" });
        match &row.result {
            Ok(r) => {
                let _ = writeln!(
                    s,
                    "{:<16} {:>8} {:>8}  {levels:<6}  {origins:<7}  {}",
                    a.name,
                    percent(r.success_rate),
                    percent(r.completion_rate),
                    if a.reflector { "on" } else { "off" }
                );
            }
            Err(e) => {
                let _ = writeln!(s, "{:<16} error: {e}", a.name);
            }
        }
    }
    s
}

fn short(d: &str) -> &str {
    &d[..d.len().min(12)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_render_with_one_decimal() {
        assert_eq!(percent(0.5), "50.0%");
        assert_eq!(percent(1.0), "100.0%");
        assert_eq!(percent(2.0 / 3.0), "66.7%");
    }
}
