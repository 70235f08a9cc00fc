use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use sprb_core::agent::HISTORY_CSV_HEADER;
use sprb_core::metrics::performance_of_returns;

use crate::sweep::{aggregate, read_manifest, RunRecord};

/// `env_return` column of a history CSV.
pub fn read_env_returns(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_CSV_HEADER) {
        bail!("{} is not a training history (unexpected header)", path.display());
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let field = l.split(',').nth(1).context("missing env_return field")?;
            field
                .parse::<f64>()
                .with_context(|| format!("bad env_return `{field}` in {}", path.display()))
        })
        .collect()
}

/// Recomputes performance for every successful run from its history file
/// and rewrites the aggregate tables in `out`.
pub fn run_metrics(manifest: &Path, out: &Path) -> Result<Vec<RunRecord>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut records = read_manifest(manifest)?;
    for r in records.iter_mut().filter(|r| r.ok()) {
        let returns = read_env_returns(&base.join(&r.history))?;
        r.episodes_run = returns.len();
        match performance_of_returns(&returns) {
            Ok(p) => {
                r.performance = Some(p.value);
                r.short_run = p.short_run;
            }
            Err(_) => r.performance = None,
        }
    }
    let mut envs: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for r in &records {
        if !envs.contains(&r.env) {
            envs.push(r.env.clone());
        }
        if !methods.contains(&r.method()) {
            methods.push(r.method());
        }
    }
    fs::create_dir_all(out)?;
    aggregate(&records, &envs, &methods, out)?;
    Ok(records)
}
