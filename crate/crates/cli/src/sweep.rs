use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use sprb_core::agent::train;
use sprb_core::metrics::{
    average_improvement, average_rank, improvement_table, percent_improved, performance, ComparisonTable, RunResult,
};
use sprb_core::ShapingConfig;

use crate::config::SweepConfig;
use crate::output::{opt_f64, Outputs, Summary};

pub const MANIFEST_FILE: &str = "runs.csv";
pub const MANIFEST_HEADER: &str = "env,variant,shaping,seed,status,episodes_run,performance,short_run,history";
pub const BASELINE: &str = "original";

/// One row of the runs manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub env: String,
    pub variant: String,
    pub shaping: String,
    pub seed: u64,
    /// `ok`, or the failure message.
    pub status: String,
    pub episodes_run: usize,
    pub performance: Option<f64>,
    pub short_run: bool,
    /// History CSV relative to the sweep directory.
    pub history: String,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn method(&self) -> String {
        method_label(&self.variant, &self.shaping)
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.env,
            self.variant,
            self.shaping,
            self.seed,
            csv_field(&self.status),
            self.episodes_run,
            opt_f64(self.performance),
            self.short_run,
            self.history
        )
    }
}

pub fn method_label(variant: &str, shaping: &str) -> String {
    format!("{variant}/{shaping}")
}

fn csv_field(s: &str) -> String {
    let clean: String = s
        .chars()
        .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
        .collect();
    if clean.contains(',') || clean.contains('"') {
        format!("\"{}\"", clean.replace('"', "\"\""))
    } else {
        clean
    }
}

/// Splits one CSV line, honoring double-quoted fields.
pub fn split_csv(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

struct Cell {
    env_index: usize,
    env_label: String,
    variant: sprb_core::Variant,
    shaping: ShapingConfig,
    seed: u64,
}

/// Env labels, made unique by suffixing duplicates.
fn env_labels(cfg: &SweepConfig) -> Result<Vec<String>> {
    let mut labels: Vec<String> = Vec::new();
    for e in &cfg.envs {
        let base = e.build_dynamics()?.name();
        let mut label = base.clone();
        let mut k = 2;
        while labels.contains(&label) {
            label = format!("{base}_{k}");
            k += 1;
        }
        labels.push(label);
    }
    Ok(labels)
}

/// Runs every cell and writes per-run histories, the manifest and the
/// aggregate tables. Returns the manifest rows in cell order.
pub fn run_sweep(cfg: &SweepConfig, out: &Path, jobs: Option<usize>) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let labels = env_labels(cfg)?;
    let shapings = cfg.shapings();
    let variants = cfg.variants()?;
    let mut cells = Vec::new();
    for (env_index, env_label) in labels.iter().enumerate() {
        for &variant in &variants {
            for shaping in &shapings {
                for k in 0..cfg.seeds {
                    cells.push(Cell {
                        env_index,
                        env_label: env_label.clone(),
                        variant,
                        shaping: *shaping,
                        seed: cfg.base_seed + k,
                    });
                }
            }
        }
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let jobs = jobs.or(cfg.jobs).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let records: Vec<RunRecord> = pool.install(|| cells.par_iter().map(|c| run_cell(cfg, c, out)).collect());

    let mut outputs = Outputs::new();
    outputs.write(&out.join(MANIFEST_FILE), |w| {
        writeln!(w, "{MANIFEST_HEADER}")?;
        for r in &records {
            writeln!(w, "{}", r.csv_line())?;
        }
        Ok(())
    })?;
    let methods: Vec<String> = variants
        .iter()
        .flat_map(|v| shapings.iter().map(move |s| method_label(v.label(), &s.label())))
        .collect();
    aggregate(&records, &labels, &methods, out)?;
    Ok(records)
}

fn run_cell(cfg: &SweepConfig, cell: &Cell, out: &Path) -> RunRecord {
    let history_rel: PathBuf = ["runs", &cell.env_label, cell.variant.label(), &cell.shaping.label()]
        .iter()
        .collect::<PathBuf>()
        .join(format!("seed_{}.csv", cell.seed));
    let mut record = RunRecord {
        env: cell.env_label.clone(),
        variant: cell.variant.label().to_owned(),
        shaping: cell.shaping.label(),
        seed: cell.seed,
        status: "ok".into(),
        episodes_run: 0,
        performance: None,
        short_run: false,
        history: history_rel.to_string_lossy().replace('\\', "/"),
    };
    let result = (|| -> Result<()> {
        let agent = cfg.agent_for(cell.variant, &cell.shaping, cell.seed)?;
        let mut env = cfg.envs[cell.env_index].build()?;
        let (history, _) = train(&mut env, &agent)?;
        let mut outputs = Outputs::new();
        outputs.write(&out.join(&history_rel), |w| Ok(history.write_csv(w)?))?;
        record.episodes_run = history.len();
        if let Ok(p) = performance(&history) {
            record.performance = Some(p.value);
            record.short_run = p.short_run;
        }
        Ok(())
    })();
    if let Err(e) = result {
        record.status = format!("failed: {e:#}");
        record.history.clear();
        let _ = fs::remove_file(out.join(&history_rel));
    }
    record
}

/// Builds the comparison table and writes `comparison.csv`, `ranks.csv`,
/// `improvement.csv`, `improvement_summary.csv` and `summary.txt`.
///
/// `envs` and `methods` fix row and column order; methods are
/// `variant/shaping` labels. Ranks and improvements compare shapings within
/// each variant, against that variant's `original` column.
pub fn aggregate(records: &[RunRecord], envs: &[String], methods: &[String], out: &Path) -> Result<()> {
    let runs: Vec<RunResult> = records
        .iter()
        .filter(|r| r.ok())
        .filter_map(|r| {
            Some(RunResult {
                env: r.env.clone(),
                method: r.method(),
                performance: r.performance?,
                episodes_run: r.episodes_run,
                seed: r.seed,
                short_run: r.short_run,
            })
        })
        .collect();
    let seeded = ComparisonTable::from_runs(&runs);
    let mut table = ComparisonTable::new(envs.to_vec(), methods.to_vec());
    for e in envs {
        for m in methods {
            if let Ok(Some(v)) = seeded.get(e, m) {
                table.set(e, m, v)?;
            }
        }
    }

    let mut outputs = Outputs::new();
    outputs.write(&out.join("comparison.csv"), |w| Ok(table.write_csv(w)?))?;

    let mut variants: Vec<String> = Vec::new();
    for m in methods {
        let v = m.split('/').next().unwrap_or_default().to_owned();
        if !variants.contains(&v) {
            variants.push(v);
        }
    }
    let mut summary = Summary::new();
    let failed = records.iter().filter(|r| !r.ok()).count();
    summary
        .add("runs", records.len())
        .add("failed_runs", failed)
        .add("envs", envs.len())
        .add("methods", methods.len())
        .add("cells", envs.len() * methods.len())
        .add(
            "missing_cells",
            table.cells.iter().flatten().filter(|c| c.is_none()).count(),
        )
        .add("short_runs", records.iter().filter(|r| r.short_run).count());
    for r in records.iter().filter(|r| !r.ok()) {
        summary.add("gap", format!("{} {} seed {}: {}", r.env, r.method(), r.seed, r.status));
    }

    let mut rank_lines = vec!["variant,shaping,average_rank".to_owned()];
    let mut imp_lines = vec!["variant,shaping,env,improvement_pct".to_owned()];
    let mut imp_summary = vec!["variant,shaping,average_improvement_pct,percent_improved".to_owned()];
    for v in &variants {
        let cols: Vec<String> = methods
            .iter()
            .filter(|m| m.split('/').next() == Some(v))
            .cloned()
            .collect();
        let shaping_of = |m: &str| m.split_once('/').map(|x| x.1.to_owned()).unwrap_or_default();
        let mut sub = ComparisonTable::new(envs.to_vec(), cols.iter().map(|m| shaping_of(m)).collect());
        for e in envs {
            for m in &cols {
                if let Some(val) = table.get(e, m)? {
                    sub.set(e, &shaping_of(m), val)?;
                }
            }
        }
        match average_rank(&sub) {
            Ok(ranks) => {
                for (s, r) in ranks {
                    rank_lines.push(format!("{v},{s},{r}"));
                }
            }
            Err(e) => {
                summary.add("ranks_skipped", format!("{v}: {e}"));
            }
        }
        if sub.methods.iter().any(|m| m == BASELINE) {
            let imp = improvement_table(&sub, BASELINE)?;
            for (j, s) in sub.methods.iter().enumerate() {
                if s == BASELINE {
                    continue;
                }
                for (i, e) in envs.iter().enumerate() {
                    imp_lines.push(format!("{v},{s},{e},{}", opt_f64(imp[i][j])));
                }
                let avg = average_improvement(&sub, BASELINE, s)?;
                let pct = percent_improved(&sub, BASELINE, s)?;
                imp_summary.push(format!("{v},{s},{},{pct}", opt_f64(avg)));
            }
        }
    }
    let join = |lines: Vec<String>| lines.into_iter().map(|l| l + "\n").collect::<String>();
    outputs.write_str(&out.join("ranks.csv"), &join(rank_lines))?;
    outputs.write_str(&out.join("improvement.csv"), &join(imp_lines))?;
    outputs.write_str(&out.join("improvement_summary.csv"), &join(imp_summary))?;
    outputs.write_str(&out.join("summary.txt"), &summary.render())?;
    Ok(())
}

/// Reads a manifest written by [`run_sweep`].
pub fn read_manifest(path: &Path) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        bail!("{} is not a runs manifest (unexpected header)", path.display());
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let f = split_csv(l);
            if f.len() != 9 {
                bail!("{}: line {} has {} fields, expected 9", path.display(), i + 2, f.len());
            }
            let perf = if f[6].is_empty() { None } else { Some(f[6].parse()?) };
            Ok(RunRecord {
                env: f[0].clone(),
                variant: f[1].clone(),
                shaping: f[2].clone(),
                seed: f[3].parse()?,
                status: f[4].clone(),
                episodes_run: f[5].parse()?,
                performance: perf,
                short_run: f[7].parse()?,
                history: f[8].clone(),
            })
        })
        .collect()
}
