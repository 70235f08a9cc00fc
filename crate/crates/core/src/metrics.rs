//! Evaluation arithmetic: per-run performance, average rank across
//! environments, improvement percentages.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::TrainHistory;

/// Episodes averaged by [`performance`].
pub const PERFORMANCE_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("missing cell for env `{env}`, method `{method}`")]
    MissingCell { env: String, method: String },
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("unknown env `{0}`")]
    UnknownEnv(String),
}

/// Performance of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub env: String,
    pub method: String,
    pub performance: f64,
    pub episodes_run: usize,
    pub seed: u64,
    /// Fewer than [`PERFORMANCE_WINDOW`] episodes; `performance` averages all of them.
    pub short_run: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Performance {
    pub value: f64,
    pub short_run: bool,
}

/// Mean of the last `min(100, len)` returns.
pub fn performance_of_returns(returns: &[f64]) -> Result<Performance, MetricsError> {
    if returns.is_empty() {
        return Err(MetricsError::EmptyHistory);
    }
    let tail = &returns[returns.len().saturating_sub(PERFORMANCE_WINDOW)..];
    Ok(Performance {
        value: tail.iter().sum::<f64>() / tail.len() as f64,
        short_run: returns.len() < PERFORMANCE_WINDOW,
    })
}

/// Mean unshaped environment return over the final 100 episodes.
pub fn performance(history: &TrainHistory) -> Result<Performance, MetricsError> {
    performance_of_returns(&history.env_returns())
}

/// Environments by methods; cells hold performance averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub envs: Vec<String>,
    pub methods: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl ComparisonTable {
    pub fn new(envs: Vec<String>, methods: Vec<String>) -> Self {
        let cells = vec![vec![None; methods.len()]; envs.len()];
        ComparisonTable { envs, methods, cells }
    }

    /// Averages runs per (env, method). Rows and columns keep first-seen order.
    pub fn from_runs(runs: &[RunResult]) -> Self {
        let mut envs: Vec<String> = Vec::new();
        let mut methods: Vec<String> = Vec::new();
        let mut sums: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
        for r in runs {
            let e = index_or_push(&mut envs, &r.env);
            let m = index_or_push(&mut methods, &r.method);
            let cell = sums.entry((e, m)).or_insert((0.0, 0));
            cell.0 += r.performance;
            cell.1 += 1;
        }
        let mut table = ComparisonTable::new(envs, methods);
        for ((e, m), (sum, n)) in sums {
            table.cells[e][m] = Some(sum / n as f64);
        }
        table
    }

    fn env_index(&self, env: &str) -> Result<usize, MetricsError> {
        self.envs
            .iter()
            .position(|e| e == env)
            .ok_or_else(|| MetricsError::UnknownEnv(env.into()))
    }

    fn method_index(&self, method: &str) -> Result<usize, MetricsError> {
        self.methods
            .iter()
            .position(|m| m == method)
            .ok_or_else(|| MetricsError::UnknownMethod(method.into()))
    }

    pub fn set(&mut self, env: &str, method: &str, value: f64) -> Result<(), MetricsError> {
        let (e, m) = (self.env_index(env)?, self.method_index(method)?);
        self.cells[e][m] = Some(value);
        Ok(())
    }

    pub fn get(&self, env: &str, method: &str) -> Result<Option<f64>, MetricsError> {
        Ok(self.cells[self.env_index(env)?][self.method_index(method)?])
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|row| row.iter().all(Option::is_some))
    }

    fn complete_row(&self, e: usize) -> Result<Vec<f64>, MetricsError> {
        self.cells[e]
            .iter()
            .enumerate()
            .map(|(m, c)| {
                c.ok_or_else(|| MetricsError::MissingCell {
                    env: self.envs[e].clone(),
                    method: self.methods[m].clone(),
                })
            })
            .collect()
    }

    /// `env,<method>...` with empty fields for missing cells.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "env,{}", self.methods.join(","))?;
        for (env, row) in self.envs.iter().zip(&self.cells) {
            let fields: Vec<String> = row
                .iter()
                .map(|c| c.map(|v| v.to_string()).unwrap_or_default())
                .collect();
            writeln!(out, "{env},{}", fields.join(","))?;
        }
        Ok(())
    }
}

fn index_or_push(list: &mut Vec<String>, item: &str) -> usize {
    match list.iter().position(|x| x == item) {
        Some(i) => i,
        None => {
            list.push(item.to_owned());
            list.len() - 1
        }
    }
}

/// Descending ranks (1 = best); tied values share the mean of their positions.
pub fn rank_descending(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Per-method ranks for each environment row.
pub fn ranks_per_env(table: &ComparisonTable) -> Result<Vec<Vec<f64>>, MetricsError> {
    (0..table.envs.len())
        .map(|e| Ok(rank_descending(&table.complete_row(e)?)))
        .collect()
}

/// Each method's rank averaged over environments. Requires a complete table.
pub fn average_rank(table: &ComparisonTable) -> Result<Vec<(String, f64)>, MetricsError> {
    let ranks = ranks_per_env(table)?;
    let n = ranks.len().max(1) as f64;
    Ok(table
        .methods
        .iter()
        .enumerate()
        .map(|(m, name)| (name.clone(), ranks.iter().map(|r| r[m]).sum::<f64>() / n))
        .collect())
}

/// `100 (P^s - P^o) / |P^o|`; positive means the strategy did better.
/// `None` when the baseline is zero.
pub fn improvement_pct(p_original: f64, p_strategy: f64) -> Option<f64> {
    if p_original == 0.0 {
        None
    } else {
        Some(100.0 * (p_strategy - p_original) / p_original.abs())
    }
}

/// Improvement of every method over `baseline`, per environment.
pub fn improvement_table(table: &ComparisonTable, baseline: &str) -> Result<Vec<Vec<Option<f64>>>, MetricsError> {
    let b = table.method_index(baseline)?;
    Ok(table
        .cells
        .iter()
        .map(|row| {
            row.iter()
                .map(|c| match (row[b], c) {
                    (Some(po), Some(ps)) => improvement_pct(po, *ps),
                    _ => None,
                })
                .collect()
        })
        .collect())
}

/// Mean of the defined improvements of `method` over `baseline`, or `None`
/// when no environment has one.
pub fn average_improvement(table: &ComparisonTable, baseline: &str, method: &str) -> Result<Option<f64>, MetricsError> {
    let m = table.method_index(method)?;
    let imp = improvement_table(table, baseline)?;
    let defined: Vec<f64> = imp.iter().filter_map(|row| row[m]).collect();
    Ok(if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    })
}

/// Percentage of environments where `method` strictly beats `baseline`.
/// Environments missing either cell are skipped.
pub fn percent_improved(table: &ComparisonTable, baseline: &str, method: &str) -> Result<f64, MetricsError> {
    let b = table.method_index(baseline)?;
    let m = table.method_index(method)?;
    let mut total = 0usize;
    let mut better = 0usize;
    for row in &table.cells {
        if let (Some(po), Some(ps)) = (row[b], row[m]) {
            total += 1;
            if ps > po {
                better += 1;
            }
        }
    }
    Ok(if total == 0 {
        0.0
    } else {
        100.0 * better as f64 / total as f64
    })
}
