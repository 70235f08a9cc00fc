use std::path::Path;

use anyhow::{Context, Result};
use sprb_core::agent::train;
use sprb_core::metrics::performance;

use crate::config::TrainConfig;
use crate::output::{Outputs, Summary};

pub const HISTORY_FILE: &str = "history.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const MODEL_FILE: &str = "model.bin";

/// Runs one training cell and writes `history.csv`, `summary.txt` and
/// optionally `model.bin` into `out`. Nothing is left behind on failure.
pub fn run_train(cfg: &TrainConfig, out: &Path) -> Result<()> {
    let mut outputs = Outputs::new();
    let result = write_train(cfg, out, &mut outputs);
    if result.is_err() {
        outputs.remove_all();
    }
    result
}

fn write_train(cfg: &TrainConfig, out: &Path, outputs: &mut Outputs) -> Result<()> {
    let mut env = cfg.env.build().context("building environment")?;
    let (history, model) = train(&mut env, &cfg.agent)?;
    outputs.write(&out.join(HISTORY_FILE), |w| Ok(history.write_csv(w)?))?;

    let mut summary = Summary::new();
    summary
        .add("env", env.name())
        .add("variant", cfg.agent.variant.label())
        .add("shaping", cfg.agent.shaping.label())
        .add("seed", cfg.agent.seed)
        .add("episodes", history.len());
    if let Ok(perf) = performance(&history) {
        summary.add("performance", perf.value).add("short_run", perf.short_run);
    }
    if let Some(last) = history.records.last() {
        summary
            .add("total_steps", last.steps)
            .add("final_epsilon", last.epsilon);
    }
    summary.add("history", HISTORY_FILE);
    if cfg.save_model {
        let path = out.join(MODEL_FILE);
        outputs.track(&path);
        model
            .save(&path)
            .with_context(|| format!("saving {}", path.display()))?;
        summary.add("model", MODEL_FILE);
    }
    outputs.write_str(&out.join(SUMMARY_FILE), &summary.render())?;
    Ok(())
}
