use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::Rng;
use sprb_core::agent::{argmax, select_action};
use sprb_core::rng::seeded;
use sprb_core::shaping::sparsity_lengths;
use sprb_core::QApproximator;

use crate::config::{PolicySource, SparsityConfig};
use crate::output::{opt_f64, Outputs, Summary};

pub const EPISODES_FILE: &str = "sparsity.csv";
pub const SUMMARY_FILE: &str = "sparsity_summary.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityResult {
    pub env: String,
    /// Mean gap between reward boundaries, counting the episode start as one.
    pub mean_sparsity_length: Option<f64>,
    /// Mean gap between consecutive nonzero rewards only.
    pub mean_consecutive_gap: Option<f64>,
    pub gap_count: usize,
}

/// Rolls `episodes` episodes under the configured policy and measures the
/// gaps between nonzero rewards.
pub fn run_sparsity(cfg: &SparsityConfig, out: &Path) -> Result<SparsityResult> {
    let mut env = cfg.env.build()?;
    let spec = env.spec();
    let model = match &cfg.policy {
        PolicySource::Checkpoint { path, .. } => {
            let q = QApproximator::load(path).with_context(|| format!("loading {}", path.display()))?;
            if q.action_count() != spec.action_count {
                bail!(
                    "checkpoint has {} actions, env has {}",
                    q.action_count(),
                    spec.action_count
                );
            }
            Some(q)
        }
        PolicySource::Table { actions } if actions.len() != spec.state_count => {
            bail!(
                "policy table has {} entries, env has {} states",
                actions.len(),
                spec.state_count
            )
        }
        PolicySource::Constant { action } if *action >= spec.action_count => {
            bail!("action {action} out of range for {} actions", spec.action_count)
        }
        _ => None,
    };

    let mut rng = seeded(cfg.seed);
    let mut rows = Vec::with_capacity(cfg.episodes);
    let mut all_gaps = Vec::new();
    let mut consecutive = Vec::new();
    for episode in 0..cfg.episodes {
        let mut obs = env.reset(rng.gen());
        let mut rewards = Vec::new();
        loop {
            let action = match &cfg.policy {
                PolicySource::Random => rng.gen_range(0..spec.action_count),
                PolicySource::Constant { action } => *action,
                PolicySource::Table { actions } => actions[obs.id],
                PolicySource::Checkpoint { epsilon, .. } => {
                    let q = model.as_ref().expect("loaded above").q_values(&obs)?;
                    if *epsilon > 0.0 {
                        select_action(&q, *epsilon, &mut rng)
                    } else {
                        argmax(&q)
                    }
                }
            };
            let step = env.step(action)?;
            rewards.push(step.reward);
            obs = step.next;
            if step.terminal {
                break;
            }
        }
        let profile = sparsity_lengths(&rewards);
        all_gaps.extend(profile.lead);
        all_gaps.extend(&profile.lengths);
        consecutive.extend(&profile.lengths);
        rows.push(format!(
            "{episode},{},{},{},{},{}",
            rewards.len(),
            rewards.iter().sum::<f64>(),
            profile.nonzero_count,
            profile.lead.map(|l| l.to_string()).unwrap_or_default(),
            opt_f64(profile.mean_length)
        ));
    }
    let mean = |v: &[usize]| (!v.is_empty()).then(|| v.iter().sum::<usize>() as f64 / v.len() as f64);
    let result = SparsityResult {
        env: env.name(),
        mean_sparsity_length: mean(&all_gaps),
        mean_consecutive_gap: mean(&consecutive),
        gap_count: all_gaps.len(),
    };

    let mut outputs = Outputs::new();
    outputs.write(&out.join(EPISODES_FILE), |w| {
        writeln!(w, "episode,length,env_return,nonzero,lead,mean_gap")?;
        for r in &rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;
    let mut summary = Summary::new();
    summary
        .add("env", &result.env)
        .add("episodes", cfg.episodes)
        .add("gaps", result.gap_count)
        .add("mean_sparsity_length", opt_f64(result.mean_sparsity_length))
        .add("mean_consecutive_gap", opt_f64(result.mean_consecutive_gap));
    outputs.write_str(&out.join(SUMMARY_FILE), &summary.render())?;
    Ok(result)
}
