//! TOML experiment configs. Unknown keys are rejected everywhere.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sprb_core::env::EnvConfig;
use sprb_core::{AgentConfig, ShapingConfig, Variant};

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("invalid config {}", path.display()))
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(toml::from_str(text)?)
}

/// One training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub agent: AgentConfig,
    /// Write the final online network to `model.bin`.
    #[serde(default = "yes")]
    pub save_model: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridPoint {
    pub p: f64,
    pub lambda: f64,
}

/// Grid of runs: envs x variants x shapings x seeds.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub envs: Vec<EnvConfig>,
    #[serde(default)]
    pub variants: Vec<Variant>,
    /// Replicates per cell; run `k` uses seed `base_seed + k`.
    pub seeds: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "yes")]
    pub include_original: bool,
    /// SP-only punishments.
    #[serde(default)]
    pub p_grid: Vec<f64>,
    /// RB-only decays, each with its default truncation.
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
    /// SP followed by RB.
    #[serde(default)]
    pub hybrid: Vec<HybridPoint>,
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Agent settings shared by all cells. Must not set `variant`, `seed`
    /// or `shaping`.
    pub agent: toml::Table,
}

impl SweepConfig {
    pub fn shapings(&self) -> Vec<ShapingConfig> {
        let mut out = Vec::new();
        if self.include_original {
            out.push(ShapingConfig::none());
        }
        out.extend(self.p_grid.iter().map(|&p| ShapingConfig::sp(p)));
        out.extend(
            self.lambda_grid
                .iter()
                .map(|&l| ShapingConfig::rb(l, sprb_core::shaping::default_l_min(l))),
        );
        out.extend(
            self.hybrid
                .iter()
                .map(|h| ShapingConfig::hybrid(h.p, h.lambda, sprb_core::shaping::default_l_min(h.lambda))),
        );
        out
    }

    pub fn variants(&self) -> Result<Vec<Variant>> {
        if !self.variants.is_empty() {
            return Ok(self.variants.clone());
        }
        bail!("`variants` must list at least one of dqn, double_dqn, dueling_double_dqn")
    }

    /// Agent config for one cell.
    pub fn agent_for(&self, variant: Variant, shaping: &ShapingConfig, seed: u64) -> Result<AgentConfig> {
        for key in ["variant", "seed", "shaping"] {
            if self.agent.contains_key(key) {
                bail!("`agent.{key}` is set by the sweep grid and must not appear in [agent]");
            }
        }
        let mut table = self.agent.clone();
        table.insert("variant".into(), toml::Value::String(variant.label().into()));
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
        table.insert("shaping".into(), toml::Value::try_from(shaping)?);
        let cfg: AgentConfig = toml::Value::Table(table)
            .try_into()
            .context("invalid [agent] section")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.envs.is_empty() {
            bail!("empty grid: `envs` is empty");
        }
        if self.seeds == 0 {
            bail!("empty grid: `seeds` is 0");
        }
        let shapings = self.shapings();
        if shapings.is_empty() {
            bail!("empty grid: no shapings (set include_original, p_grid, lambda_grid or hybrid)");
        }
        for s in &shapings {
            s.validate().with_context(|| format!("shaping {}", s.label()))?;
        }
        for v in self.variants()? {
            self.agent_for(v, &ShapingConfig::none(), self.base_seed)?;
        }
        Ok(())
    }
}

/// A shaping to check exhaustively.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub gamma: f64,
    #[serde(default)]
    pub shaping: Option<ShapingConfig>,
    /// Use the per-step `r^2 + a` probe with this offset instead of `shaping`.
    #[serde(default)]
    pub square_plus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub env: EnvConfig,
    #[serde(default = "default_cap")]
    pub cap: u64,
    pub checks: Vec<CheckConfig>,
}

fn default_cap() -> u64 {
    sprb_core::verify::DEFAULT_POLICY_CAP
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.checks.is_empty() {
            bail!("`checks` is empty");
        }
        for (i, c) in self.checks.iter().enumerate() {
            if c.shaping.is_some() == c.square_plus.is_some() {
                bail!("checks[{i}]: set exactly one of `shaping` or `square_plus`");
            }
            if !(0.0..=1.0).contains(&c.gamma) {
                bail!("checks[{i}].gamma must lie in [0, 1], got {}", c.gamma);
            }
        }
        Ok(())
    }
}

/// Where sparsity-profiling actions come from.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySource {
    Random,
    /// The same action everywhere.
    Constant {
        action: usize,
    },
    /// One action per state id.
    Table {
        actions: Vec<usize>,
    },
    /// Greedy actions of a saved network, epsilon-greedy if `epsilon > 0`.
    Checkpoint {
        path: PathBuf,
        #[serde(default)]
        epsilon: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsityConfig {
    pub env: EnvConfig,
    pub policy: PolicySource,
    pub episodes: usize,
    #[serde(default)]
    pub seed: u64,
}
