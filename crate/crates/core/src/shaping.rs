//! Self-punishment (SP) and reward-backfill (RB) over whole episodes.
//!
//! SP subtracts a constant `p` from the reward of every transition that enters
//! a terminal state. RB gives each zero-reward step a fraction of the closest
//! *future* nonzero reward in the same episode, weighted by `lambda^d` where
//! `d` is the distance to that reward, and cut off beyond `l_min` steps.
//! In hybrid mode SP runs first, so the punishment itself becomes a backfill
//! source.
//!
//! These functions work on complete episodes and are the reference for the
//! incremental bookkeeping in [`crate::replay`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `l_min` is chosen so that `lambda^l_min` drops below this by default.
pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapingError {
    #[error("rewards ({rewards}) and terminal flags ({flags}) differ in length")]
    LengthMismatch { rewards: usize, flags: usize },
    #[error("episode does not end in a terminal transition")]
    Unterminated,
    #[error("terminal flag set at index {0} before the end of the episode")]
    EarlyTerminal(usize),
    #[error("invalid shaping configuration: {0}")]
    InvalidConfig(String),
}

/// Shaping parameters. Fixed for the lifetime of a replay memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawShaping")]
pub struct ShapingConfig {
    pub sp_enabled: bool,
    /// Punishment magnitude.
    pub p: f64,
    pub rb_enabled: bool,
    /// Backfill decay in `[0, 1)`.
    pub lambda: f64,
    /// Backfill horizon: weights are nonzero for distances `0..=l_min`.
    pub l_min: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShaping {
    #[serde(default)]
    sp_enabled: bool,
    #[serde(default = "default_p")]
    p: f64,
    #[serde(default)]
    rb_enabled: bool,
    #[serde(default = "default_lambda")]
    lambda: f64,
    #[serde(default)]
    l_min: Option<usize>,
}

fn default_p() -> f64 {
    1.0
}

fn default_lambda() -> f64 {
    0.65
}

impl TryFrom<RawShaping> for ShapingConfig {
    type Error = ShapingError;

    fn try_from(raw: RawShaping) -> Result<Self, Self::Error> {
        let cfg = ShapingConfig {
            sp_enabled: raw.sp_enabled,
            p: raw.p,
            rb_enabled: raw.rb_enabled,
            lambda: raw.lambda,
            l_min: raw.l_min.unwrap_or_else(|| default_l_min(raw.lambda)),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self::none()
    }
}

impl ShapingConfig {
    /// No shaping: rewards pass through unchanged.
    pub fn none() -> Self {
        Self {
            sp_enabled: false,
            p: default_p(),
            rb_enabled: false,
            lambda: default_lambda(),
            l_min: default_l_min(default_lambda()),
        }
    }

    pub fn sp(p: f64) -> Self {
        Self {
            sp_enabled: true,
            p,
            ..Self::none()
        }
    }

    pub fn rb(lambda: f64, l_min: usize) -> Self {
        Self {
            rb_enabled: true,
            lambda,
            l_min,
            ..Self::none()
        }
    }

    pub fn hybrid(p: f64, lambda: f64, l_min: usize) -> Self {
        Self {
            sp_enabled: true,
            p,
            ..Self::rb(lambda, l_min)
        }
    }

    pub fn validate(&self) -> Result<(), ShapingError> {
        if self.sp_enabled && !(self.p > 0.0 && self.p.is_finite()) {
            return Err(ShapingError::InvalidConfig(format!(
                "p must be positive, got {}",
                self.p
            )));
        }
        if self.rb_enabled && !(0.0..1.0).contains(&self.lambda) {
            return Err(ShapingError::InvalidConfig(format!(
                "lambda must lie in [0, 1), got {}",
                self.lambda
            )));
        }
        if self.l_min == 0 {
            return Err(ShapingError::InvalidConfig("l_min must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        !self.sp_enabled && !self.rb_enabled
    }

    /// Reward after SP only.
    pub fn punished(&self, reward: f64, next_is_terminal: bool) -> f64 {
        if self.sp_enabled {
            apply_sp(reward, next_is_terminal, self.p)
        } else {
            reward
        }
    }

    /// Short stable name, e.g. `original`, `sp_p10`, `sp_p1+rb_l0.65`.
    pub fn label(&self) -> String {
        match (self.sp_enabled, self.rb_enabled) {
            (false, false) => "original".to_string(),
            (true, false) => format!("sp_p{}", self.p),
            (false, true) => format!("rb_l{}", self.lambda),
            (true, true) => format!("sp_p{}+rb_l{}", self.p, self.lambda),
        }
    }
}

/// Smallest `l >= 1` with `lambda^l < 1e-9`.
pub fn default_l_min(lambda: f64) -> usize {
    if !(0.0..1.0).contains(&lambda) {
        return 1;
    }
    let mut l = 1usize;
    while lambda.powi(l as i32) >= DEFAULT_TRUNCATION_EPS {
        l += 1;
    }
    l
}

pub fn apply_sp(reward: f64, next_is_terminal: bool, p: f64) -> f64 {
    if next_is_terminal {
        reward - p
    } else {
        reward
    }
}

/// Backfill weight for a step `d` transitions before its reward source:
/// `lambda^d` for `d <= l_min`, zero beyond.
pub fn backfill_weight(d: usize, lambda: f64, l_min: usize) -> f64 {
    if d > l_min {
        0.0
    } else {
        lambda.powi(d as i32)
    }
}

/// Total backfill weight a source distributes over a long enough gap,
/// `(1 - lambda^(1 + l_min)) / (1 - lambda)`.
pub fn constant_sum(lambda: f64, l_min: usize) -> f64 {
    (1.0 - lambda.powi(l_min as i32 + 1)) / (1.0 - lambda)
}

/// Backfills every zero reward from its nearest future nonzero reward.
/// Nonzero rewards are kept; zeros with no later source stay zero.
pub fn backfill_episode(rewards: &[f64], lambda: f64, l_min: usize) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut source: Option<(usize, f64)> = None;
    for i in (0..rewards.len()).rev() {
        let r = rewards[i];
        if r != 0.0 {
            out[i] = r;
            source = Some((i, r));
        } else if let Some((j, rj)) = source {
            out[i] = backfill_weight(j - i, lambda, l_min) * rj;
        }
    }
    out
}

fn check_episode(rewards: &[f64], terminals: &[bool]) -> Result<(), ShapingError> {
    if rewards.len() != terminals.len() {
        return Err(ShapingError::LengthMismatch {
            rewards: rewards.len(),
            flags: terminals.len(),
        });
    }
    match terminals.split_last() {
        Some((true, rest)) => match rest.iter().position(|&t| t) {
            Some(i) => Err(ShapingError::EarlyTerminal(i)),
            None => Ok(()),
        },
        _ => Err(ShapingError::Unterminated),
    }
}

/// SP, then RB, over one complete episode.
pub fn shape_episode(rewards: &[f64], terminals: &[bool], config: &ShapingConfig) -> Result<Vec<f64>, ShapingError> {
    check_episode(rewards, terminals)?;
    let punished: Vec<f64> = rewards
        .iter()
        .zip(terminals)
        .map(|(&r, &t)| config.punished(r, t))
        .collect();
    if config.rb_enabled {
        Ok(backfill_episode(&punished, config.lambda, config.l_min))
    } else {
        Ok(punished)
    }
}

/// Gaps between consecutive nonzero rewards in one episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityProfile {
    pub lengths: Vec<usize>,
    /// `None` when fewer than two nonzero rewards were seen.
    pub mean_length: Option<f64>,
    pub nonzero_count: usize,
    /// Steps from the episode start up to and including the first nonzero reward.
    pub lead: Option<usize>,
}

pub fn sparsity_lengths(rewards: &[f64]) -> SparsityProfile {
    let idx: Vec<usize> = rewards
        .iter()
        .enumerate()
        .filter(|(_, r)| **r != 0.0)
        .map(|(i, _)| i)
        .collect();
    let lengths: Vec<usize> = idx.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_length = if lengths.is_empty() {
        None
    } else {
        Some(lengths.iter().sum::<usize>() as f64 / lengths.len() as f64)
    };
    SparsityProfile {
        lengths,
        mean_length,
        nonzero_count: idx.len(),
        lead: idx.first().map(|i| i + 1),
    }
}

/// Any whole-episode reward reshaping. Implemented by [`ShapingConfig`] and
/// by the deliberately non-order-preserving probes in [`crate::verify`].
pub trait EpisodeShaper: Sync {
    fn label(&self) -> String;
    fn shape(&self, rewards: &[f64], terminals: &[bool]) -> Result<Vec<f64>, ShapingError>;
}

impl EpisodeShaper for ShapingConfig {
    fn label(&self) -> String {
        ShapingConfig::label(self)
    }

    fn shape(&self, rewards: &[f64], terminals: &[bool]) -> Result<Vec<f64>, ShapingError> {
        shape_episode(rewards, terminals, self)
    }
}
