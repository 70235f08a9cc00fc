//! Deterministic, fully observable episodic environments.
//!
//! Every environment is a pure transition function over integer state ids
//! ([`Dynamics`]) wrapped by [`Env`], which tracks the current state and the
//! horizon cap. Keeping the dynamics pure lets the same object drive training,
//! exhaustive enumeration, and value iteration.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod catch;
pub mod chain;
pub mod cliff;
pub mod table;

pub use catch::DelayedCatch;
pub use chain::SparseChain;
pub use cliff::GridCliff;
pub use table::TableEnv;

/// Largest transition table [`enumerate_transitions`] will build.
pub const MAX_TABLE_ROWS: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EnvSpec {
    pub state_count: usize,
    pub action_count: usize,
    /// Horizon cap; reaching it ends the episode like any terminal state.
    pub max_episode_len: usize,
    pub feature_dim: usize,
}

/// A state as seen by an agent: its id (tabular methods) and a feature
/// vector (function approximators).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub id: usize,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next: Observation,
    /// Raw environment reward, never shaped.
    pub reward: f64,
    pub terminal: bool,
}

/// One application of the transition function, before the horizon cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub next_state: usize,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("step called before reset")]
    NotReset,
    #[error("step called on a finished episode; reset first")]
    EpisodeFinished,
    #[error("action {action} out of range for {action_count} actions")]
    InvalidAction { action: usize, action_count: usize },
    #[error("transition table would have {rows} rows, above the cap of {cap}")]
    TableTooLarge { rows: usize, cap: usize },
    #[error("invalid environment parameters: {0}")]
    InvalidParameters(String),
}

/// Pure deterministic dynamics over state ids `0..spec().state_count`.
///
/// Terminal states are absorbing: any action from them returns to the same
/// state with zero reward and `terminal = true`.
pub trait Dynamics: Send + Sync {
    fn name(&self) -> String;
    fn spec(&self) -> EnvSpec;
    /// Start state for the given seed.
    fn initial_state(&self, seed: u64) -> usize;
    fn transition(&self, state: usize, action: usize) -> Outcome;
    fn features(&self, state: usize) -> Vec<f64>;
    fn is_terminal_state(&self, state: usize) -> bool;
}

/// A running episode over some [`Dynamics`].
pub struct Env {
    dynamics: Box<dyn Dynamics>,
    spec: EnvSpec,
    state: Option<usize>,
    steps: usize,
    done: bool,
}

impl Env {
    pub fn new(dynamics: impl Dynamics + 'static) -> Self {
        Self::from_boxed(Box::new(dynamics))
    }

    pub fn from_boxed(dynamics: Box<dyn Dynamics>) -> Self {
        let spec = dynamics.spec();
        Self {
            dynamics,
            spec,
            state: None,
            steps: 0,
            done: false,
        }
    }

    pub fn spec(&self) -> EnvSpec {
        self.spec
    }

    pub fn name(&self) -> String {
        self.dynamics.name()
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn observe(&self, state: usize) -> Observation {
        Observation {
            id: state,
            features: self.dynamics.features(state),
        }
    }

    pub fn reset(&mut self, seed: u64) -> Observation {
        let s0 = self.dynamics.initial_state(seed);
        self.state = Some(s0);
        self.steps = 0;
        self.done = false;
        self.observe(s0)
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        let state = self.state.ok_or(EnvError::NotReset)?;
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        if action >= self.spec.action_count {
            return Err(EnvError::InvalidAction {
                action,
                action_count: self.spec.action_count,
            });
        }
        let out = self.dynamics.transition(state, action);
        self.steps += 1;
        let terminal = out.terminal || self.steps >= self.spec.max_episode_len;
        self.state = Some(out.next_state);
        self.done = terminal;
        Ok(StepResult {
            next: self.observe(out.next_state),
            reward: out.reward,
            terminal,
        })
    }

    /// Transitions taken since the last reset.
    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }
}

impl std::fmt::Debug for Env {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Env")
            .field("name", &self.dynamics.name())
            .field("state", &self.state)
            .field("steps", &self.steps)
            .field("done", &self.done)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionRow {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
    pub terminal: bool,
}

/// The full `(s, a) -> (s', r, terminal)` map of an enumerable environment.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    pub name: String,
    pub spec: EnvSpec,
    /// Start state for seed 0.
    pub initial_state: usize,
    rows: Vec<TransitionRow>,
    terminal_states: Vec<bool>,
}

impl TransitionTable {
    pub fn row(&self, state: usize, action: usize) -> &TransitionRow {
        &self.rows[state * self.spec.action_count + action]
    }

    pub fn rows(&self) -> &[TransitionRow] {
        &self.rows
    }

    pub fn is_terminal_state(&self, state: usize) -> bool {
        self.terminal_states[state]
    }

    /// States from which an action choice matters, i.e. non-terminal ones.
    pub fn decision_states(&self) -> Vec<usize> {
        (0..self.spec.state_count)
            .filter(|&s| !self.terminal_states[s])
            .collect()
    }

    /// Plain-text dump, one `s a s' r terminal` line per row.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.rows {
            writeln!(
                out,
                "{} {} {} {} {}",
                r.state, r.action, r.next_state, r.reward, r.terminal as u8
            )?;
        }
        Ok(())
    }
}

pub fn enumerate_transitions(dynamics: &dyn Dynamics) -> Result<TransitionTable, EnvError> {
    let spec = dynamics.spec();
    let rows_needed = spec.state_count.saturating_mul(spec.action_count);
    if rows_needed > MAX_TABLE_ROWS {
        return Err(EnvError::TableTooLarge {
            rows: rows_needed,
            cap: MAX_TABLE_ROWS,
        });
    }
    let mut rows = Vec::with_capacity(rows_needed);
    for state in 0..spec.state_count {
        for action in 0..spec.action_count {
            let out = dynamics.transition(state, action);
            rows.push(TransitionRow {
                state,
                action,
                next_state: out.next_state,
                reward: out.reward,
                terminal: out.terminal,
            });
        }
    }
    let terminal_states = (0..spec.state_count).map(|s| dynamics.is_terminal_state(s)).collect();
    Ok(TransitionTable {
        name: dynamics.name(),
        spec,
        initial_state: dynamics.initial_state(0),
        rows,
        terminal_states,
    })
}

/// Serializable environment selection, as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    SparseChain {
        n: usize,
        #[serde(default)]
        reward_positions: Option<Vec<usize>>,
        max_episode_len: usize,
    },
    GridCliff {
        width: usize,
        height: usize,
        max_episode_len: usize,
    },
    DelayedCatch {
        width: usize,
        drop_height: usize,
        max_episode_len: usize,
    },
    /// Short winning episode vs. long losing one; see [`TableEnv::discount_trap`].
    DiscountTrap { win_reward: f64 },
    /// See [`TableEnv::mixed_rewards`].
    MixedRewards,
    /// See [`TableEnv::block_rewards`].
    BlockRewards { blocks: usize, gap: usize },
}

impl EnvConfig {
    pub fn build_dynamics(&self) -> Result<Box<dyn Dynamics>, EnvError> {
        Ok(match self {
            EnvConfig::SparseChain {
                n,
                reward_positions,
                max_episode_len,
            } => {
                let positions = reward_positions.clone().unwrap_or_else(|| vec![n.saturating_sub(1)]);
                Box::new(SparseChain::new(*n, &positions, *max_episode_len)?)
            }
            EnvConfig::GridCliff {
                width,
                height,
                max_episode_len,
            } => Box::new(GridCliff::new(*width, *height, *max_episode_len)?),
            EnvConfig::DelayedCatch {
                width,
                drop_height,
                max_episode_len,
            } => Box::new(DelayedCatch::new(*width, *drop_height, *max_episode_len)?),
            EnvConfig::DiscountTrap { win_reward } => Box::new(TableEnv::discount_trap(*win_reward)),
            EnvConfig::MixedRewards => Box::new(TableEnv::mixed_rewards()),
            EnvConfig::BlockRewards { blocks, gap } => Box::new(TableEnv::block_rewards(*blocks, *gap)?),
        })
    }

    pub fn build(&self) -> Result<Env, EnvError> {
        Ok(Env::from_boxed(self.build_dynamics()?))
    }
}

pub(crate) fn one_hot(len: usize, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    if index < len {
        v[index] = 1.0;
    }
    v
}
