use super::{one_hot, Dynamics, EnvError, EnvSpec, Outcome};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// A 1-D chain `0..n` starting at 0 with the goal at `n - 1`.
///
/// Moving right into one of `reward_positions` pays 1; every other step pays 0.
/// Spacing the reward positions controls the sparsity length seen by a policy
/// that walks right.
#[derive(Debug, Clone)]
pub struct SparseChain {
    n: usize,
    rewarded: Vec<bool>,
    max_episode_len: usize,
}

impl SparseChain {
    pub fn new(n: usize, reward_positions: &[usize], max_episode_len: usize) -> Result<Self, EnvError> {
        if n < 2 {
            return Err(EnvError::InvalidParameters(format!(
                "chain length must be at least 2, got {n}"
            )));
        }
        if max_episode_len == 0 {
            return Err(EnvError::InvalidParameters("max_episode_len must be positive".into()));
        }
        let mut rewarded = vec![false; n];
        for &p in reward_positions {
            if p == 0 || p >= n {
                return Err(EnvError::InvalidParameters(format!(
                    "reward position {p} must lie in 1..{n}"
                )));
            }
            rewarded[p] = true;
        }
        Ok(Self {
            n,
            rewarded,
            max_episode_len,
        })
    }

    /// Chain with a reward every `every` steps along the walk to the goal.
    pub fn evenly_rewarded(segments: usize, every: usize, max_episode_len: usize) -> Result<Self, EnvError> {
        let positions: Vec<usize> = (1..=segments).map(|k| k * every).collect();
        Self::new(segments * every + 1, &positions, max_episode_len)
    }

    pub fn goal(&self) -> usize {
        self.n - 1
    }
}

impl Dynamics for SparseChain {
    fn name(&self) -> String {
        format!("sparse_chain_{}", self.n)
    }

    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_count: self.n,
            action_count: 2,
            max_episode_len: self.max_episode_len,
            feature_dim: self.n,
        }
    }

    fn initial_state(&self, _seed: u64) -> usize {
        0
    }

    fn transition(&self, state: usize, action: usize) -> Outcome {
        if state == self.goal() {
            return Outcome {
                next_state: state,
                reward: 0.0,
                terminal: true,
            };
        }
        if action == RIGHT {
            let next = state + 1;
            Outcome {
                next_state: next,
                reward: if self.rewarded[next] { 1.0 } else { 0.0 },
                terminal: next == self.goal(),
            }
        } else {
            Outcome {
                next_state: state.saturating_sub(1),
                reward: 0.0,
                terminal: false,
            }
        }
    }

    fn features(&self, state: usize) -> Vec<f64> {
        one_hot(self.n, state)
    }

    fn is_terminal_state(&self, state: usize) -> bool {
        state == self.goal()
    }
}
