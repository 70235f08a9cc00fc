use super::{Dynamics, EnvError, EnvSpec, Outcome};
use crate::rng::mix64;

pub const LEFT: usize = 0;
pub const STAY: usize = 1;
pub const RIGHT: usize = 2;

/// One-dimensional catch game.
///
/// A ball falls one row per step from `drop_height`; the paddle moves
/// left/right/stays on the bottom row. A catch pays +1 and a new ball appears
/// at the top, so rewards arrive exactly every `drop_height` steps. A miss ends
/// the episode with reward 0.
///
/// The column of each new ball is a fixed function of the previous ball column
/// and the paddle position, so the game is a deterministic MDP; only the first
/// column depends on the reset seed.
#[derive(Debug, Clone)]
pub struct DelayedCatch {
    width: usize,
    drop_height: usize,
    max_episode_len: usize,
}

impl DelayedCatch {
    pub fn new(width: usize, drop_height: usize, max_episode_len: usize) -> Result<Self, EnvError> {
        if width < 2 || drop_height == 0 {
            return Err(EnvError::InvalidParameters(format!(
                "catch needs width >= 2 and drop_height >= 1, got {width} and {drop_height}"
            )));
        }
        if width - 1 > drop_height {
            // otherwise some balls cannot be reached in time
            return Err(EnvError::InvalidParameters(format!(
                "width {width} too large for drop height {drop_height}"
            )));
        }
        if max_episode_len == 0 {
            return Err(EnvError::InvalidParameters("max_episode_len must be positive".into()));
        }
        Ok(Self {
            width,
            drop_height,
            max_episode_len,
        })
    }

    fn lost_state(&self) -> usize {
        self.width * self.drop_height * self.width
    }

    /// `height` is in `1..=drop_height`.
    pub fn encode(&self, ball: usize, height: usize, paddle: usize) -> usize {
        (ball * self.drop_height + (height - 1)) * self.width + paddle
    }

    pub fn decode(&self, state: usize) -> Option<(usize, usize, usize)> {
        if state >= self.lost_state() {
            return None;
        }
        let paddle = state % self.width;
        let rest = state / self.width;
        Some((rest / self.drop_height, rest % self.drop_height + 1, paddle))
    }
}

impl Dynamics for DelayedCatch {
    fn name(&self) -> String {
        format!("delayed_catch_{}x{}", self.width, self.drop_height)
    }

    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_count: self.lost_state() + 1,
            action_count: 3,
            max_episode_len: self.max_episode_len,
            feature_dim: 4,
        }
    }

    fn initial_state(&self, seed: u64) -> usize {
        let ball = (mix64(seed) % self.width as u64) as usize;
        self.encode(ball, self.drop_height, self.width / 2)
    }

    fn transition(&self, state: usize, action: usize) -> Outcome {
        let Some((ball, height, paddle)) = self.decode(state) else {
            return Outcome {
                next_state: state,
                reward: 0.0,
                terminal: true,
            };
        };
        let paddle = match action {
            LEFT => paddle.saturating_sub(1),
            RIGHT => (paddle + 1).min(self.width - 1),
            _ => paddle,
        };
        if height > 1 {
            return Outcome {
                next_state: self.encode(ball, height - 1, paddle),
                reward: 0.0,
                terminal: false,
            };
        }
        if paddle == ball {
            let next_ball = (3 * ball + paddle + 1) % self.width;
            Outcome {
                next_state: self.encode(next_ball, self.drop_height, paddle),
                reward: 1.0,
                terminal: false,
            }
        } else {
            Outcome {
                next_state: self.lost_state(),
                reward: 0.0,
                terminal: true,
            }
        }
    }

    fn features(&self, state: usize) -> Vec<f64> {
        match self.decode(state) {
            Some((ball, height, paddle)) => {
                let span = (self.width - 1) as f64;
                vec![
                    ball as f64 / span,
                    height as f64 / self.drop_height as f64,
                    paddle as f64 / span,
                    (ball as f64 - paddle as f64) / span,
                ]
            }
            None => vec![0.0; 4],
        }
    }

    fn is_terminal_state(&self, state: usize) -> bool {
        state == self.lost_state()
    }
}
