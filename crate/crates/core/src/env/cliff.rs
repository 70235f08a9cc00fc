use super::{one_hot, Dynamics, EnvError, EnvSpec, Outcome};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

/// Cliff-walk grid. Start at `(0, 0)`, goal at `(width - 1, 0)` paying +1, and
/// the cells between them on the bottom row are a cliff that ends the episode
/// with reward 0. Without shaping, falling off the cliff is indistinguishable
/// from wandering until the horizon.
///
/// State id is `y * width + x`; moves into the outer wall leave the agent in place.
#[derive(Debug, Clone)]
pub struct GridCliff {
    width: usize,
    height: usize,
    max_episode_len: usize,
}

impl GridCliff {
    pub fn new(width: usize, height: usize, max_episode_len: usize) -> Result<Self, EnvError> {
        if width < 2 || height < 2 {
            return Err(EnvError::InvalidParameters(format!(
                "grid must be at least 2x2, got {width}x{height}"
            )));
        }
        if max_episode_len == 0 {
            return Err(EnvError::InvalidParameters("max_episode_len must be positive".into()));
        }
        Ok(Self {
            width,
            height,
            max_episode_len,
        })
    }

    pub fn cell(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn goal(&self) -> usize {
        self.cell(self.width - 1, 0)
    }

    pub fn is_cliff(&self, state: usize) -> bool {
        let (x, y) = (state % self.width, state / self.width);
        y == 0 && x > 0 && x < self.width - 1
    }
}

impl Dynamics for GridCliff {
    fn name(&self) -> String {
        format!("grid_cliff_{}x{}", self.width, self.height)
    }

    fn spec(&self) -> EnvSpec {
        EnvSpec {
            state_count: self.width * self.height,
            action_count: 4,
            max_episode_len: self.max_episode_len,
            feature_dim: self.width * self.height,
        }
    }

    fn initial_state(&self, _seed: u64) -> usize {
        0
    }

    fn transition(&self, state: usize, action: usize) -> Outcome {
        if self.is_terminal_state(state) {
            return Outcome {
                next_state: state,
                reward: 0.0,
                terminal: true,
            };
        }
        let (mut x, mut y) = (state % self.width, state / self.width);
        match action {
            UP => y = (y + 1).min(self.height - 1),
            DOWN => y = y.saturating_sub(1),
            LEFT => x = x.saturating_sub(1),
            _ => x = (x + 1).min(self.width - 1),
        }
        let next = self.cell(x, y);
        if next == self.goal() {
            Outcome {
                next_state: next,
                reward: 1.0,
                terminal: true,
            }
        } else {
            Outcome {
                next_state: next,
                reward: 0.0,
                terminal: self.is_cliff(next),
            }
        }
    }

    fn features(&self, state: usize) -> Vec<f64> {
        one_hot(self.width * self.height, state)
    }

    fn is_terminal_state(&self, state: usize) -> bool {
        state == self.goal() || self.is_cliff(state)
    }
}
