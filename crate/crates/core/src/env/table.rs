use super::{one_hot, Dynamics, EnvError, EnvSpec, Outcome, TransitionRow};

/// An environment given by an explicit transition table. Used to build small
/// MDPs with a precise reward structure for the order-preservation checks.
#[derive(Debug, Clone)]
pub struct TableEnv {
    name: String,
    spec: EnvSpec,
    initial_state: usize,
    outcomes: Vec<Outcome>,
    terminal_states: Vec<bool>,
}

impl TableEnv {
    /// Builds from rows that must cover every `(state, action)` pair exactly
    /// once. States listed in `terminal_states` are made absorbing.
    pub fn new(
        name: impl Into<String>,
        state_count: usize,
        action_count: usize,
        initial_state: usize,
        terminal_states: &[usize],
        rows: &[TransitionRow],
        max_episode_len: usize,
    ) -> Result<Self, EnvError> {
        if state_count == 0 || action_count == 0 || max_episode_len == 0 {
            return Err(EnvError::InvalidParameters(
                "empty state/action set or zero horizon".into(),
            ));
        }
        if initial_state >= state_count {
            return Err(EnvError::InvalidParameters(format!(
                "initial state {initial_state} out of range"
            )));
        }
        let mut terminal = vec![false; state_count];
        for &s in terminal_states {
            if s >= state_count {
                return Err(EnvError::InvalidParameters(format!("terminal state {s} out of range")));
            }
            terminal[s] = true;
        }
        let mut outcomes: Vec<Option<Outcome>> = vec![None; state_count * action_count];
        for r in rows {
            if r.state >= state_count || r.next_state >= state_count || r.action >= action_count {
                return Err(EnvError::InvalidParameters(format!("row {r:?} out of range")));
            }
            let slot = &mut outcomes[r.state * action_count + r.action];
            if slot.is_some() {
                return Err(EnvError::InvalidParameters(format!(
                    "duplicate row for ({}, {})",
                    r.state, r.action
                )));
            }
            *slot = Some(Outcome {
                next_state: r.next_state,
                reward: r.reward,
                terminal: r.terminal || terminal[r.next_state],
            });
        }
        let mut filled = Vec::with_capacity(outcomes.len());
        for (i, o) in outcomes.into_iter().enumerate() {
            let (s, a) = (i / action_count, i % action_count);
            match o {
                Some(o) => filled.push(o),
                None if terminal[s] => filled.push(Outcome {
                    next_state: s,
                    reward: 0.0,
                    terminal: true,
                }),
                None => {
                    return Err(EnvError::InvalidParameters(format!("missing row for ({s}, {a})")));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            spec: EnvSpec {
                state_count,
                action_count,
                max_episode_len,
                feature_dim: state_count,
            },
            initial_state,
            outcomes: filled,
            terminal_states: terminal,
        })
    }

    /// Two branches from the start state. Action 0 wins `win_reward` on the
    /// third transition; action 1 loses with reward 0 on the fourth. With a
    /// discount below one, a large terminal punishment shrinks the short
    /// episode's return more than the long one's.
    pub fn discount_trap(win_reward: f64) -> Self {
        let row = |state, action, next_state, reward, terminal| TransitionRow {
            state,
            action,
            next_state,
            reward,
            terminal,
        };
        let mut rows = vec![row(0, 0, 1, 0.0, false), row(0, 1, 3, 0.0, false)];
        for a in 0..2 {
            rows.extend([
                row(1, a, 2, 0.0, false),
                row(2, a, 6, win_reward, true),
                row(3, a, 4, 0.0, false),
                row(4, a, 5, 0.0, false),
                row(5, a, 7, 0.0, true),
            ]);
        }
        Self::new("discount_trap", 8, 2, 0, &[6, 7], &rows, 8).expect("static table is valid")
    }

    /// Two-step episodes whose rewards mix magnitudes: the branch with the
    /// larger total has smaller individual rewards.
    pub fn mixed_rewards() -> Self {
        let row = |state, action, next_state, reward| TransitionRow {
            state,
            action,
            next_state,
            reward,
            terminal: false,
        };
        let rows = [
            row(0, 0, 1, 2.0),
            row(0, 1, 2, 3.0),
            row(1, 0, 3, 2.0),
            row(1, 1, 3, 1.0),
            row(2, 0, 3, 0.0),
            row(2, 1, 3, 1.0),
        ];
        Self::new("mixed_rewards", 4, 2, 0, &[3], &rows, 8).expect("static table is valid")
    }

    /// A corridor of `blocks * gap` steps where both actions advance. On the
    /// last step of block `k`, action 1 pays `k + 1` and action 0 pays nothing;
    /// all other steps pay 0. Every policy therefore sees sparsity lengths that
    /// are multiples of `gap`, with the first reward at index `gap - 1`.
    pub fn block_rewards(blocks: usize, gap: usize) -> Result<Self, EnvError> {
        if blocks == 0 || gap == 0 {
            return Err(EnvError::InvalidParameters("blocks and gap must be positive".into()));
        }
        let len = blocks * gap;
        let mut rows = Vec::with_capacity(2 * len);
        for t in 0..len {
            let rewarded = (t + 1) % gap == 0;
            for a in 0..2 {
                let reward = if rewarded && a == 1 {
                    ((t + 1) / gap) as f64
                } else {
                    0.0
                };
                rows.push(TransitionRow {
                    state: t,
                    action: a,
                    next_state: t + 1,
                    reward,
                    terminal: t + 1 == len,
                });
            }
        }
        Self::new(
            format!("block_rewards_{blocks}x{gap}"),
            len + 1,
            2,
            0,
            &[len],
            &rows,
            len,
        )
    }
}

impl Dynamics for TableEnv {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn spec(&self) -> EnvSpec {
        self.spec
    }

    fn initial_state(&self, _seed: u64) -> usize {
        self.initial_state
    }

    fn transition(&self, state: usize, action: usize) -> Outcome {
        self.outcomes[state * self.spec.action_count + action]
    }

    fn features(&self, state: usize) -> Vec<f64> {
        one_hot(self.spec.state_count, state)
    }

    fn is_terminal_state(&self, state: usize) -> bool {
        self.terminal_states[state]
    }
}
