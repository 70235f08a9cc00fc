use super::{huber, ApproxError, UpdateSample};

/// Dense `state x action` table, zero-initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    states: usize,
    actions: usize,
    values: Vec<f64>,
}

impl TabularQ {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            values: vec![0.0; states * actions],
        }
    }

    pub fn from_values(states: usize, actions: usize, values: Vec<f64>) -> Result<Self, ApproxError> {
        if values.len() != states * actions {
            return Err(ApproxError::ArchitectureMismatch(format!(
                "{} values for a {states}x{actions} table",
                values.len()
            )));
        }
        Ok(Self {
            states,
            actions,
            values,
        })
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    pub fn action_count(&self) -> usize {
        self.actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.actions + action] = value;
    }

    pub fn q_values(&self, state: usize) -> Result<&[f64], ApproxError> {
        if state >= self.states {
            return Err(ApproxError::StateOutOfRange {
                id: state,
                states: self.states,
            });
        }
        Ok(&self.values[state * self.actions..(state + 1) * self.actions])
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &TabularQ) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Applies `Q <- Q + alpha (target - Q)` for each sample in order.
    /// Returns the mean Huber loss measured before the batch.
    pub fn update(&mut self, batch: &[UpdateSample<'_>], alpha: f64, delta: f64) -> Result<f64, ApproxError> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let mut loss = 0.0;
        for s in batch {
            if s.action >= self.actions {
                return Err(ApproxError::ActionOutOfRange {
                    action: s.action,
                    actions: self.actions,
                });
            }
            let q = self.q_values(s.obs.id)?[s.action];
            loss += huber(q - s.target, delta).0;
        }
        let loss = loss / batch.len() as f64;
        if !loss.is_finite() {
            return Err(ApproxError::NonFinite("loss"));
        }
        for s in batch {
            let idx = s.obs.id * self.actions + s.action;
            self.values[idx] += alpha * (s.target - self.values[idx]);
        }
        Ok(loss)
    }

    pub fn clone_into(&self, dest: &mut TabularQ) -> Result<(), ApproxError> {
        if (self.states, self.actions) != (dest.states, dest.actions) {
            return Err(ApproxError::ArchitectureMismatch(format!(
                "{}x{} vs {}x{}",
                self.states, self.actions, dest.states, dest.actions
            )));
        }
        dest.values.copy_from_slice(&self.values);
        Ok(())
    }

    /// Greedy action per state, lowest index on ties.
    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.states)
            .map(|s| crate::agent::argmax(&self.values[s * self.actions..(s + 1) * self.actions]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Observation;

    #[test]
    fn fresh_table_is_zero() {
        let t = TabularQ::new(3, 2);
        assert_eq!(t.q_values(2).unwrap(), &[0.0, 0.0]);
        assert!(t.q_values(3).is_err());
    }

    #[test]
    fn update_rule() {
        let mut t = TabularQ::new(2, 2);
        let obs = Observation {
            id: 1,
            features: vec![],
        };
        let loss = t
            .update(
                &[UpdateSample {
                    obs: &obs,
                    action: 0,
                    target: 1.0,
                }],
                0.1,
                1.0,
            )
            .unwrap();
        assert_eq!(t.get(1, 0), 0.1);
        assert_eq!(loss, 0.5);
    }

    #[test]
    fn zero_error_leaves_table() {
        let mut t = TabularQ::from_values(1, 2, vec![0.5, 2.0]).unwrap();
        let obs = Observation {
            id: 0,
            features: vec![],
        };
        let loss = t
            .update(
                &[UpdateSample {
                    obs: &obs,
                    action: 1,
                    target: 2.0,
                }],
                0.5,
                1.0,
            )
            .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(t.values(), &[0.5, 2.0]);
    }

    #[test]
    fn clone_semantics() {
        let src = TabularQ::from_values(1, 2, vec![1.0, 2.0]).unwrap();
        let mut dst = TabularQ::new(1, 2);
        src.clone_into(&mut dst).unwrap();
        assert_eq!(src, dst);
        assert!(src.clone_into(&mut TabularQ::new(2, 2)).is_err());
    }

    #[test]
    fn non_finite_target_aborts() {
        let mut t = TabularQ::new(1, 1);
        let obs = Observation {
            id: 0,
            features: vec![],
        };
        let err = t.update(
            &[UpdateSample {
                obs: &obs,
                action: 0,
                target: f64::NAN,
            }],
            0.5,
            1.0,
        );
        assert!(matches!(err, Err(ApproxError::NonFinite(_))));
        assert_eq!(t.get(0, 0), 0.0);
    }
}
