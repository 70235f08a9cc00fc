//! Bounded replay memory with constant-time SP/RB shaping at sampling time.
//!
//! A zero-reward transition's backfilled reward depends on a reward that has
//! not happened yet, so incoming transitions wait in a pending list until a
//! *source* arrives: a transition whose post-SP reward is nonzero, or the end
//! of the episode. At that point each pending transition learns its distance
//! to the source and the source's value, and moves into the committed ring.
//! Sampling then needs one multiplication per item.

use std::collections::VecDeque;
use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::env::Observation;
use crate::shaping::{backfill_weight, ShapingConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Observation,
    pub action: usize,
    /// Unshaped environment reward.
    pub env_reward: f64,
    pub next_state: Observation,
    pub terminal: bool,
    /// Steps forward to the nearest nonzero post-SP reward in the episode.
    pub dist_to_source: Option<usize>,
    /// Post-SP value of that reward.
    pub source_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("cannot sample {requested} items from a memory holding {available}")]
    Underfilled { requested: usize, available: usize },
    #[error("replay capacity must be positive")]
    ZeroCapacity,
    #[error(transparent)]
    Shaping(#[from] crate::shaping::ShapingError),
}

/// A committed transition drawn by [`ReplayMemory::sample`], with its shaped reward.
#[derive(Debug, Clone, Copy)]
pub struct Sampled<'a> {
    pub transition: &'a Transition,
    pub shaped_reward: f64,
}

#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    config: ShapingConfig,
    committed: VecDeque<Transition>,
    pending: Vec<Transition>,
}

impl ReplayMemory {
    pub fn new(capacity: usize, config: ShapingConfig) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        config.validate()?;
        Ok(Self {
            capacity,
            config,
            committed: VecDeque::with_capacity(capacity.min(1 << 16)),
            pending: Vec::new(),
        })
    }

    pub fn config(&self) -> &ShapingConfig {
        &self.config
    }

    /// Committed (sampleable) transitions.
    pub fn len(&self) -> usize {
        self.committed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.committed.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn clear(&mut self) {
        self.committed.clear();
        self.pending.clear();
    }

    /// Appends one transition. Transitions must arrive in episode order.
    pub fn push(
        &mut self,
        state: Observation,
        action: usize,
        env_reward: f64,
        next_state: Observation,
        terminal: bool,
    ) {
        let own = self.config.punished(env_reward, terminal);
        self.pending.push(Transition {
            state,
            action,
            env_reward,
            next_state,
            terminal,
            dist_to_source: None,
            source_reward: None,
        });
        if own != 0.0 || terminal {
            self.finalize(own);
        }
    }

    fn finalize(&mut self, source: f64) {
        let last = self.pending.len() - 1;
        for (k, mut t) in self.pending.drain(..).enumerate() {
            if source != 0.0 {
                t.dist_to_source = Some(last - k);
                t.source_reward = Some(source);
            }
            if self.committed.len() == self.capacity {
                self.committed.pop_front();
            }
            self.committed.push_back(t);
        }
    }

    /// Shaped reward of a committed transition from its bookkeeping alone.
    pub fn shaped_reward(&self, t: &Transition) -> f64 {
        let own = self.config.punished(t.env_reward, t.terminal);
        if !self.config.rb_enabled {
            return own;
        }
        match (t.dist_to_source, t.source_reward) {
            (Some(d), Some(src)) => backfill_weight(d, self.config.lambda, self.config.l_min) * src,
            // no source: own reward is zero, otherwise it would be its own source
            _ => own,
        }
    }

    /// Uniform sampling with replacement from committed transitions.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<Sampled<'_>>, ReplayError> {
        let n = self.committed.len();
        if n < batch_size || n == 0 {
            return Err(ReplayError::Underfilled {
                requested: batch_size,
                available: n,
            });
        }
        Ok((0..batch_size)
            .map(|_| {
                let t = &self.committed[rng.gen_range(0..n)];
                Sampled {
                    transition: t,
                    shaped_reward: self.shaped_reward(t),
                }
            })
            .collect())
    }

    /// Committed transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = Sampled<'_>> + '_ {
        self.committed.iter().map(move |t| Sampled {
            transition: t,
            shaped_reward: self.shaped_reward(t),
        })
    }

    /// Tab-separated dump of committed transitions with columns
    /// `s a r_env s' terminal dist source`; missing bookkeeping is written as `-`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "s\ta\tr_env\ts_next\tterminal\tdist\tsource")?;
        for t in &self.committed {
            let dist = t.dist_to_source.map_or_else(|| "-".to_string(), |d| d.to_string());
            let src = t.source_reward.map_or_else(|| "-".to_string(), |r| r.to_string());
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.state.id, t.action, t.env_reward, t.next_state.id, t.terminal as u8, dist, src
            )?;
        }
        Ok(())
    }
}
