//! Q-function approximators.
//!
//! [`TabularQ`] indexes by state id and applies `Q <- Q + alpha (target - Q)`.
//! [`MlpQ`] is a small fully connected network (ReLU hidden layers, optional
//! dueling head) trained on the mean Huber loss with RMSprop.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Observation;

pub mod mlp;
mod rmsprop;
mod tabular;

pub use mlp::MlpQ;
pub use rmsprop::RmspropState;
pub use tabular::TabularQ;

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("state id {id} out of range for a table of {states} states")]
    StateOutOfRange { id: usize, states: usize },
    #[error("expected {expected} input features, got {got}")]
    InputWidth { expected: usize, got: usize },
    #[error("action {action} out of range for {actions} actions")]
    ActionOutOfRange { action: usize, actions: usize },
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("non-finite {0} encountered; update aborted")]
    NonFinite(&'static str),
    #[error("optimizer does not match approximator: {0}")]
    OptimizerMismatch(&'static str),
    #[error("malformed parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Huber loss and its derivative with respect to the error.
pub fn huber(error: f64, delta: f64) -> (f64, f64) {
    if error.abs() <= delta {
        (0.5 * error * error, error)
    } else {
        (delta * (error.abs() - 0.5 * delta), delta * error.signum())
    }
}

/// One regression example: move `Q(obs, action)` towards `target`.
#[derive(Debug, Clone, Copy)]
pub struct UpdateSample<'a> {
    pub obs: &'a Observation,
    pub action: usize,
    pub target: f64,
}

/// Which approximator to build, as written in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ApproxKind {
    Tabular,
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
    },
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}

#[derive(Debug, Clone, PartialEq)]
pub enum QApproximator {
    Tabular(TabularQ),
    Mlp(MlpQ),
}

/// Optimizer state matching a [`QApproximator`].
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    /// Step size of the tabular rule.
    Tabular {
        alpha: f64,
    },
    Rmsprop(RmspropState),
}

impl QApproximator {
    pub fn action_count(&self) -> usize {
        match self {
            QApproximator::Tabular(t) => t.action_count(),
            QApproximator::Mlp(m) => m.action_count(),
        }
    }

    pub fn q_values(&self, obs: &Observation) -> Result<Vec<f64>, ApproxError> {
        match self {
            QApproximator::Tabular(t) => t.q_values(obs.id).map(<[f64]>::to_vec),
            QApproximator::Mlp(m) => m.q_values(&obs.features),
        }
    }

    /// One optimization step on `batch`; returns the mean Huber loss before the step.
    pub fn update(
        &mut self,
        batch: &[UpdateSample<'_>],
        optimizer: &mut Optimizer,
        huber_delta: f64,
    ) -> Result<f64, ApproxError> {
        match (self, optimizer) {
            (QApproximator::Tabular(t), Optimizer::Tabular { alpha }) => t.update(batch, *alpha, huber_delta),
            (QApproximator::Mlp(m), Optimizer::Rmsprop(opt)) => m.update(batch, opt, huber_delta),
            (QApproximator::Tabular(_), _) => Err(ApproxError::OptimizerMismatch("tabular needs a step size")),
            (QApproximator::Mlp(_), _) => Err(ApproxError::OptimizerMismatch("MLP needs RMSprop")),
        }
    }

    /// Copies parameters into `dest`, which must have the same architecture.
    pub fn clone_into(&self, dest: &mut QApproximator) -> Result<(), ApproxError> {
        match (self, dest) {
            (QApproximator::Tabular(a), QApproximator::Tabular(b)) => a.clone_into(b),
            (QApproximator::Mlp(a), QApproximator::Mlp(b)) => a.clone_into(b),
            _ => Err(ApproxError::ArchitectureMismatch("tabular vs MLP".into())),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ApproxError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ApproxError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Binary layout, all integers `u64` and all values `f64`, little-endian:
    ///
    /// ```text
    /// magic "SPRBQFN1"
    /// kind        0 = tabular, 1 = MLP, 2 = dueling MLP
    /// L           number of layers (tabular: 1)
    /// L x (rows, cols)
    /// per layer: rows*cols weights row-major, then rows biases (MLP only)
    /// ```
    ///
    /// A tabular table is one `states x actions` layer without biases. A dueling
    /// MLP stores the value head and then the advantage head as its last two layers.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), ApproxError> {
        w.write_all(MAGIC)?;
        match self {
            QApproximator::Tabular(t) => {
                write_u64(w, 0)?;
                write_u64(w, 1)?;
                write_u64(w, t.state_count() as u64)?;
                write_u64(w, t.action_count() as u64)?;
                for v in t.values() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            QApproximator::Mlp(m) => {
                write_u64(w, if m.is_dueling() { 2 } else { 1 })?;
                let shapes = m.layer_shapes();
                write_u64(w, shapes.len() as u64)?;
                for (rows, cols) in &shapes {
                    write_u64(w, *rows as u64)?;
                    write_u64(w, *cols as u64)?;
                }
                for v in m.params() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, ApproxError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ApproxError::Format("bad magic".into()));
        }
        let kind = read_u64(r)?;
        let layers = read_u64(r)? as usize;
        if layers == 0 || layers > 1024 {
            return Err(ApproxError::Format(format!("implausible layer count {layers}")));
        }
        let mut shapes = Vec::with_capacity(layers);
        for _ in 0..layers {
            shapes.push((read_u64(r)? as usize, read_u64(r)? as usize));
        }
        match kind {
            0 => {
                let (states, actions) = shapes[0];
                let values = read_f64s(r, states * actions)?;
                Ok(QApproximator::Tabular(TabularQ::from_values(states, actions, values)?))
            }
            1 | 2 => {
                let count: usize = shapes.iter().map(|(rows, cols)| rows * cols + rows).sum();
                let params = read_f64s(r, count)?;
                Ok(QApproximator::Mlp(MlpQ::from_layer_shapes(&shapes, kind == 2, params)?))
            }
            other => Err(ApproxError::Format(format!("unknown kind {other}"))),
        }
    }
}

const MAGIC: &[u8; 8] = b"SPRBQFN1";

fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, ApproxError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, ApproxError> {
    let mut out = Vec::with_capacity(n.min(1 << 24));
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}
