use rand::Rng;

use super::{huber, ApproxError, RmspropState, UpdateSample};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layer {
    rows: usize,
    cols: usize,
    /// Offset of the row-major weight block in `params`.
    w: usize,
    /// Offset of the bias block.
    b: usize,
}

impl Layer {
    fn apply(&self, params: &[f64], input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let w = &params[self.w..self.w + self.rows * self.cols];
        let b = &params[self.b..self.b + self.rows];
        for (r, bias) in b.iter().enumerate() {
            let row = &w[r * self.cols..(r + 1) * self.cols];
            out.push(bias + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>());
        }
    }

    /// Accumulates parameter gradients for output gradient `dout` and adds
    /// the input gradient into `dinput`.
    fn backward(&self, params: &[f64], input: &[f64], dout: &[f64], grad: &mut [f64], dinput: &mut [f64]) {
        for (r, &d) in dout.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[self.b + r] += d;
            let base = self.w + r * self.cols;
            for c in 0..self.cols {
                grad[base + c] += d * input[c];
                dinput[c] += d * params[base + c];
            }
        }
    }
}

/// Fully connected Q-network with ReLU hidden layers and a linear output.
///
/// `widths = [input, hidden.., actions]`. With `dueling`, the last hidden layer
/// feeds a scalar value head and an advantage head, combined as
/// `V + A - mean(A)`. All parameters live in one flat vector (per layer:
/// weights row-major, then biases) which the optimizer and file format use
/// directly.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpQ {
    widths: Vec<usize>,
    dueling: bool,
    layers: Vec<Layer>,
    trunk: usize,
    params: Vec<f64>,
}

fn layer_plan(widths: &[usize], dueling: bool) -> Vec<(usize, usize)> {
    let n = widths.len();
    let mut shapes: Vec<(usize, usize)> = widths[..n - 1].windows(2).map(|w| (w[1], w[0])).collect();
    let last_hidden = widths[n - 2];
    if dueling {
        shapes.push((1, last_hidden));
    }
    shapes.push((widths[n - 1], last_hidden));
    shapes
}

impl MlpQ {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], dueling: bool, rng: &mut R) -> Result<Self, ApproxError> {
        let mut net = Self::zeroed(widths, dueling)?;
        for layer in net.layers.clone() {
            let limit = (6.0 / (layer.rows + layer.cols) as f64).sqrt();
            for p in &mut net.params[layer.w..layer.w + layer.rows * layer.cols] {
                *p = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    fn zeroed(widths: &[usize], dueling: bool) -> Result<Self, ApproxError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(ApproxError::ArchitectureMismatch(format!("invalid widths {widths:?}")));
        }
        let mut layers = Vec::new();
        let mut offset = 0;
        for (rows, cols) in layer_plan(widths, dueling) {
            layers.push(Layer {
                rows,
                cols,
                w: offset,
                b: offset + rows * cols,
            });
            offset += rows * cols + rows;
        }
        Ok(Self {
            widths: widths.to_vec(),
            dueling,
            trunk: widths.len() - 2,
            layers,
            params: vec![0.0; offset],
        })
    }

    /// Rebuilds a network from `(rows, cols)` layer shapes as stored on disk.
    pub fn from_layer_shapes(shapes: &[(usize, usize)], dueling: bool, params: Vec<f64>) -> Result<Self, ApproxError> {
        let heads = if dueling { 2 } else { 1 };
        if shapes.len() < heads {
            return Err(ApproxError::Format("too few layers".into()));
        }
        let trunk = &shapes[..shapes.len() - heads];
        let mut widths = vec![shapes[0].1];
        widths.extend(trunk.iter().map(|s| s.0));
        widths.push(shapes[shapes.len() - 1].0);
        let net = Self::zeroed(&widths, dueling)?;
        if net.layer_shapes() != shapes {
            return Err(ApproxError::Format(format!("inconsistent layer shapes {shapes:?}")));
        }
        if params.len() != net.params.len() {
            return Err(ApproxError::Format("parameter count mismatch".into()));
        }
        Ok(Self { params, ..net })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn is_dueling(&self) -> bool {
        self.dueling
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn action_count(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.rows, l.cols)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset and length of the advantage head's bias block (dueling only).
    pub fn advantage_bias_range(&self) -> Option<std::ops::Range<usize>> {
        self.dueling.then(|| {
            let l = self.layers[self.layers.len() - 1];
            l.b..l.b + l.rows
        })
    }

    /// Trunk activations (input first) and the head output: Q values, or
    /// `(V, A)` for a dueling net.
    fn forward(&self, x: &[f64]) -> (Vec<Vec<f64>>, Head) {
        let mut acts = Vec::with_capacity(self.trunk + 1);
        acts.push(x.to_vec());
        for layer in &self.layers[..self.trunk] {
            let mut out = Vec::with_capacity(layer.rows);
            layer.apply(&self.params, acts.last().expect("input present"), &mut out);
            for v in &mut out {
                *v = v.max(0.0);
            }
            acts.push(out);
        }
        let h = acts.last().expect("input present");
        let head = if self.dueling {
            let mut v = Vec::with_capacity(1);
            let mut a = Vec::with_capacity(self.action_count());
            self.layers[self.trunk].apply(&self.params, h, &mut v);
            self.layers[self.trunk + 1].apply(&self.params, h, &mut a);
            Head::Dueling(v[0], a)
        } else {
            let mut q = Vec::with_capacity(self.action_count());
            self.layers[self.trunk].apply(&self.params, h, &mut q);
            Head::Plain(q)
        };
        (acts, head)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ApproxError> {
        if x.len() != self.input_dim() {
            return Err(ApproxError::InputWidth {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn q_values(&self, x: &[f64]) -> Result<Vec<f64>, ApproxError> {
        self.check_input(x)?;
        Ok(self.forward(x).1.into_q())
    }

    /// Mean Huber loss over `batch` and its gradient w.r.t. the flat parameters.
    /// Only the taken action's output contributes.
    pub fn loss_and_gradient(&self, batch: &[UpdateSample<'_>], delta: f64) -> Result<(f64, Vec<f64>), ApproxError> {
        let mut grad = vec![0.0; self.params.len()];
        if batch.is_empty() {
            return Ok((0.0, grad));
        }
        let actions = self.action_count();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for s in batch {
            self.check_input(&s.obs.features)?;
            if s.action >= actions {
                return Err(ApproxError::ActionOutOfRange {
                    action: s.action,
                    actions,
                });
            }
            let (acts, head) = self.forward(&s.obs.features);
            let q = head.into_q();
            let (l, dl) = huber(q[s.action] - s.target, delta);
            loss += l;
            let g = dl * scale;

            let h = acts.last().expect("input present");
            let mut dh = vec![0.0; h.len()];
            if self.dueling {
                let dv = [g];
                let da: Vec<f64> = (0..actions)
                    .map(|k| if k == s.action { g } else { 0.0 } - g / actions as f64)
                    .collect();
                self.layers[self.trunk].backward(&self.params, h, &dv, &mut grad, &mut dh);
                self.layers[self.trunk + 1].backward(&self.params, h, &da, &mut grad, &mut dh);
            } else {
                let mut dq = vec![0.0; actions];
                dq[s.action] = g;
                self.layers[self.trunk].backward(&self.params, h, &dq, &mut grad, &mut dh);
            }
            for i in (0..self.trunk).rev() {
                for (d, a) in dh.iter_mut().zip(&acts[i + 1]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                let mut dprev = vec![0.0; acts[i].len()];
                self.layers[i].backward(&self.params, &acts[i], &dh, &mut grad, &mut dprev);
                dh = dprev;
            }
        }
        Ok((loss * scale, grad))
    }

    /// One RMSprop step on the mean Huber loss. Returns the loss before the step.
    pub fn update(
        &mut self,
        batch: &[UpdateSample<'_>],
        opt: &mut RmspropState,
        delta: f64,
    ) -> Result<f64, ApproxError> {
        if opt.accumulator().len() != self.params.len() {
            return Err(ApproxError::OptimizerMismatch(
                "RMSprop state sized for another network",
            ));
        }
        let (loss, grad) = self.loss_and_gradient(batch, delta)?;
        if !loss.is_finite() {
            return Err(ApproxError::NonFinite("loss"));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(ApproxError::NonFinite("gradient"));
        }
        opt.step(&mut self.params, &grad);
        Ok(loss)
    }

    pub fn clone_into(&self, dest: &mut MlpQ) -> Result<(), ApproxError> {
        if self.widths != dest.widths || self.dueling != dest.dueling {
            return Err(ApproxError::ArchitectureMismatch(format!(
                "{:?} (dueling={}) vs {:?} (dueling={})",
                self.widths, self.dueling, dest.widths, dest.dueling
            )));
        }
        dest.params.copy_from_slice(&self.params);
        Ok(())
    }
}

enum Head {
    Plain(Vec<f64>),
    Dueling(f64, Vec<f64>),
}

impl Head {
    fn into_q(self) -> Vec<f64> {
        match self {
            Head::Plain(q) => q,
            Head::Dueling(v, a) => combine_dueling(v, &a),
        }
    }
}

/// `Q = V + A - mean(A)`.
pub fn combine_dueling(value: f64, advantages: &[f64]) -> Vec<f64> {
    let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
    advantages.iter().map(|a| value + a - mean).collect()
}
