/// RMSprop over a flat parameter vector:
///
/// ```text
/// acc   <- decay * acc + (1 - decay) * g^2
/// theta <- theta - lr * g / (sqrt(acc) + eps)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct RmspropState {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    accumulator: Vec<f64>,
}

impl RmspropState {
    pub fn new(param_count: usize, learning_rate: f64, decay: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            decay,
            epsilon,
            accumulator: vec![0.0; param_count],
        }
    }

    pub fn accumulator(&self) -> &[f64] {
        &self.accumulator
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        debug_assert_eq!(params.len(), self.accumulator.len());
        for ((p, g), acc) in params.iter_mut().zip(grad).zip(&mut self.accumulator) {
            *acc = self.decay * *acc + (1.0 - self.decay) * g * g;
            *p -= self.learning_rate * g / (acc.sqrt() + self.epsilon);
        }
    }
}
