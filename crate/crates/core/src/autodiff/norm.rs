use super::tensor::Tensor;

/// Default running-statistics decay.
pub const BN_DECAY: f64 = 0.9;
/// Variance floor inside the normalization square root.
pub const BN_EPSILON: f64 = 1e-5;

/// How a batch-norm layer treats statistics during one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Batch statistics, running statistics updated.
    Train,
    /// Batch statistics, running statistics left untouched. Used when a
    /// network participates in the other network's update step.
    Frozen,
    /// Running statistics.
    Inference,
}

impl NormMode {
    pub fn uses_batch_stats(self) -> bool {
        !matches!(self, NormMode::Inference)
    }
}

/// Learnable affine parameters and running statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub decay: f64,
    pub epsilon: f64,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            decay: BN_DECAY,
            epsilon: BN_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// `running <- decay * running + (1 - decay) * batch`.
    pub fn update_running(&mut self, mean: &[f64], var: &[f64]) {
        let d = self.decay;
        for (r, m) in self.running_mean.iter_mut().zip(mean) {
            *r = d * *r + (1.0 - d) * m;
        }
        for (r, v) in self.running_var.iter_mut().zip(var) {
            *r = d * *r + (1.0 - d) * v;
        }
    }
}
