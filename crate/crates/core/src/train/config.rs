use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which generator objective drives the θg update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Perceptual loss only; feature matching is still recorded.
    PerceptualOnly,
    /// Perceptual plus feature-matching loss.
    Final,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perceptual_only" | "perceptual" => Ok(LossMode::PerceptualOnly),
            "final" => Ok(LossMode::Final),
            other => Err(Error::Config(format!(
                "unknown loss mode '{other}' (expected perceptual_only or final)"
            ))),
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossMode::PerceptualOnly => "perceptual_only",
            LossMode::Final => "final",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Hard cap on iterations, applied after `epochs`.
    pub max_iterations: Option<u64>,
    pub d_steps_per_g_step: usize,
    pub loss_mode: LossMode,
    pub non_saturating: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0002,
            beta1: 0.5,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 64,
            epochs: 25,
            max_iterations: None,
            d_steps_per_g_step: 1,
            loss_mode: LossMode::Final,
            non_saturating: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch size {} too small for batch statistics (need >= 2)",
                self.batch_size
            )));
        }
        if self.d_steps_per_g_step == 0 {
            return Err(Error::Config("d_steps_per_g_step must be >= 1".into()));
        }
        Ok(())
    }

    /// Total iterations for a dataset of `n` images.
    pub fn total_iterations(&self, n: usize) -> u64 {
        let per_epoch = (n / self.batch_size / self.d_steps_per_g_step) as u64;
        let total = per_epoch * self.epochs as u64;
        self.max_iterations.map_or(total, |cap| total.min(cap))
    }
}
