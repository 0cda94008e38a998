//! Dense network substrate: MLPs, losses, Adam and gradient checking.

pub mod activation;
pub mod adam;
pub mod gradcheck;
pub mod loss;
pub mod mlp;

use serde::{Deserialize, Serialize};

pub use activation::Activation;
pub use adam::{adam_step, AdamState};
pub use loss::{cross_entropy, mse};
pub use mlp::{param_count, ForwardTrace, Gradients, Mlp};

use crate::benchmark::ErrorMetric;
use crate::error::{Error, Result};

/// Optimizer and run-length settings shared by every trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Cosine decay of the step size over `max_iterations` down to
    /// `learning_rate * final_lr_fraction`; `1.0` keeps it constant.
    pub final_lr_fraction: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    /// Number of minibatch updates.
    pub max_iterations: usize,
    pub error_bound: f64,
    pub error_metric: ErrorMetric,
    pub seed: u64,
    /// Multiplier on the prediction loss in the joint objective.
    pub prediction_loss_weight: f64,
    /// Training samples scored at the end of each epoch for the invocation
    /// trace (0 disables the trace).
    pub trace_samples: usize,
}

impl Default for TrainConfig {
    /// Desk-scale settings: 30k Adam steps of 256 samples at 3e-3, plain
    /// unweighted joint loss.
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.003,
            final_lr_fraction: 1.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 256,
            max_iterations: 30_000,
            error_bound: 0.05,
            error_metric: ErrorMetric::Absolute,
            seed: 0,
            prediction_loss_weight: 1.0,
            trace_samples: 2_000,
        }
    }
}

impl TrainConfig {
    /// Step size for update number `step` (1-based).
    pub fn learning_rate_at(&self, step: u64) -> f64 {
        if self.final_lr_fraction >= 1.0 {
            return self.learning_rate;
        }
        let progress = ((step.saturating_sub(1)) as f64 / self.max_iterations.max(1) as f64).min(1.0);
        let floor = self.learning_rate * self.final_lr_fraction;
        floor + 0.5 * (self.learning_rate - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_owned()));
        if !(self.error_bound > 0.0) {
            return bad("error_bound must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be >= 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and > 0");
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return bad("final_lr_fraction must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be > 0");
        }
        if !(self.prediction_loss_weight >= 0.0) {
            return bad("prediction_loss_weight must be >= 0");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn invariants_are_enforced() {
        let base = TrainConfig::default();
        for cfg in [
            TrainConfig { error_bound: 0.0, ..base.clone() },
            TrainConfig { batch_size: 0, ..base.clone() },
            TrainConfig { max_iterations: 0, ..base.clone() },
            TrainConfig { learning_rate: f64::NAN, ..base.clone() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
