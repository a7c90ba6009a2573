use serde::{Deserialize, Serialize};

use super::optim::OptimizerConfig;
use crate::distill::{check_temperature, KlOrder, LossWeights, DEFAULT_TEMPERATURE};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, CounterStream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Epochs of independent cross-entropy training before distillation.
    pub epochs_warmup: usize,
    /// Epochs of online distillation.
    pub epochs_online: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub weights: LossWeights,
    pub temperature: f64,
    pub group_size: usize,
    pub kl_order: KlOrder,
}

impl TrainConfig {
    /// Citation settings: 100 + 100 epochs, Adam (lr 0.005, weight decay
    /// 5e-4), α = β = 1, four students.
    pub fn citation(seed: u64) -> Self {
        Self {
            epochs_warmup: 100,
            epochs_online: 100,
            optimizer: OptimizerConfig::adam(0.005, 5e-4),
            seed,
            weights: LossWeights { alpha: 1.0, beta: 1.0 },
            temperature: DEFAULT_TEMPERATURE,
            group_size: 4,
            kl_order: KlOrder::TargetStudent,
        }
    }

    /// Protein interaction settings: 50 + 50 epochs, Adam (lr 0.005, no
    /// weight decay), α = 1, β = 0.1, four students.
    pub fn ppi(seed: u64) -> Self {
        Self {
            epochs_warmup: 50,
            epochs_online: 50,
            optimizer: OptimizerConfig::adam(0.005, 0.0),
            weights: LossWeights { alpha: 1.0, beta: 0.1 },
            ..Self::citation(seed)
        }
    }

    /// Epoch budget of the single-model baselines.
    pub fn total_epochs(&self) -> usize {
        self.epochs_warmup + self.epochs_online
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.weights.validate()?;
        check_temperature(self.temperature)?;
        if self.group_size == 0 {
            return Err(Error::validation("group_size", "must be at least 1"));
        }
        Ok(())
    }
}

const STUDENT: u64 = 1;
const DISCRIMINATOR: u64 = 2;
const TEACHER: u64 = 3;
const PROJECTION: u64 = 4;

pub fn student_seed(base: u64, m: usize) -> u64 {
    derive_seed(base, &[STUDENT, m as u64])
}

pub fn discriminator_seed(base: u64, m: usize) -> u64 {
    derive_seed(base, &[DISCRIMINATOR, m as u64])
}

pub fn teacher_seed(base: u64) -> u64 {
    derive_seed(base, &[TEACHER])
}

pub fn projection_seed(base: u64) -> u64 {
    derive_seed(base, &[PROJECTION])
}

/// Dropout stream of a model at `(epoch, step)`. Every forward pass of the
/// same model at the same step replays the same masks.
pub fn dropout_stream(model_seed: u64, epoch: usize, step: usize) -> CounterStream {
    CounterStream::new(derive_seed(model_seed, &[epoch as u64, step as u64]))
}
