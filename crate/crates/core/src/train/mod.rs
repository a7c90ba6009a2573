//! Optimisers, metrics and the training loops.

mod baselines;
mod config;
mod group;
mod metrics;
mod optim;

pub use baselines::{pretrain_teacher, train_dml, train_fitnet, train_kd, train_oad, train_single};
pub use config::{discriminator_seed, dropout_stream, projection_seed, student_seed, teacher_seed, TrainConfig};
pub use group::{
    ensemble_predict, evaluate, BestRecord, EpochReport, EvalSnapshot, GroupOutcome, GroupTrainer, Phase, RunSummary,
    StudentLosses,
};
pub use metrics::{evaluate_probs, micro_f1_from_counts, probabilities, select_best, MetricAccumulator, Metrics};
pub use optim::{adam_step, sgd_momentum_step, Optimizer, OptimizerConfig, OptimizerKind, ADAM_BETAS, ADAM_EPS};
