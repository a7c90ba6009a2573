//! Experiment runner for online adversarial distillation: config-driven
//! runs, dynamic-graph and group-size sweeps, embedding export and dataset
//! conversion.

pub mod config;
pub mod convert;
pub mod embeddings;
pub mod error;
pub mod experiment;
pub mod output;

use oad_core::models::{count_discriminator_parameters, count_parameters};

pub use config::{ExperimentConfig, Method, ModelSpec};
pub use error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    pub student: usize,
    pub teacher: usize,
    pub discriminator: usize,
    /// `M` students with one discriminator each.
    pub group: usize,
}

/// Parameter counts of the configured models on `input_dim` features and
/// `num_classes` classes.
pub fn parameter_counts(cfg: &ExperimentConfig, input_dim: usize, num_classes: usize) -> Result<ParamCounts> {
    let student = cfg.student.build(cfg.arch, num_classes)?;
    let teacher = cfg.teacher.build(cfg.arch, num_classes)?;
    let s = count_parameters(&student, input_dim);
    let d = count_discriminator_parameters(&cfg.discriminator(), student.hidden_width(input_dim));
    Ok(ParamCounts {
        student: s,
        teacher: count_parameters(&teacher, input_dim),
        discriminator: d,
        group: cfg.train.group_size * (s + d),
    })
}
