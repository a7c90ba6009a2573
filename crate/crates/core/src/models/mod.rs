//! Student encoders (GCN, GAT, GraphSAGE) and GCN discriminators.

mod checkpoint;
mod config;
mod discriminator;
pub mod layers;
mod student;

pub use checkpoint::{Checkpoint, CheckpointModel, TensorRecord, CHECKPOINT_VERSION};
pub use config::{
    count_discriminator_parameters, count_parameters, group_parameter_total, presets, Activation, Arch, Benchmark,
    DiscriminatorConfig, ModelConfig,
};
pub use discriminator::Discriminator;
pub use student::{Access, Mode, StudentModel, StudentOutput};
pub(crate) use student::glorot;
