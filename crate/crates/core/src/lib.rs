//! Online adversarial distillation for graph neural networks.

pub mod autodiff;
pub mod distill;
pub mod error;
pub mod graph;
pub mod matrix;
pub mod models;
pub mod rng;
pub mod sparse;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use sparse::SparseAdjacency;
