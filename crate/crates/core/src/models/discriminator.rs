use std::sync::Arc;

use super::config::{count_discriminator_parameters, DiscriminatorConfig};
use super::layers::gcn_layer;
use super::student::{glorot, read, Access};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::seeded_rng;
use crate::sparse::SparseAdjacency;

/// GCN stack scoring each node's embedding as real (1) or fake (0).
#[derive(Debug)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    input_dim: usize,
    seed: u64,
    layers: Vec<(Tensor, Tensor)>,
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig, input_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidArgument("discriminator input dimension must be positive".into()));
        }
        let mut rng = seeded_rng(seed);
        let mut d_in = input_dim;
        let layers = config
            .layer_dims
            .iter()
            .map(|&d| {
                let w = Tensor::param(glorot(&mut rng, d_in, d));
                let b = Tensor::param(Matrix::zeros(1, d));
                d_in = d;
                (w, b)
            })
            .collect();
        Ok(Self {
            config,
            input_dim,
            seed,
            layers,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (l, (w, b)) in self.layers.iter().enumerate() {
            out.push((format!("layers.{l}.weight"), w.clone()));
            out.push((format!("layers.{l}.bias"), b.clone()));
        }
        out
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(Tensor::numel).sum()
    }

    pub fn expected_parameters(&self) -> usize {
        count_discriminator_parameters(&self.config, self.input_dim)
    }

    pub fn zero_grad(&self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }

    /// Pre-sigmoid logits, `N x 1`. Losses work on these directly; the
    /// probability of "real" is their sigmoid.
    pub fn logits(&self, tape: &mut Tape, h: Var, a_norm: &Arc<SparseAdjacency>, access: Access) -> Result<Var> {
        let cols = tape.value(h).cols();
        if cols != self.input_dim {
            return Err(Error::shape("Discriminator::logits", self.input_dim, cols));
        }
        let mut x = h;
        for (l, (w, b)) in self.layers.iter().enumerate() {
            let (w, b) = (read(tape, w, access), read(tape, b, access));
            x = gcn_layer(tape, x, a_norm, w, b)?;
            if l + 1 < self.layers.len() {
                x = tape.relu(x)?;
            }
        }
        Ok(x)
    }

    pub fn scores(&self, tape: &mut Tape, h: Var, a_norm: &Arc<SparseAdjacency>, access: Access) -> Result<Var> {
        let z = self.logits(tape, h, a_norm, access)?;
        tape.sigmoid(z)
    }

    pub(crate) fn from_named(config: DiscriminatorConfig, input_dim: usize, seed: u64, named: &[(String, Matrix)]) -> Result<Self> {
        let d = Self::new(config, input_dim, seed)?;
        super::checkpoint::assign(&d.named_parameters(), named)?;
        Ok(d)
    }
}
