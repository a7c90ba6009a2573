use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Gat,
    Sage,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Gcn => "gcn",
            Arch::Gat => "gat",
            Arch::Sage => "sage",
        }
    }

    pub fn default_activation(self) -> Activation {
        match self {
            Arch::Gat => Activation::Elu,
            Arch::Gcn | Arch::Sage => Activation::Relu,
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "gat" => Ok(Arch::Gat),
            "sage" | "graphsage" => Ok(Arch::Sage),
            other => Err(Error::InvalidArgument(format!("unknown architecture {other:?}"))),
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Elu,
    Identity,
}

/// Student (or teacher) encoder configuration.
///
/// `layer_dims[l]` is the output width of layer `l`; for GAT it is the
/// per-head width, so a hidden GAT layer emits `layer_dims[l] *
/// heads[l]` features. The last entry is the number of classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub layer_dims: Vec<usize>,
    #[serde(default)]
    pub heads: Vec<usize>,
    /// Applied after every layer except the last.
    pub hidden_activation: Activation,
    /// Applied to the input of every layer during training.
    pub dropout: f64,
    pub leaky_relu_slope: f64,
}

impl ModelConfig {
    pub fn new(arch: Arch, layer_dims: Vec<usize>, heads: Vec<usize>) -> Self {
        Self {
            arch,
            layer_dims,
            heads,
            hidden_activation: arch.default_activation(),
            dropout: 0.5,
            leaky_relu_slope: 0.2,
        }
    }

    pub fn gcn(layer_dims: Vec<usize>) -> Self {
        Self::new(Arch::Gcn, layer_dims, Vec::new())
    }

    pub fn gat(layer_dims: Vec<usize>, heads: Vec<usize>) -> Self {
        Self::new(Arch::Gat, layer_dims, heads)
    }

    pub fn sage(layer_dims: Vec<usize>) -> Self {
        Self::new(Arch::Sage, layer_dims, Vec::new())
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout = p;
        self
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len()
    }

    pub fn num_classes(&self) -> usize {
        self.layer_dims.last().copied().unwrap_or(0)
    }

    /// Heads of layer `l` (1 for non-attention architectures).
    pub fn heads_at(&self, l: usize) -> usize {
        match self.arch {
            Arch::Gat => self.heads[l],
            _ => 1,
        }
    }

    /// Width of the activation emitted by layer `l`.
    pub fn output_width(&self, l: usize) -> usize {
        let last = l + 1 == self.num_layers();
        if self.arch == Arch::Gat && !last {
            self.layer_dims[l] * self.heads[l]
        } else {
            self.layer_dims[l]
        }
    }

    /// Width of the hidden embedding `H` (the penultimate layer's output, or
    /// the input itself for a single-layer model).
    pub fn hidden_width(&self, input_dim: usize) -> usize {
        match self.num_layers() {
            0 | 1 => input_dim,
            n => self.output_width(n - 2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.is_empty() {
            return Err(Error::validation("layer_dims", "at least one layer is required"));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::validation("layer_dims", "layer widths must be positive"));
        }
        match self.arch {
            Arch::Gat => {
                if self.heads.len() != self.layer_dims.len() {
                    return Err(Error::validation(
                        "heads",
                        format!("{} entries for {} layers", self.heads.len(), self.layer_dims.len()),
                    ));
                }
                if self.heads.contains(&0) {
                    return Err(Error::validation("heads", "head counts must be positive"));
                }
            }
            _ => {
                if !self.heads.is_empty() {
                    return Err(Error::validation("heads", format!("only used by gat, not {}", self.arch)));
                }
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation("dropout", format!("{} outside [0, 1)", self.dropout)));
        }
        if !self.leaky_relu_slope.is_finite() {
            return Err(Error::validation("leaky_relu_slope", "must be finite"));
        }
        Ok(())
    }
}

/// GCN stack ending in a single output unit. Hidden layers use ReLU.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub layer_dims: Vec<usize>,
}

impl DiscriminatorConfig {
    pub fn new(layer_dims: Vec<usize>) -> Self {
        Self { layer_dims }
    }

    pub fn validate(&self) -> Result<()> {
        match self.layer_dims.last() {
            Some(1) if !self.layer_dims.contains(&0) => Ok(()),
            _ => Err(Error::validation(
                "disc.layer_dims",
                "discriminator widths must be positive and end in 1",
            )),
        }
    }
}

/// Exact scalar parameter count of a student built from `config` on
/// `input_dim` features, biases included.
pub fn count_parameters(config: &ModelConfig, input_dim: usize) -> usize {
    let mut d_in = input_dim;
    let mut total = 0;
    for l in 0..config.num_layers() {
        let d = config.layer_dims[l];
        total += match config.arch {
            Arch::Gcn => d_in * d + d,
            Arch::Sage => 2 * d_in * d + d,
            Arch::Gat => {
                let k = config.heads[l];
                k * (d_in * d + 2 * d) + config.output_width(l)
            }
        };
        d_in = config.output_width(l);
    }
    total
}

pub fn count_discriminator_parameters(config: &DiscriminatorConfig, input_dim: usize) -> usize {
    let mut d_in = input_dim;
    let mut total = 0;
    for &d in &config.layer_dims {
        total += d_in * d + d;
        d_in = d;
    }
    total
}

/// Parameters of a whole group of `m` students with one discriminator
/// each: `M(N_G + N_Θ + N_D)`.
pub fn group_parameter_total(
    m: usize,
    student: &ModelConfig,
    discriminator: &DiscriminatorConfig,
    input_dim: usize,
) -> usize {
    let n_d = count_discriminator_parameters(discriminator, student.hidden_width(input_dim));
    m * (count_parameters(student, input_dim) + n_d)
}

/// The benchmark settings the presets below reproduce.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Cora,
    Citeseer,
    Pubmed,
    Ppi,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [Benchmark::Cora, Benchmark::Citeseer, Benchmark::Pubmed, Benchmark::Ppi];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Cora => "cora",
            Benchmark::Citeseer => "citeseer",
            Benchmark::Pubmed => "pubmed",
            Benchmark::Ppi => "ppi",
        }
    }

    pub fn num_features(self) -> usize {
        match self {
            Benchmark::Cora => 1433,
            Benchmark::Citeseer => 3703,
            Benchmark::Pubmed => 500,
            Benchmark::Ppi => 50,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Benchmark::Cora => 7,
            Benchmark::Citeseer => 6,
            Benchmark::Pubmed => 3,
            Benchmark::Ppi => 121,
        }
    }

    fn gat_heads(self) -> Vec<usize> {
        match self {
            Benchmark::Pubmed => vec![8, 8],
            _ => vec![8, 1],
        }
    }
}

impl std::str::FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown benchmark {s:?}")))
    }
}

pub mod presets {
    use super::*;

    pub fn student(bench: Benchmark, arch: Arch) -> ModelConfig {
        let k = bench.num_classes();
        match (bench, arch) {
            (Benchmark::Ppi, Arch::Gat) => ModelConfig::gat(vec![64, 64, 64, 64, k], vec![2; 5]),
            (Benchmark::Ppi, Arch::Sage) => ModelConfig::sage(vec![64, 64, 64, 64, k]),
            (Benchmark::Ppi, Arch::Gcn) => ModelConfig::gcn(vec![64, 64, 64, 64, k]),
            (_, Arch::Gcn) => ModelConfig::gcn(vec![16, k]),
            (_, Arch::Sage) => ModelConfig::sage(vec![16, k]),
            (b, Arch::Gat) => ModelConfig::gat(vec![8, k], b.gat_heads()),
        }
    }

    pub fn teacher(bench: Benchmark, arch: Arch) -> ModelConfig {
        let k = bench.num_classes();
        match (bench, arch) {
            (Benchmark::Ppi, Arch::Gat) => ModelConfig::gat(vec![256, 256, k], vec![4, 4, 6]),
            (Benchmark::Ppi, Arch::Sage) => ModelConfig::sage(vec![256, 256, k]),
            (Benchmark::Ppi, Arch::Gcn) => ModelConfig::gcn(vec![256, 256, k]),
            (_, Arch::Gcn) => ModelConfig::gcn(vec![128, k]),
            (_, Arch::Sage) => ModelConfig::sage(vec![128, k]),
            (b, Arch::Gat) => ModelConfig::gat(vec![128, k], b.gat_heads()),
        }
    }

    pub fn discriminator(bench: Benchmark, arch: Arch) -> DiscriminatorConfig {
        match (bench, arch) {
            (Benchmark::Ppi, _) => DiscriminatorConfig::new(vec![64, 1]),
            (_, Arch::Gcn) => DiscriminatorConfig::new(vec![1]),
            _ => DiscriminatorConfig::new(vec![16, 1]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cora_gcn_counts() {
        assert_eq!(count_parameters(&presets::student(Benchmark::Cora, Arch::Gcn), 1433), 23063);
        assert_eq!(count_parameters(&presets::teacher(Benchmark::Cora, Arch::Gcn), 1433), 184_455);
    }

    #[test]
    fn empty_model_has_no_parameters() {
        assert_eq!(count_parameters(&ModelConfig::gcn(vec![]), 10), 0);
    }

    #[test]
    fn hidden_widths() {
        assert_eq!(presets::student(Benchmark::Cora, Arch::Gcn).hidden_width(1433), 16);
        assert_eq!(presets::student(Benchmark::Cora, Arch::Gat).hidden_width(1433), 64);
        assert_eq!(presets::student(Benchmark::Ppi, Arch::Gat).hidden_width(50), 128);
        assert_eq!(ModelConfig::gcn(vec![3]).hidden_width(9), 9);
    }

    #[test]
    fn validation() {
        assert!(ModelConfig::gat(vec![8, 7], vec![8]).validate().is_err());
        assert!(ModelConfig::gcn(vec![16, 7]).with_dropout(1.0).validate().is_err());
        assert!(ModelConfig::gcn(vec![]).validate().is_err());
        assert!(DiscriminatorConfig::new(vec![16, 2]).validate().is_err());
        assert!(DiscriminatorConfig::new(vec![16, 1]).validate().is_ok());
    }
}
