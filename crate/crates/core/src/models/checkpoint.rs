//! Versioned JSON checkpoints: model configuration plus a map from
//! parameter name to shape and row-major values.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{DiscriminatorConfig, ModelConfig};
use super::{Discriminator, StudentModel};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointModel {
    Student { config: ModelConfig, input_dim: usize, seed: u64 },
    Discriminator { config: DiscriminatorConfig, input_dim: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u64,
    pub model: CheckpointModel,
    pub tensors: BTreeMap<String, TensorRecord>,
}

fn records(named: Vec<(String, Tensor)>) -> BTreeMap<String, TensorRecord> {
    named
        .into_iter()
        .map(|(name, t)| {
            let v = t.value();
            let rec = TensorRecord {
                shape: [v.rows(), v.cols()],
                data: v.data().to_vec(),
            };
            (name, rec)
        })
        .collect()
}

/// Copies `values` into `params` by name; every parameter must be present
/// with a matching shape and no extra names are allowed.
pub(crate) fn assign(params: &[(String, Tensor)], values: &[(String, Matrix)]) -> Result<()> {
    let map: BTreeMap<&str, &Matrix> = values.iter().map(|(n, m)| (n.as_str(), m)).collect();
    if map.len() != params.len() {
        return Err(Error::validation(
            "tensors",
            format!("{} tensors for a model with {} parameters", map.len(), params.len()),
        ));
    }
    for (name, t) in params {
        let m = map
            .get(name.as_str())
            .ok_or_else(|| Error::validation(format!("tensors.{name}"), "missing"))?;
        if m.shape() != t.shape() {
            return Err(Error::validation(
                format!("tensors.{name}"),
                format!("shape {:?}, expected {:?}", m.shape(), t.shape()),
            ));
        }
        t.set_value((*m).clone())?;
    }
    Ok(())
}

impl Checkpoint {
    pub fn from_student(model: &StudentModel) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            model: CheckpointModel::Student {
                config: model.config().clone(),
                input_dim: model.input_dim(),
                seed: model.seed(),
            },
            tensors: records(model.named_parameters()),
        }
    }

    pub fn from_discriminator(d: &Discriminator) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            model: CheckpointModel::Discriminator {
                config: d.config().clone(),
                input_dim: d.input_dim(),
                seed: d.seed(),
            },
            tensors: records(d.named_parameters()),
        }
    }

    fn matrices(&self) -> Result<Vec<(String, Matrix)>> {
        self.tensors
            .iter()
            .map(|(name, r)| {
                let m = Matrix::new(r.shape[0], r.shape[1], r.data.clone())
                    .map_err(|_| Error::validation(format!("tensors.{name}"), "data length does not match shape"))?;
                Ok((name.clone(), m))
            })
            .collect()
    }

    pub fn into_student(self) -> Result<StudentModel> {
        match &self.model {
            CheckpointModel::Student { config, input_dim, seed } => {
                StudentModel::from_named(config.clone(), *input_dim, *seed, &self.matrices()?)
            }
            CheckpointModel::Discriminator { .. } => {
                Err(Error::validation("model.kind", "expected a student checkpoint"))
            }
        }
    }

    pub fn into_discriminator(self) -> Result<Discriminator> {
        match &self.model {
            CheckpointModel::Discriminator { config, input_dim, seed } => {
                Discriminator::from_named(config.clone(), *input_dim, *seed, &self.matrices()?)
            }
            CheckpointModel::Student { .. } => {
                Err(Error::validation("model.kind", "expected a discriminator checkpoint"))
            }
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            version: u64,
        }
        let probe: Probe = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if probe.version != CHECKPOINT_VERSION {
            return Err(Error::Version(probe.version));
        }
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut BufReader::new(File::open(path)?), &mut s)?;
        Self::from_json_str(&s)
    }
}

impl StudentModel {
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        Checkpoint::from_student(self).save(path)
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::load(path)?.into_student()
    }
}
