use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::GraphDataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded_rng};
use crate::sparse::SparseAdjacency;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    AttributeNoise,
    EdgeRemoval,
}

impl PerturbationKind {
    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::AttributeNoise => "attribute_noise",
            PerturbationKind::EdgeRemoval => "edge_removal",
        }
    }
}

impl std::str::FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attribute_noise" => Ok(Self::AttributeNoise),
            "edge_removal" => Ok(Self::EdgeRemoval),
            other => Err(Error::InvalidArgument(format!("unknown perturbation kind {other:?}"))),
        }
    }
}

/// `level` is the noise standard deviation for attribute noise and the
/// removed proportion for edge removal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub level: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            PerturbationKind::AttributeNoise => self.level >= 0.0 && self.level.is_finite(),
            PerturbationKind::EdgeRemoval => (0.0..1.0).contains(&self.level),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{} level {} out of range",
                self.kind.name(),
                self.level
            )))
        }
    }

    pub fn apply(&self, dataset: &GraphDataset) -> Result<GraphDataset> {
        match self.kind {
            PerturbationKind::AttributeNoise => perturb_features_noise(dataset, self.level, self.seed),
            PerturbationKind::EdgeRemoval => remove_edges(dataset, self.level, self.seed),
        }
    }
}

/// Adds i.i.d. zero-mean Gaussian noise with standard deviation `level` to
/// every feature of every graph. Graph `g` draws from a stream derived from
/// `(seed, g)`.
pub fn perturb_features_noise(dataset: &GraphDataset, level: f64, seed: u64) -> Result<GraphDataset> {
    PerturbationSpec {
        kind: PerturbationKind::AttributeNoise,
        level,
        seed,
    }
    .validate()?;
    if level == 0.0 {
        return Ok(dataset.clone());
    }
    let normal = Normal::new(0.0, level).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let graphs = dataset
        .graphs()
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let mut rng = seeded_rng(derive_seed(seed, &[gi as u64]));
            let mut f = (**g.features()).clone();
            for x in f.data_mut() {
                *x += normal.sample(&mut rng);
            }
            g.with_features(f)
        })
        .collect();
    Ok(dataset.with_graphs(graphs))
}

/// Removes `⌊proportion·|E|⌋` undirected edges of every graph, chosen
/// uniformly without replacement by a seeded Fisher–Yates shuffle of the
/// edge list. Both arcs of a removed edge go together. Nodes left with no
/// incident entry receive a self-loop. Existing self-loops are kept and do
/// not count towards `|E|`.
pub fn remove_edges(dataset: &GraphDataset, proportion: f64, seed: u64) -> Result<GraphDataset> {
    PerturbationSpec {
        kind: PerturbationKind::EdgeRemoval,
        level: proportion,
        seed,
    }
    .validate()?;
    let graphs = dataset
        .graphs()
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let adj = g.adjacency();
            let mut edges = adj.undirected_edges();
            let k = (proportion * edges.len() as f64).floor() as usize;
            if k == 0 {
                return Ok(g.clone());
            }
            edges.shuffle(&mut seeded_rng(derive_seed(seed, &[gi as u64])));
            let kept = &edges[k..];

            let n = adj.num_nodes();
            let mut degree = vec![0usize; n];
            let mut triplets = Vec::with_capacity(2 * kept.len() + n);
            for &(u, v) in kept {
                degree[u] += 1;
                degree[v] += 1;
                triplets.push((u, v, 1.0));
                triplets.push((v, u, 1.0));
            }
            for i in 0..n {
                if adj.has_self_loop(i) || degree[i] == 0 {
                    triplets.push((i, i, 1.0));
                }
            }
            Ok(g.with_adjacency(SparseAdjacency::from_triplets(n, triplets)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(dataset.with_graphs(graphs))
}
