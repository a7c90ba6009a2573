//! Seeded stochastic-block-model graphs with class-dependent features.
//!
//! These exist for tests and benchmarks. They mimic the shape of the
//! citation graphs (sparse binary bag-of-words features, homophilous
//! edges) and of the multi-graph protein interaction setting, but they are
//! not a substitute for the real datasets.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{make_split, Graph, GraphDataset, GraphSplit, Labels, Masks, Split, SplitSizes};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded_rng};
use crate::sparse::SparseAdjacency;

#[derive(Clone, Debug, PartialEq)]
pub struct CitationLike {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub num_features: usize,
    pub avg_degree: f64,
    /// Probability that an edge joins two nodes of the same class.
    pub homophily: f64,
    /// Words drawn per node.
    pub words_per_node: usize,
    /// Probability that a word comes from the node's class vocabulary
    /// rather than uniformly from all words.
    pub signal: f64,
    pub split: SplitSizes,
    pub seed: u64,
}

impl CitationLike {
    /// Roughly the size of Cora.
    pub fn cora_scale(seed: u64) -> Self {
        Self {
            num_nodes: 2708,
            num_classes: 7,
            num_features: 1433,
            avg_degree: 3.9,
            homophily: 0.8,
            words_per_node: 18,
            signal: 0.5,
            split: SplitSizes::default(),
            seed,
        }
    }

    /// A few hundred nodes; fast enough for unit and integration tests.
    pub fn small(seed: u64) -> Self {
        Self {
            num_nodes: 240,
            num_classes: 3,
            num_features: 40,
            avg_degree: 4.0,
            homophily: 0.85,
            words_per_node: 8,
            signal: 0.6,
            split: SplitSizes {
                per_class: 10,
                val: 60,
                test: 100,
            },
            seed,
        }
    }

    pub fn generate(&self) -> Result<GraphDataset> {
        let (n, c, d) = (self.num_nodes, self.num_classes, self.num_features);
        if c == 0 || d < c || n < c {
            return Err(Error::InvalidArgument(
                "need at least one class, one node per class and one feature per class".into(),
            ));
        }
        let mut rng = seeded_rng(derive_seed(self.seed, &[0]));
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        let by_class: Vec<Vec<usize>> = (0..c).map(|k| (k..n).step_by(c).collect()).collect();

        let block = d / c;
        let mut features = Matrix::zeros(n, d);
        for (i, &y) in labels.iter().enumerate() {
            for _ in 0..self.words_per_node {
                let w = if rng.random::<f64>() < self.signal {
                    y * block + rng.random_range(0..block)
                } else {
                    rng.random_range(0..d)
                };
                features.set(i, w, 1.0);
            }
        }

        let edges = sample_edges(&mut rng, &labels, &by_class, self.avg_degree, self.homophily);
        let adjacency = SparseAdjacency::from_undirected_edges(n, &edges)?;
        let masks = make_split(&labels, c, self.split, derive_seed(self.seed, &[1]))?;
        let graph = Graph::new(adjacency, features, Labels::Single(labels), masks)?;
        GraphDataset::new(format!("synthetic-citation-{}", self.seed), c, false, vec![graph], None)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProteinLike {
    pub num_graphs: (usize, usize, usize),
    pub nodes_per_graph: usize,
    pub num_labels: usize,
    pub num_features: usize,
    pub num_communities: usize,
    pub avg_degree: f64,
    pub homophily: f64,
    /// Probability of flipping each bit of a node's community label template.
    pub label_noise: f64,
    pub feature_noise: f64,
    pub seed: u64,
}

impl ProteinLike {
    pub fn small(seed: u64) -> Self {
        Self {
            num_graphs: (4, 1, 1),
            nodes_per_graph: 60,
            num_labels: 8,
            num_features: 12,
            num_communities: 4,
            avg_degree: 5.0,
            homophily: 0.8,
            label_noise: 0.05,
            feature_noise: 1.0,
            seed,
        }
    }

    pub fn generate(&self) -> Result<GraphDataset> {
        let (k, d, c) = (self.num_labels, self.num_features, self.num_communities);
        if c == 0 || k == 0 || self.nodes_per_graph < c {
            return Err(Error::InvalidArgument("need communities, labels and one node per community".into()));
        }
        let mut rng = seeded_rng(derive_seed(self.seed, &[0]));
        let templates: Vec<Vec<bool>> = (0..c).map(|_| (0..k).map(|_| rng.random::<f64>() < 0.3).collect()).collect();
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let centers = Matrix::from_fn(c, d, |_, _| 2.0 * unit.sample(&mut rng));
        let noise = Normal::new(0.0, self.feature_noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;

        let (tr, va, te) = self.num_graphs;
        let total = tr + va + te;
        let mut graphs = Vec::with_capacity(total);
        for gi in 0..total {
            let mut rng = seeded_rng(derive_seed(self.seed, &[1, gi as u64]));
            let n = self.nodes_per_graph;
            let community: Vec<usize> = (0..n).map(|i| i % c).collect();
            let by_comm: Vec<Vec<usize>> = (0..c).map(|q| (q..n).step_by(c).collect()).collect();
            let features = Matrix::from_fn(n, d, |i, j| centers.get(community[i], j) + noise.sample(&mut rng));
            let labels = Matrix::from_fn(n, k, |i, j| {
                let bit = templates[community[i]][j] ^ (rng.random::<f64>() < self.label_noise);
                f64::from(u8::from(bit))
            });
            let edges = sample_edges(&mut rng, &community, &by_comm, self.avg_degree, self.homophily);
            let adjacency = SparseAdjacency::from_undirected_edges(n, &edges)?;
            let split = if gi < tr {
                Split::Train
            } else if gi < tr + va {
                Split::Val
            } else {
                Split::Test
            };
            graphs.push(Graph::new(adjacency, features, Labels::Multi(labels), Masks::whole(n, split))?);
        }
        let graph_split = GraphSplit {
            train: (0..tr).collect(),
            val: (tr..tr + va).collect(),
            test: (tr + va..total).collect(),
        };
        GraphDataset::new(format!("synthetic-protein-{}", self.seed), k, true, graphs, Some(graph_split))
    }
}

/// Draws about `n·avg_degree/2` distinct undirected edges. Each picks a
/// uniform endpoint, then a partner from the same group with probability
/// `homophily` and from a uniformly chosen node otherwise.
fn sample_edges(
    rng: &mut impl Rng,
    group: &[usize],
    members: &[Vec<usize>],
    avg_degree: f64,
    homophily: f64,
) -> Vec<(usize, usize)> {
    let n = group.len();
    let target = ((n as f64) * avg_degree / 2.0).round() as usize;
    let max_edges = n * n.saturating_sub(1) / 2;
    let target = target.min(max_edges);
    let mut seen = HashSet::with_capacity(target);
    let mut edges = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while edges.len() < target && attempts < 50 * target + 100 {
        attempts += 1;
        let u = rng.random_range(0..n);
        let v = if rng.random::<f64>() < homophily {
            let pool = &members[group[u]];
            pool[rng.random_range(0..pool.len())]
        } else {
            rng.random_range(0..n)
        };
        if u == v {
            continue;
        }
        let e = (u.min(v), u.max(v));
        if seen.insert(e) {
            edges.push(e);
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn citation_like_is_valid_and_deterministic() {
        let a = CitationLike::small(3).generate().unwrap();
        let b = CitationLike::small(3).generate().unwrap();
        assert_eq!(a.to_json_string().unwrap(), b.to_json_string().unwrap());
        let g = &a.graphs()[0];
        assert_eq!(g.num_nodes(), 240);
        assert_eq!(g.masks().count(), (30, 60, 100));
        assert!(g.num_edges() > 400);
    }

    #[test]
    fn protein_like_is_inductive() {
        let ds = ProteinLike::small(1).generate().unwrap();
        assert!(ds.is_inductive());
        assert!(ds.multi_label());
        assert_eq!(ds.graphs().len(), 6);
        assert_eq!(ds.graphs_with(Split::Train), vec![0, 1, 2, 3]);
        assert_eq!(ds.graphs_with(Split::Test), vec![5]);
    }
}
