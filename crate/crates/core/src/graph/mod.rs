//! Graph datasets: container, canonical JSON format, adjacency
//! normalization, splits and perturbations.

mod io;
mod normalize;
mod perturb;
mod split;
pub mod synthetic;

use std::sync::Arc;

pub use normalize::normalize_adjacency;
pub use perturb::{perturb_features_noise, remove_edges, PerturbationKind, PerturbationSpec};
pub use split::{make_planetoid_split, make_split, Masks, SplitSizes};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::sparse::SparseAdjacency;

/// Node labels of one graph.
#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    /// One class index per node.
    Single(Vec<usize>),
    /// `N x K` 0/1 indicator matrix.
    Multi(Matrix),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Single(v) => v.len(),
            Labels::Multi(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Graph {
    adjacency: Arc<SparseAdjacency>,
    features: Arc<Matrix>,
    labels: Labels,
    masks: Masks,
}

impl Graph {
    pub fn new(adjacency: SparseAdjacency, features: Matrix, labels: Labels, masks: Masks) -> Result<Self> {
        let g = Self {
            adjacency: Arc::new(adjacency),
            features: Arc::new(features),
            labels,
            masks,
        };
        g.check_shapes()?;
        Ok(g)
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.adjacency.num_nodes();
        if self.features.rows() != n {
            return Err(Error::validation(
                "features",
                format!("{} rows for {n} nodes", self.features.rows()),
            ));
        }
        if self.labels.len() != n {
            return Err(Error::validation("labels", format!("{} entries for {n} nodes", self.labels.len())));
        }
        for (name, m) in [
            ("train_mask", &self.masks.train),
            ("val_mask", &self.masks.val),
            ("test_mask", &self.masks.test),
        ] {
            if m.len() != n {
                return Err(Error::validation(name, format!("{} entries for {n} nodes", m.len())));
            }
        }
        if !self.adjacency.is_symmetric() {
            return Err(Error::validation("edges", "adjacency is not symmetric"));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.num_nodes()
    }

    /// Raw symmetric adjacency (both arcs of every undirected edge).
    pub fn adjacency(&self) -> &Arc<SparseAdjacency> {
        &self.adjacency
    }

    pub fn features(&self) -> &Arc<Matrix> {
        &self.features
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn masks(&self) -> &Masks {
        &self.masks
    }

    pub fn mask(&self, split: Split) -> &[bool] {
        match split {
            Split::Train => &self.masks.train,
            Split::Val => &self.masks.val,
            Split::Test => &self.masks.test,
        }
    }

    /// Indices of the nodes selected by `split`.
    pub fn split_nodes(&self, split: Split) -> Vec<usize> {
        self.mask(split)
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    /// Number of undirected edges, self-loops excluded.
    pub fn num_edges(&self) -> usize {
        self.adjacency.undirected_edges().len()
    }

    pub(crate) fn with_features(&self, features: Matrix) -> Self {
        Self {
            features: Arc::new(features),
            ..self.clone()
        }
    }

    pub(crate) fn with_adjacency(&self, adjacency: SparseAdjacency) -> Self {
        Self {
            adjacency: Arc::new(adjacency),
            ..self.clone()
        }
    }
}

/// Which graphs of an inductive dataset belong to each split.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct GraphSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// One or more graphs with features, labels and split masks.
///
/// Transductive datasets hold exactly one graph with node-level masks.
/// Inductive datasets assign whole graphs to splits; each graph's mask for
/// its own split is all-true and the other two are all-false.
#[derive(Clone, Debug)]
pub struct GraphDataset {
    name: String,
    num_classes: usize,
    multi_label: bool,
    graphs: Vec<Graph>,
    graph_split: Option<GraphSplit>,
}

impl GraphDataset {
    pub fn new(
        name: impl Into<String>,
        num_classes: usize,
        multi_label: bool,
        graphs: Vec<Graph>,
        graph_split: Option<GraphSplit>,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            num_classes,
            multi_label,
            graphs,
            graph_split,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn multi_label(&self) -> bool {
        self.multi_label
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn graph_split(&self) -> Option<&GraphSplit> {
        self.graph_split.as_ref()
    }

    pub fn is_inductive(&self) -> bool {
        self.graph_split.is_some()
    }

    pub fn num_features(&self) -> usize {
        self.graphs.first().map_or(0, |g| g.features.cols())
    }

    /// Indices of graphs containing at least one node of `split`, ascending.
    pub fn graphs_with(&self, split: Split) -> Vec<usize> {
        self.graphs
            .iter()
            .enumerate()
            .filter(|(_, g)| g.mask(split).iter().any(|&m| m))
            .map(|(i, _)| i)
            .collect()
    }

    pub(crate) fn with_graphs(&self, graphs: Vec<Graph>) -> Self {
        Self {
            graphs,
            ..self.clone()
        }
    }

    /// Copy with every feature row scaled to sum to one (rows summing to
    /// zero are left as they are).
    pub fn row_normalized_features(&self) -> Self {
        let graphs = self
            .graphs
            .iter()
            .map(|g| {
                let mut f = (*g.features).clone();
                for i in 0..f.rows() {
                    let s: f64 = f.row(i).iter().sum();
                    if s != 0.0 {
                        f.row_mut(i).iter_mut().for_each(|x| *x /= s);
                    }
                }
                g.with_features(f)
            })
            .collect();
        self.with_graphs(graphs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.graphs.is_empty() {
            return Err(Error::validation("graphs", "dataset has no graphs"));
        }
        if self.num_classes == 0 {
            return Err(Error::validation("num_classes", "must be positive"));
        }
        let d = self.num_features();
        for (gi, g) in self.graphs.iter().enumerate() {
            g.check_shapes()
                .map_err(|e| prefix_graph(e, gi))?;
            if g.features.cols() != d {
                return Err(Error::validation(
                    format!("graphs[{gi}].features"),
                    format!("{} columns, expected {d}", g.features.cols()),
                ));
            }
            if !g.features.is_finite() {
                return Err(Error::validation(format!("graphs[{gi}].features"), "non-finite value"));
            }
            match (&g.labels, self.multi_label) {
                (Labels::Single(v), false) => {
                    if let Some((i, &y)) = v.iter().enumerate().find(|(_, &y)| y >= self.num_classes) {
                        return Err(Error::validation(
                            format!("graphs[{gi}].labels"),
                            format!("node {i} has label {y} outside [0, {})", self.num_classes),
                        ));
                    }
                }
                (Labels::Multi(m), true) => {
                    if m.cols() != self.num_classes {
                        return Err(Error::validation(
                            format!("graphs[{gi}].labels"),
                            format!("{} columns, expected {}", m.cols(), self.num_classes),
                        ));
                    }
                    if m.data().iter().any(|&x| x != 0.0 && x != 1.0) {
                        return Err(Error::validation(format!("graphs[{gi}].labels"), "entries must be 0 or 1"));
                    }
                }
                (Labels::Single(_), true) => {
                    return Err(Error::validation(
                        format!("graphs[{gi}].labels"),
                        "single-label labels in a multi_label dataset",
                    ))
                }
                (Labels::Multi(_), false) => {
                    return Err(Error::validation(
                        format!("graphs[{gi}].labels"),
                        "multi-label labels in a single-label dataset",
                    ))
                }
            }
            if let Some(i) = g.masks.overlap() {
                return Err(Error::validation(
                    "masks",
                    format!("masks not disjoint at node {i} of graph {gi}"),
                ));
            }
        }
        match &self.graph_split {
            None => {
                if self.graphs.len() != 1 {
                    return Err(Error::validation(
                        "graph_split",
                        "required when a dataset has more than one graph",
                    ));
                }
            }
            Some(split) => self.validate_graph_split(split)?,
        }
        Ok(())
    }

    fn validate_graph_split(&self, split: &GraphSplit) -> Result<()> {
        let mut seen = vec![None; self.graphs.len()];
        for (which, ids) in [(Split::Train, &split.train), (Split::Val, &split.val), (Split::Test, &split.test)] {
            for &gi in ids {
                let slot = seen.get_mut(gi).ok_or_else(|| {
                    Error::validation("graph_split", format!("graph index {gi} out of range"))
                })?;
                if slot.is_some() {
                    return Err(Error::validation("graph_split", format!("graph {gi} listed twice")));
                }
                *slot = Some(which);
            }
        }
        for (gi, (slot, g)) in seen.iter().zip(&self.graphs).enumerate() {
            let which = slot.ok_or_else(|| {
                Error::validation("graph_split", format!("graph {gi} not assigned to a split"))
            })?;
            for s in [Split::Train, Split::Val, Split::Test] {
                let expect = s == which;
                if g.mask(s).iter().any(|&m| m != expect) {
                    return Err(Error::validation(
                        format!("graphs[{gi}].{}_mask", s.name()),
                        format!("graph belongs to the {} split; mask must be all-{expect}", which.name()),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn prefix_graph(e: Error, gi: usize) -> Error {
    match e {
        Error::Validation { field, msg } => Error::Validation {
            field: format!("graphs[{gi}].{field}"),
            msg,
        },
        other => other,
    }
}

/// Per-graph operators derived once and shared by every model that runs on
/// the graph.
#[derive(Clone, Debug)]
pub struct PreparedGraph {
    pub features: Arc<Matrix>,
    /// `D̃^{-1/2}(A+I)D̃^{-1/2}`, used by GCN layers and discriminators.
    pub gcn: Arc<SparseAdjacency>,
    /// `A` with a self-loop on every node, the GAT attention support.
    pub attention: Arc<SparseAdjacency>,
    /// Row-normalized `A`, the GraphSAGE mean aggregator.
    pub mean: Arc<SparseAdjacency>,
}

impl PreparedGraph {
    pub fn new(graph: &Graph) -> Result<Self> {
        Ok(Self {
            features: Arc::clone(&graph.features),
            gcn: Arc::new(normalize_adjacency(&graph.adjacency)?),
            attention: Arc::new(graph.adjacency.with_self_loops()),
            mean: Arc::new(graph.adjacency.row_mean()),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn prepare_all(dataset: &GraphDataset) -> Result<Vec<PreparedGraph>> {
        dataset.graphs().iter().map(PreparedGraph::new).collect()
    }
}
