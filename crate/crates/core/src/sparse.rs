//! Compressed sparse row adjacency matrices.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Square CSR matrix over `num_nodes` nodes. Column indices are strictly
/// increasing within each row, which fixes the summation order of every
/// product against it.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseAdjacency {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseAdjacency {
    pub fn new(
        num_nodes: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        vals: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != num_nodes + 1 || row_ptr[0] != 0 {
            return Err(Error::validation(
                "row_ptr",
                format!("expected length {} starting at 0", num_nodes + 1),
            ));
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::validation("row_ptr", "must be non-decreasing"));
        }
        if row_ptr[num_nodes] != col_idx.len() || col_idx.len() != vals.len() {
            return Err(Error::validation(
                "col_idx",
                "row_ptr[num_nodes], len(col_idx) and len(vals) must agree",
            ));
        }
        for i in 0..num_nodes {
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.iter().any(|&c| c >= num_nodes) {
                return Err(Error::validation(
                    "col_idx",
                    format!("row {i} has a column outside [0, {num_nodes})"),
                ));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation(
                    "col_idx",
                    format!("row {i} is not strictly increasing"),
                ));
            }
        }
        Ok(Self {
            num_nodes,
            row_ptr,
            col_idx,
            vals,
        })
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            row_ptr: vec![0; num_nodes + 1],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Builds a CSR matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are summed.
    pub fn from_triplets(num_nodes: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets
            .iter()
            .find(|&&(r, c, _)| r >= num_nodes || c >= num_nodes)
        {
            return Err(Error::validation(
                "edges",
                format!("entry ({r}, {c}) outside a {num_nodes}-node graph"),
            ));
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; num_nodes + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            vals.push(v);
        }
        for i in 0..num_nodes {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::new(num_nodes, row_ptr, col_idx, vals)
    }

    /// Unweighted symmetric adjacency from undirected edges. Both arcs are
    /// stored; repeated edges collapse to a single entry of weight 1.
    pub fn from_undirected_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut triplets = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            triplets.push((u, v, 1.0));
            if u != v {
                triplets.push((v, u, 1.0));
            }
        }
        let mut adj = Self::from_triplets(num_nodes, triplets)?;
        adj.vals.iter_mut().for_each(|v| *v = 1.0);
        Ok(adj)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    /// Range of entry positions belonging to row `i`.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// `(column, value)` pairs of row `i` in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_range(i);
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    /// Number of stored entries in row `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_range(i);
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(pos) => self.vals[r.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn densify(&self) -> Matrix {
        let mut m = Matrix::zeros(self.num_nodes, self.num_nodes);
        for i in 0..self.num_nodes {
            for (j, v) in self.row(i) {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.num_nodes).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    /// Undirected edges `(u, v)` with `u < v`, in row-major order. Self-loops
    /// are not included.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.nnz() / 2);
        for i in 0..self.num_nodes {
            for (j, _) in self.row(i) {
                if i < j {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    pub fn has_self_loop(&self, i: usize) -> bool {
        self.get(i, i) != 0.0
    }

    /// Copy with a unit self-loop on every node that lacks one.
    pub fn with_self_loops(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz() + self.num_nodes);
        for i in 0..self.num_nodes {
            triplets.extend(self.row(i).map(|(j, v)| (i, j, v)));
            if !self.has_self_loop(i) {
                triplets.push((i, i, 1.0));
            }
        }
        Self::from_triplets(self.num_nodes, triplets).expect("indices already validated")
    }

    /// Row-stochastic copy: each stored entry divided by its row's entry
    /// count. Empty rows stay empty, so their mean is the zero vector.
    pub fn row_mean(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.num_nodes {
            let r = self.row_range(i);
            let d = r.len() as f64;
            for v in &mut out.vals[r] {
                *v = 1.0 / d;
            }
        }
        out
    }

    pub(crate) fn vals_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    /// `self · dense`, accumulating each output row in ascending column order.
    pub fn spmm(&self, dense: &Matrix) -> Result<Matrix> {
        if dense.rows() != self.num_nodes {
            return Err(Error::shape(
                "spmm",
                format!("{} rows", self.num_nodes),
                dense.rows(),
            ));
        }
        let f = dense.cols();
        let mut out = Matrix::zeros(self.num_nodes, f);
        for i in 0..self.num_nodes {
            let out_row = out.row_mut(i);
            for p in self.row_range(i) {
                let v = self.vals[p];
                let src = dense.row(self.col_idx[p]);
                for (o, &x) in out_row.iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`. Contributions to each output row arrive in ascending
    /// source-row order.
    pub fn spmm_transpose(&self, dense: &Matrix) -> Result<Matrix> {
        if dense.rows() != self.num_nodes {
            return Err(Error::shape(
                "spmm_transpose",
                format!("{} rows", self.num_nodes),
                dense.rows(),
            ));
        }
        let f = dense.cols();
        let mut out = Matrix::zeros(self.num_nodes, f);
        for i in 0..self.num_nodes {
            for p in self.row_range(i) {
                let v = self.vals[p];
                let j = self.col_idx[p];
                let src = dense.row(i);
                let dst = out.row_mut(j);
                for (o, &x) in dst.iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_matrix_product_is_zero() {
        let s = SparseAdjacency::empty(3);
        let d = Matrix::from_fn(3, 2, |i, j| (i + j) as f64 + 1.0);
        assert_eq!(s.spmm(&d).unwrap(), Matrix::zeros(3, 2));
    }

    #[test]
    fn two_node_normalized_product() {
        let s = SparseAdjacency::from_triplets(
            2,
            vec![(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)],
        )
        .unwrap();
        let out = s.spmm(&Matrix::identity(2)).unwrap();
        assert_eq!(out.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn rejects_non_canonical_rows() {
        let err = SparseAdjacency::new(2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]);
        assert!(err.is_err());
        let err = SparseAdjacency::new(2, vec![0, 1, 1], vec![2], vec![1.0]);
        assert!(err.is_err());
        let err = SparseAdjacency::new(2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]);
        assert!(err.is_err());
    }

    #[test]
    fn undirected_edges_are_symmetrized_and_deduplicated() {
        let s = SparseAdjacency::from_undirected_edges(3, &[(0, 1), (1, 0), (1, 2), (0, 1)]).unwrap();
        assert_eq!(s.nnz(), 4);
        assert!(s.is_symmetric());
        assert_eq!(s.undirected_edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn row_mean_leaves_isolated_rows_empty() {
        let s = SparseAdjacency::from_undirected_edges(3, &[(0, 1), (0, 2)]).unwrap();
        let m = s.row_mean();
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.get(1, 0), 1.0);
        let iso = SparseAdjacency::from_undirected_edges(2, &[]).unwrap().row_mean();
        assert_eq!(iso.degree(0), 0);
    }

    #[test]
    fn transpose_product_matches_dense() {
        let s = SparseAdjacency::from_triplets(3, vec![(0, 1, 2.0), (1, 2, -1.0), (2, 0, 0.5)]).unwrap();
        let d = Matrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let dense = s.densify().transpose().matmul(&d).unwrap();
        assert_eq!(s.spmm_transpose(&d).unwrap(), dense);
    }
}
