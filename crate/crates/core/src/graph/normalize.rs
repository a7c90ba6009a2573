use crate::error::{Error, Result};
use crate::sparse::SparseAdjacency;

/// Symmetric GCN normalization `D̃^{-1/2}(A+I)D̃^{-1/2}`, where `D̃` is the
/// degree matrix of `A+I`. An existing self-loop gains weight one like
/// every other diagonal entry.
pub fn normalize_adjacency(a: &SparseAdjacency) -> Result<SparseAdjacency> {
    if !a.is_symmetric() {
        return Err(Error::Domain {
            op: "normalize_adjacency",
            msg: "adjacency is not symmetric".into(),
        });
    }
    let n = a.num_nodes();
    let mut triplets = Vec::with_capacity(a.nnz() + n);
    for i in 0..n {
        triplets.extend(a.row(i).map(|(j, v)| (i, j, v)));
        triplets.push((i, i, 1.0));
    }
    let mut out = SparseAdjacency::from_triplets(n, triplets)?;
    let inv_sqrt: Vec<f64> = (0..out.num_nodes())
        .map(|i| {
            let d: f64 = out.row(i).map(|(_, v)| v).sum();
            1.0 / d.sqrt()
        })
        .collect();
    let row_ptr = out.row_ptr().to_vec();
    let col_idx = out.col_idx().to_vec();
    let vals = out.vals_mut();
    for i in 0..row_ptr.len() - 1 {
        for k in row_ptr[i]..row_ptr[i + 1] {
            vals[k] *= inv_sqrt[i] * inv_sqrt[col_idx[k]];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_node() {
        let a = SparseAdjacency::empty(1);
        let n = normalize_adjacency(&a).unwrap();
        assert_eq!(n.densify().data(), &[1.0]);
    }

    #[test]
    fn single_edge() {
        let a = SparseAdjacency::from_undirected_edges(2, &[(0, 1)]).unwrap();
        let n = normalize_adjacency(&a).unwrap();
        assert!(n.densify().data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn path_of_three() {
        let a = SparseAdjacency::from_undirected_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let d = normalize_adjacency(&a).unwrap().densify();
        let s6 = 1.0 / 6f64.sqrt();
        let expect = [[0.5, s6, 0.0], [s6, 1.0 / 3.0, s6], [0.0, s6, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((d.get(i, j) - expect[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn existing_self_loop_counts_twice() {
        let a = SparseAdjacency::from_triplets(1, vec![(0, 0, 1.0)]).unwrap();
        let n = normalize_adjacency(&a).unwrap();
        assert!((n.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_asymmetric() {
        let a = SparseAdjacency::from_triplets(2, vec![(0, 1, 1.0)]).unwrap();
        assert!(normalize_adjacency(&a).is_err());
    }
}
