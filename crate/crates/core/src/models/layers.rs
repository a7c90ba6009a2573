//! Graph layers as functions of tape variables. Each returns the layer's
//! pre-activation output; the caller applies the nonlinearity.

use std::sync::Arc;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::sparse::SparseAdjacency;

/// `Â·(h·W) + b` with `Â` already normalized.
pub fn gcn_layer(tape: &mut Tape, h: Var, a_norm: &Arc<SparseAdjacency>, w: Var, b: Var) -> Result<Var> {
    let hw = tape.matmul(h, w)?;
    let agg = tape.spmm(a_norm, hw)?;
    tape.add_row(agg, b)
}

/// Parameters of one attention head.
#[derive(Clone, Copy, Debug)]
pub struct GatHead {
    pub w: Var,
    /// `d_out x 1`, applied to the receiving node.
    pub att_src: Var,
    /// `d_out x 1`, applied to the neighbour.
    pub att_dst: Var,
}

pub struct GatOutput {
    pub out: Var,
    /// Per head, the `nnz x 1` attention coefficients aligned with the
    /// entries of the attention adjacency.
    pub attention: Vec<Var>,
}

/// Multi-head graph attention over the stored entries of `adj`, which must
/// give every node a non-empty neighbourhood (normally `A` plus self-loops).
///
/// Head `k` scores entry `(i, j)` as `leaky_relu(a_srcᵀW_k h_i + a_dstᵀW_k
/// h_j)`, normalizes the scores over row `i` and sums `α_ij W_k h_j`.
/// Heads are concatenated when `concat` is set and averaged otherwise; the
/// bias is added afterwards.
pub fn gat_layer(
    tape: &mut Tape,
    h: Var,
    adj: &Arc<SparseAdjacency>,
    heads: &[GatHead],
    b: Var,
    concat: bool,
    slope: f64,
) -> Result<GatOutput> {
    if heads.is_empty() {
        return Err(Error::InvalidArgument("gat_layer needs at least one head".into()));
    }
    let mut outs = Vec::with_capacity(heads.len());
    let mut attention = Vec::with_capacity(heads.len());
    for head in heads {
        let wh = tape.matmul(h, head.w)?;
        let s = tape.matmul(wh, head.att_src)?;
        let t = tape.matmul(wh, head.att_dst)?;
        let e = tape.edge_scores(adj, s, t)?;
        let e = tape.leaky_relu(e, slope)?;
        let alpha = tape.edge_softmax(adj, e)?;
        outs.push(tape.edge_aggregate(adj, alpha, wh)?);
        attention.push(alpha);
    }
    let merged = if concat {
        tape.concat_cols(&outs)?
    } else if outs.len() == 1 {
        outs[0]
    } else {
        let mut acc = outs[0];
        for &o in &outs[1..] {
            acc = tape.add(acc, o)?;
        }
        tape.scale(acc, 1.0 / outs.len() as f64)?
    };
    Ok(GatOutput {
        out: tape.add_row(merged, b)?,
        attention,
    })
}

/// GraphSAGE mean aggregator, concat form: `h·W_self + Ā·(h·W_neigh) + b`
/// where `Ā` is the row-mean of the raw adjacency. Equivalent to
/// `[h ‖ mean_N(h)]·[W_self; W_neigh] + b`; an isolated node's neighbour
/// mean is the zero vector.
pub fn sage_layer(
    tape: &mut Tape,
    h: Var,
    a_mean: &Arc<SparseAdjacency>,
    w_self: Var,
    w_neigh: Var,
    b: Var,
) -> Result<Var> {
    let own = tape.matmul(h, w_self)?;
    let hn = tape.matmul(h, w_neigh)?;
    let neigh = tape.spmm(a_mean, hn)?;
    let sum = tape.add(own, neigh)?;
    tape.add_row(sum, b)
}
