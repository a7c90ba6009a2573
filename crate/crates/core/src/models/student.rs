use std::sync::Arc;

use rand::Rng;

use super::config::{count_parameters, Activation, Arch, ModelConfig};
use super::layers::{gat_layer, gcn_layer, sage_layer, GatHead};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::PreparedGraph;
use crate::matrix::Matrix;
use crate::rng::{seeded_rng, CounterStream};

/// Whether a forward pass runs with dropout. In training mode layer `l`
/// draws its mask from `stream.child(l)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train(CounterStream),
    Eval,
}

/// How parameters enter the tape: as trainable leaves or as constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    Trainable,
    Frozen,
}

pub(crate) fn read(tape: &mut Tape, t: &Tensor, access: Access) -> Var {
    match access {
        Access::Trainable => tape.param(t),
        Access::Frozen => tape.frozen(t),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StudentOutput {
    /// Activation of the penultimate layer (the local knowledge fed to a
    /// discriminator).
    pub hidden: Var,
    /// Raw logits of the last layer.
    pub logits: Var,
}

#[derive(Debug)]
pub(crate) enum Layer {
    Gcn { w: Tensor, b: Tensor },
    Gat { heads: Vec<HeadParams>, b: Tensor },
    Sage { w_self: Tensor, w_neigh: Tensor, b: Tensor },
}

#[derive(Debug)]
pub(crate) struct HeadParams {
    w: Tensor,
    att_src: Tensor,
    att_dst: Tensor,
}

/// Weights are Glorot-uniform with bound `√(6/(fan_in + fan_out))`; biases
/// start at zero.
pub(crate) fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

/// A GCN, GAT or GraphSAGE encoder with its output layer.
#[derive(Debug)]
pub struct StudentModel {
    config: ModelConfig,
    input_dim: usize,
    seed: u64,
    layers: Vec<Layer>,
}

impl StudentModel {
    /// Allocates and Glorot-initializes every parameter from `seed`.
    pub fn new(config: ModelConfig, input_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be positive".into()));
        }
        let mut rng = seeded_rng(seed);
        let mut layers = Vec::with_capacity(config.num_layers());
        let mut d_in = input_dim;
        for l in 0..config.num_layers() {
            let d = config.layer_dims[l];
            let width = config.output_width(l);
            let layer = match config.arch {
                Arch::Gcn => Layer::Gcn {
                    w: Tensor::param(glorot(&mut rng, d_in, d)),
                    b: Tensor::param(Matrix::zeros(1, d)),
                },
                Arch::Sage => Layer::Sage {
                    w_self: Tensor::param(glorot(&mut rng, d_in, d)),
                    w_neigh: Tensor::param(glorot(&mut rng, d_in, d)),
                    b: Tensor::param(Matrix::zeros(1, d)),
                },
                Arch::Gat => Layer::Gat {
                    heads: (0..config.heads[l])
                        .map(|_| HeadParams {
                            w: Tensor::param(glorot(&mut rng, d_in, d)),
                            att_src: Tensor::param(glorot(&mut rng, d, 1)),
                            att_dst: Tensor::param(glorot(&mut rng, d, 1)),
                        })
                        .collect(),
                    b: Tensor::param(Matrix::zeros(1, width)),
                },
            };
            layers.push(layer);
            d_in = width;
        }
        Ok(Self {
            config,
            input_dim,
            seed,
            layers,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes()
    }

    pub fn hidden_width(&self) -> usize {
        self.config.hidden_width(self.input_dim)
    }

    /// Named parameters in a fixed canonical order.
    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Gcn { w, b } => {
                    out.push((format!("layers.{l}.weight"), w.clone()));
                    out.push((format!("layers.{l}.bias"), b.clone()));
                }
                Layer::Sage { w_self, w_neigh, b } => {
                    out.push((format!("layers.{l}.weight_self"), w_self.clone()));
                    out.push((format!("layers.{l}.weight_neigh"), w_neigh.clone()));
                    out.push((format!("layers.{l}.bias"), b.clone()));
                }
                Layer::Gat { heads, b } => {
                    for (k, h) in heads.iter().enumerate() {
                        out.push((format!("layers.{l}.heads.{k}.weight"), h.w.clone()));
                        out.push((format!("layers.{l}.heads.{k}.att_src"), h.att_src.clone()));
                        out.push((format!("layers.{l}.heads.{k}.att_dst"), h.att_dst.clone()));
                    }
                    out.push((format!("layers.{l}.bias"), b.clone()));
                }
            }
        }
        out
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    /// Scalars actually allocated; always equals `count_parameters`.
    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(Tensor::numel).sum()
    }

    pub fn expected_parameters(&self) -> usize {
        count_parameters(&self.config, self.input_dim)
    }

    pub fn zero_grad(&self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }

    /// Runs the encoder and output layer on `graph`, returning the hidden
    /// embedding `H` and the logits `Z`.
    pub fn forward(&self, tape: &mut Tape, graph: &PreparedGraph, mode: Mode, access: Access) -> Result<StudentOutput> {
        let x = tape.constant_arc(Arc::clone(&graph.features));
        self.forward_from(tape, x, graph, mode, access)
    }

    /// Same as [`forward`](Self::forward) but on an input variable that may
    /// itself depend on other parameters.
    pub fn forward_from(
        &self,
        tape: &mut Tape,
        x: Var,
        graph: &PreparedGraph,
        mode: Mode,
        access: Access,
    ) -> Result<StudentOutput> {
        let (rows, cols) = tape.value(x).shape();
        if cols != self.input_dim || rows != graph.num_nodes() {
            return Err(Error::shape(
                "StudentModel::forward",
                format!("{}x{}", graph.num_nodes(), self.input_dim),
                format!("{rows}x{cols}"),
            ));
        }
        let n_layers = self.layers.len();
        let mut h = x;
        let mut hidden = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let last = l + 1 == n_layers;
            let input = match mode {
                Mode::Train(stream) => tape.dropout(h, self.config.dropout, true, stream.child(l as u64))?,
                Mode::Eval => h,
            };
            let pre = self.layer_forward(tape, layer, input, graph, access, last)?.0;
            h = if last {
                pre
            } else {
                activate(tape, pre, self.config.hidden_activation)?
            };
            if l + 2 == n_layers {
                hidden = h;
            }
        }
        Ok(StudentOutput { hidden, logits: h })
    }

    fn layer_forward(
        &self,
        tape: &mut Tape,
        layer: &Layer,
        x: Var,
        graph: &PreparedGraph,
        access: Access,
        last: bool,
    ) -> Result<(Var, Vec<Var>)> {
        match layer {
            Layer::Gcn { w, b } => {
                let (w, b) = (read(tape, w, access), read(tape, b, access));
                Ok((gcn_layer(tape, x, &graph.gcn, w, b)?, Vec::new()))
            }
            Layer::Sage { w_self, w_neigh, b } => {
                let ws = read(tape, w_self, access);
                let wn = read(tape, w_neigh, access);
                let b = read(tape, b, access);
                Ok((sage_layer(tape, x, &graph.mean, ws, wn, b)?, Vec::new()))
            }
            Layer::Gat { heads, b } => {
                let hv: Vec<GatHead> = heads
                    .iter()
                    .map(|h| GatHead {
                        w: read(tape, &h.w, access),
                        att_src: read(tape, &h.att_src, access),
                        att_dst: read(tape, &h.att_dst, access),
                    })
                    .collect();
                let b = read(tape, b, access);
                let out = gat_layer(tape, x, &graph.attention, &hv, b, !last, self.config.leaky_relu_slope)?;
                Ok((out.out, out.attention))
            }
        }
    }

    /// Eval-mode attention coefficients of every GAT layer: for layer `l`
    /// and head `k`, an `nnz x 1` column aligned with `graph.attention`.
    pub fn attention_coefficients(&self, graph: &PreparedGraph) -> Result<Vec<Vec<Matrix>>> {
        if self.config.arch != Arch::Gat {
            return Err(Error::InvalidArgument(format!("{} has no attention", self.config.arch)));
        }
        let mut tape = Tape::new();
        let mut h = tape.constant_arc(Arc::clone(&graph.features));
        let mut all = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let last = l + 1 == self.layers.len();
            let (pre, att) = self.layer_forward(&mut tape, layer, h, graph, Access::Frozen, last)?;
            all.push(att.iter().map(|&a| tape.value(a).clone()).collect());
            h = if last {
                pre
            } else {
                activate(&mut tape, pre, self.config.hidden_activation)?
            };
        }
        Ok(all)
    }

    /// Eval-mode `(H, Z)` values.
    pub fn predict(&self, graph: &PreparedGraph) -> Result<(Matrix, Matrix)> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, graph, Mode::Eval, Access::Frozen)?;
        Ok((tape.value(out.hidden).clone(), tape.value(out.logits).clone()))
    }

    pub(crate) fn from_named(config: ModelConfig, input_dim: usize, seed: u64, named: &[(String, Matrix)]) -> Result<Self> {
        let model = Self::new(config, input_dim, seed)?;
        super::checkpoint::assign(&model.named_parameters(), named)?;
        Ok(model)
    }
}

pub(crate) fn activate(tape: &mut Tape, v: Var, act: Activation) -> Result<Var> {
    match act {
        Activation::Relu => tape.relu(v),
        Activation::Elu => tape.elu(v, 1.0),
        Activation::Identity => Ok(v),
    }
}
