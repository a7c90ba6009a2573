use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Self::Adam),
            "sgd_momentum" | "sgd" => Ok(Self::SgdMomentum),
            other => Err(Error::InvalidArgument(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::SgdMomentum => "sgd_momentum",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    /// Only used by SGD with momentum.
    pub momentum: f64,
}

impl OptimizerConfig {
    pub fn adam(lr: f64, weight_decay: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            weight_decay,
            momentum: 0.9,
        }
    }

    pub fn sgd_momentum(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            kind: OptimizerKind::SgdMomentum,
            lr,
            weight_decay,
            momentum,
        }
    }

    pub fn without_weight_decay(self) -> Self {
        Self {
            weight_decay: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation("lr", format!("{} must be positive", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::validation("weight_decay", format!("{} must be non-negative", self.weight_decay)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::validation("momentum", format!("{} outside [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
pub const ADAM_EPS: f64 = 1e-8;

/// One Adam update of `w` at step `t` (1-based). Weight decay is added to
/// the gradient before the moment updates.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    w: &mut Matrix,
    g: &Matrix,
    m: &mut Matrix,
    v: &mut Matrix,
    t: u64,
    lr: f64,
    weight_decay: f64,
    betas: (f64, f64),
    eps: f64,
) -> Result<()> {
    w.check_same_shape(g, "adam_step")?;
    w.check_same_shape(m, "adam_step")?;
    w.check_same_shape(v, "adam_step")?;
    let (b1, b2) = betas;
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for (((wi, &gi), mi), vi) in w
        .data_mut()
        .iter_mut()
        .zip(g.data())
        .zip(m.data_mut())
        .zip(v.data_mut())
    {
        let gi = gi + weight_decay * *wi;
        *mi = b1 * *mi + (1.0 - b1) * gi;
        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
        let m_hat = *mi / c1;
        let v_hat = *vi / c2;
        *wi -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// `v ← μv + (g + wd·w); w ← w − lr·v`.
pub fn sgd_momentum_step(
    w: &mut Matrix,
    g: &Matrix,
    velocity: &mut Matrix,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    w.check_same_shape(g, "sgd_momentum_step")?;
    w.check_same_shape(velocity, "sgd_momentum_step")?;
    for ((wi, &gi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(velocity.data_mut()) {
        *vi = momentum * *vi + (gi + weight_decay * *wi);
        *wi -= lr * *vi;
    }
    Ok(())
}

/// Optimizer bound to one model's parameters.
#[derive(Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    params: Vec<Tensor>,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        if let Some(p) = params.iter().find(|p| !p.requires_grad()) {
            return Err(Error::InvalidArgument(format!("optimizer given a non-trainable tensor {p:?}")));
        }
        let zeros = |p: &Tensor| {
            let (r, c) = p.shape();
            Matrix::zeros(r, c)
        };
        let first = params.iter().map(zeros).collect();
        let second = match config.kind {
            OptimizerKind::Adam => params.iter().map(zeros).collect(),
            OptimizerKind::SgdMomentum => Vec::new(),
        };
        Ok(Self {
            config,
            params,
            first,
            second,
            steps: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    /// Applies one update from the gradients currently accumulated in the
    /// parameters.
    pub fn step(&mut self) -> Result<()> {
        self.steps += 1;
        let c = self.config;
        for (i, p) in self.params.iter().enumerate() {
            let m = &mut self.first[i];
            let r = match c.kind {
                OptimizerKind::Adam => {
                    let v = &mut self.second[i];
                    p.update(|w, g| adam_step(w, g, m, v, self.steps, c.lr, c.weight_decay, ADAM_BETAS, ADAM_EPS))
                }
                OptimizerKind::SgdMomentum => {
                    p.update(|w, g| sgd_momentum_step(w, g, m, c.lr, c.momentum, c.weight_decay))
                }
            };
            r.expect("parameters are trainable")?;
        }
        Ok(())
    }
}
