//! SGD with Nesterov momentum and L2 weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParameterSet;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 0.0002,
            batch_size: 128,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("optimizer.momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("optimizer.weight_decay", "must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("optimizer.batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Per-parameter momentum buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity<F> {
    buffers: Vec<Vec<F>>,
}

impl<F: Real> Velocity<F> {
    pub fn zeros_like(params: &ParameterSet<F>) -> Self {
        Self {
            buffers: params.tensors().map(|t| vec![F::zero(); t.len()]).collect(),
        }
    }

    pub fn buffer(&self, i: usize) -> &[F] {
        &self.buffers[i]
    }
}

/// One update:
///
/// ```text
/// d ← g + wd·θ
/// v ← μ·v − lr·d
/// θ ← θ + μ·v − lr·d
/// ```
///
/// Gradients are checked for finiteness before anything is modified.
pub fn sgd_step<F: Real>(
    params: &mut ParameterSet<F>,
    grads: &[Tensor<F>],
    velocity: &mut Velocity<F>,
    lr: f64,
    opt: &OptimizerConfig,
) -> Result<()> {
    if grads.len() != params.len() || velocity.buffers.len() != params.len() {
        return Err(Error::shape(
            "sgd_step",
            format!("{} parameters, {} gradients", params.len(), grads.len()),
        ));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params.tensor(i).shape() {
            return Err(Error::shape(
                "sgd_step",
                format!(
                    "gradient {:?} for `{}` {:?}",
                    g.shape(),
                    params.name(i),
                    params.tensor(i).shape()
                ),
            ));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient {
                param: params.name(i).to_string(),
            });
        }
    }
    let (mu, wd, lr) = (F::of(opt.momentum), F::of(opt.weight_decay), F::of(lr));
    for ((theta, g), v) in params.tensors_mut().zip(grads).zip(&mut velocity.buffers) {
        for ((t, &gv), vv) in theta.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
            let step = lr * (gv + wd * *t);
            *vv = mu * *vv - step;
            *t += mu * *vv - step;
        }
    }
    Ok(())
}
