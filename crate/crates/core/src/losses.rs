//! Class posteriors and the losses built on them.
//!
//! The batched, differentiable versions of these functions live on
//! [`Graph`](crate::graph::Graph) (`softmax_cross_entropy`, `kl_imitation`);
//! the functions here evaluate single probability vectors in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LOG_EPS;
use crate::kernels;

/// A categorical distribution together with the temperature that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    values: Vec<f64>,
    temperature: f64,
}

impl ProbabilityVector {
    /// Validates non-negativity and normalisation (within 1e-9).
    pub fn new(values: Vec<f64>, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::contract(format!("temperature must be positive, got {temperature}")));
        }
        if values.is_empty() || values.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::contract("probabilities must be non-negative"));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self {
            values,
            temperature,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn classes(&self) -> usize {
        self.values.len()
    }

    /// Most probable class, lowest index on ties.
    pub fn argmax(&self) -> usize {
        kernels::argmax(&self.values)
    }
}

/// `exp(z_c / T) / Σ_j exp(z_j / T)`, evaluated with max-logit subtraction.
pub fn softened_softmax(logits: &[f64], temperature: f64) -> Result<ProbabilityVector> {
    if !(temperature > 0.0) {
        return Err(Error::contract(format!("temperature must be positive, got {temperature}")));
    }
    if logits.is_empty() || logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("logits must be finite and non-empty"));
    }
    let mut out = vec![0.0; logits.len()];
    kernels::log_softmax(logits, temperature, &mut out);
    let mut sum = 0.0;
    for v in &mut out {
        *v = v.exp();
        sum += *v;
    }
    // exp(log_softmax) can drift from 1 by a few ulps
    for v in &mut out {
        *v /= sum;
    }
    Ok(ProbabilityVector {
        values: out,
        temperature,
    })
}

/// The plain softmax posterior (temperature 1).
pub fn softmax(logits: &[f64]) -> Result<ProbabilityVector> {
    softened_softmax(logits, 1.0)
}

/// Negative log-likelihood of `label`, floored at `p = 1e-12`.
pub fn cross_entropy(probs: &ProbabilityVector, label: usize) -> Result<f64> {
    let p = probs
        .values
        .get(label)
        .ok_or_else(|| Error::contract(format!("label {label} out of range for {} classes", probs.classes())))?;
    Ok(-p.max(LOG_EPS).ln())
}

/// `KL(reference ‖ current)`, both floored at 1e-12 inside the logarithms.
pub fn kl_imitation(reference: &ProbabilityVector, current: &ProbabilityVector) -> Result<f64> {
    if reference.classes() != current.classes() {
        return Err(Error::contract(format!(
            "class counts differ: {} vs {}",
            reference.classes(),
            current.classes()
        )));
    }
    if reference.temperature != current.temperature {
        return Err(Error::contract(format!(
            "temperatures differ: {} vs {}",
            reference.temperature, current.temperature
        )));
    }
    let kl = reference
        .values
        .iter()
        .zip(&current.values)
        .map(|(&r, &q)| r * (r.max(LOG_EPS).ln() - q.max(LOG_EPS).ln()))
        .sum::<f64>();
    // the floor can push a near-zero divergence a hair below zero
    Ok(kl.max(0.0))
}

/// The decomposed two-term objective `total = ce + T²·kl`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub ce: f64,
    pub kl: f64,
    pub total: f64,
    pub temperature: f64,
}

/// Combines label cross-entropy with the imitation term, weighting the latter
/// by the squared temperature.
///
/// # Panics
/// If `temperature` is not positive.
pub fn srdl_total(ce: f64, kl: f64, temperature: f64) -> LossReport {
    assert!(temperature > 0.0, "temperature must be positive, got {temperature}");
    LossReport {
        ce,
        kl,
        total: ce + temperature * temperature * kl,
        temperature,
    }
}
