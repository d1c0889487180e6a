//! Forward evaluation of the head and the analytic gradient of the
//! cross-entropy loss with respect to the input vector.
//!
//! All arithmetic runs in `f64` over `f32` parameters, accumulating dot
//! products in index order so batched and per-row results are bitwise equal.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::params::{Activation, MlmHeadParams};
use super::projection::VocabProjection;
use crate::error::{Error, Result};

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Dense-layer output before the activation.
    pub pre_activation: Vec<f64>,
    /// Normalized activations, before gamma/beta.
    pub normalized: Vec<f64>,
    pub inv_std: f64,
    /// Output of the transform `g(h)`.
    pub transformed: Vec<f64>,
    pub logits: Vec<f64>,
    pub log_sum_exp: f64,
}

impl ForwardTrace {
    pub fn prob(&self, token: usize) -> f64 {
        (self.logits[token] - self.log_sum_exp).exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.logits
            .iter()
            .map(|l| (l - self.log_sum_exp).exp())
            .collect()
    }

    /// `-log p[target]`.
    pub fn cross_entropy(&self, target: usize) -> f64 {
        self.log_sum_exp - self.logits[target]
    }
}

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + libm::erf(u * FRAC_1_SQRT_2))
}

fn gelu_grad(u: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(u * FRAC_1_SQRT_2));
    let pdf = (-0.5 * u * u).exp() / (2.0 * PI).sqrt();
    cdf + u * pdf
}

#[inline]
fn dot(row: &[f32], x: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    for (w, v) in row.iter().zip(x) {
        acc += *w as f64 * v;
    }
    acc
}

impl MlmHeadParams {
    fn check_input(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: h.len(),
            });
        }
        if let Some(i) = h.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite input at index {i}")));
        }
        Ok(())
    }

    /// The transform `g(h) = LayerNorm(act(W h + b))`.
    fn transform(&self, h: &[f64]) -> (Vec<f64>, Vec<f64>, f64, Vec<f64>) {
        let d = self.dim;
        let pre: Vec<f64> = (0..d)
            .map(|i| dot(&self.transform_weight[i * d..(i + 1) * d], h) + self.transform_bias[i] as f64)
            .collect();
        let act: Vec<f64> = match self.activation {
            Activation::Gelu => pre.iter().map(|&u| gelu(u)).collect(),
            Activation::Identity => pre.clone(),
        };
        let mean = act.iter().sum::<f64>() / d as f64;
        let var = act.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / d as f64;
        let inv_std = 1.0 / (var + self.eps).sqrt();
        let normalized: Vec<f64> = act.iter().map(|a| (a - mean) * inv_std).collect();
        let out = normalized
            .iter()
            .zip(self.gamma.iter().zip(&self.beta))
            .map(|(x, (g, b))| x * *g as f64 + *b as f64)
            .collect();
        (pre, normalized, inv_std, out)
    }

    pub fn forward_trace(&self, h: &[f64]) -> Result<ForwardTrace> {
        self.check_input(h)?;
        let d = self.dim;
        let (pre_activation, normalized, inv_std, transformed) = self.transform(h);
        let logits: Vec<f64> = (0..self.vocab_size)
            .map(|t| {
                dot(&self.decoder_weight[t * d..(t + 1) * d], &transformed)
                    + self.decoder_bias[t] as f64
            })
            .collect();
        if let Some(t) = logits.iter().position(|l| !l.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logit for token {t}")));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let log_sum_exp = max + sum.ln();
        Ok(ForwardTrace {
            pre_activation,
            normalized,
            inv_std,
            transformed,
            logits,
            log_sum_exp,
        })
    }

    pub fn forward(&self, h: &[f64]) -> Result<VocabProjection> {
        let trace = self.forward_trace(h)?;
        let probs = trace.probs();
        Ok(VocabProjection::from_parts(String::new(), trace.logits, probs))
    }

    pub fn forward_f32(&self, h: &[f32]) -> Result<VocabProjection> {
        let h: Vec<f64> = h.iter().map(|&v| v as f64).collect();
        self.forward(&h)
    }

    /// Gradient of `-log p[target]` with respect to `h`, given a trace of the
    /// forward pass at `h`.
    pub fn backward_from_trace(&self, trace: &ForwardTrace, target: usize) -> Result<Vec<f64>> {
        if target >= self.vocab_size {
            return Err(Error::validation(format!(
                "target token {target} outside vocabulary of {}",
                self.vocab_size
            )));
        }
        let d = self.dim;

        // Through softmax and the output projection: dz = V^T (p - onehot).
        let mut d_out = vec![0.0f64; d];
        for t in 0..self.vocab_size {
            let mut g = trace.prob(t);
            if t == target {
                g -= 1.0;
            }
            let row = &self.decoder_weight[t * d..(t + 1) * d];
            for (acc, w) in d_out.iter_mut().zip(row) {
                *acc += g * *w as f64;
            }
        }

        // Through LayerNorm.
        let d_norm: Vec<f64> = d_out
            .iter()
            .zip(&self.gamma)
            .map(|(g, gamma)| g * *gamma as f64)
            .collect();
        let mean_d = d_norm.iter().sum::<f64>() / d as f64;
        let mean_dx = d_norm
            .iter()
            .zip(&trace.normalized)
            .map(|(g, x)| g * x)
            .sum::<f64>()
            / d as f64;
        let d_act: Vec<f64> = d_norm
            .iter()
            .zip(&trace.normalized)
            .map(|(g, x)| trace.inv_std * (g - mean_d - x * mean_dx))
            .collect();

        // Through the activation.
        let d_pre: Vec<f64> = match self.activation {
            Activation::Gelu => d_act
                .iter()
                .zip(&trace.pre_activation)
                .map(|(g, &u)| g * gelu_grad(u))
                .collect(),
            Activation::Identity => d_act,
        };

        // Through the dense layer: dh = W^T du.
        let mut d_h = vec![0.0f64; d];
        for (i, g) in d_pre.iter().enumerate() {
            let row = &self.transform_weight[i * d..(i + 1) * d];
            for (acc, w) in d_h.iter_mut().zip(row) {
                *acc += g * *w as f64;
            }
        }
        if let Some(i) = d_h.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient at index {i}")));
        }
        Ok(d_h)
    }

    /// Cross-entropy `-log p[target]` at `h` and its gradient.
    pub fn loss_and_grad(&self, h: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
        let trace = self.forward_trace(h)?;
        let grad = self.backward_from_trace(&trace, target)?;
        Ok((trace.cross_entropy(target), grad))
    }

    pub fn backward(&self, h: &[f64], target: usize) -> Result<Vec<f64>> {
        self.loss_and_grad(h, target).map(|(_, g)| g)
    }
}
