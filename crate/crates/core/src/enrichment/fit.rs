//! Single-token enrichments: for every vocabulary item `t`, an input vector
//! whose projection through the head puts almost all mass on `t`.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use crate::error::{Error, Result};
use crate::mlm_head::MlmHeadParams;
use crate::synthetic::{mix_seed, rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    /// Stop once `-log p[t]` is at or below this value.
    pub loss_threshold: f64,
    pub max_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Standard deviation of the noise added to the warm start.
    pub init_noise: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 0.01,
            loss_threshold: 0.1,
            max_steps: 2000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            init_noise: 0.01,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.loss_threshold > 0.0 && self.loss_threshold.is_finite()) {
            return Err(Error::validation(format!(
                "loss threshold must be positive, got {}",
                self.loss_threshold
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::validation("max steps must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::validation("moment decay rates must lie in [0, 1)"));
        }
        if !(self.init_noise >= 0.0) {
            return Err(Error::validation("init noise must be non-negative"));
        }
        Ok(())
    }
}

/// Outcome of optimizing one token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFit {
    pub vector: Vec<f32>,
    pub converged: bool,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentTable {
    dim: usize,
    rows: Vec<f32>,
    converged: Vec<bool>,
    losses: Vec<f64>,
    initial_losses: Vec<f64>,
    steps: Vec<usize>,
}

impl EnrichmentTable {
    pub fn from_fits(dim: usize, fits: Vec<TokenFit>) -> Self {
        let mut t = EnrichmentTable {
            dim,
            rows: Vec::with_capacity(fits.len() * dim),
            converged: Vec::with_capacity(fits.len()),
            losses: Vec::with_capacity(fits.len()),
            initial_losses: Vec::with_capacity(fits.len()),
            steps: Vec::with_capacity(fits.len()),
        };
        for f in fits {
            t.rows.extend_from_slice(&f.vector);
            t.converged.push(f.converged);
            t.losses.push(f.final_loss);
            t.initial_losses.push(f.initial_loss);
            t.steps.push(f.steps);
        }
        t
    }

    pub(crate) fn from_parts(
        dim: usize,
        rows: Vec<f32>,
        converged: Vec<bool>,
        losses: Vec<f64>,
    ) -> Result<Self> {
        let n = converged.len();
        if rows.len() != n * dim || losses.len() != n {
            return Err(Error::validation("enrichment table parts disagree in size"));
        }
        Ok(EnrichmentTable {
            dim,
            rows,
            converged,
            losses,
            initial_losses: vec![f64::NAN; n],
            steps: vec![0; n],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.converged.len()
    }

    pub fn row(&self, token: usize) -> &[f32] {
        &self.rows[token * self.dim..(token + 1) * self.dim]
    }

    pub fn rows(&self) -> &[f32] {
        &self.rows
    }

    pub fn is_converged(&self, token: usize) -> bool {
        self.converged[token]
    }

    pub fn converged(&self) -> &[bool] {
        &self.converged
    }

    pub fn loss(&self, token: usize) -> f64 {
        self.losses[token]
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    /// Loss at the warm start, before any optimizer step. NaN for tables
    /// loaded from disk.
    pub fn initial_loss(&self, token: usize) -> f64 {
        self.initial_losses[token]
    }

    pub fn steps(&self, token: usize) -> usize {
        self.steps[token]
    }

    pub fn unconverged(&self) -> Vec<usize> {
        (0..self.vocab_size()).filter(|&t| !self.converged[t]).collect()
    }

    /// Rows of converged tokens, row-major.
    pub fn converged_rows(&self) -> Vec<f32> {
        (0..self.vocab_size())
            .filter(|&t| self.converged[t])
            .flat_map(|t| self.row(t).iter().copied())
            .collect()
    }
}

/// Minimize `-log MLM-Head(s)[token]` with Adam, warm-started at the token's
/// output embedding plus seeded Gaussian noise.
///
/// The iterate is kept in `f64`; loss and gradient are evaluated at its `f32`
/// rounding, which is what gets stored, so a converged row is exactly the
/// vector whose loss met the threshold.
pub fn fit_token(head: &MlmHeadParams, token: usize, cfg: &OptimizerConfig) -> TokenFit {
    let d = head.dim();
    let mut rng = rng(mix_seed(cfg.seed, token as u64));
    let mut x: Vec<f64> = head.token_embedding(token).iter().map(|&v| v as f64).collect();
    if cfg.init_noise > 0.0 {
        let noise = Normal::new(0.0, cfg.init_noise).expect("non-negative sd");
        x.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    let mut opt = Adam::new(d, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut initial_loss = f64::NAN;
    let mut rounded: Vec<f32> = x.iter().map(|&v| v as f32).collect();
    let mut last_loss = f64::NAN;

    for step in 0..=cfg.max_steps {
        rounded = x.iter().map(|&v| v as f32).collect();
        let point: Vec<f64> = rounded.iter().map(|&v| v as f64).collect();
        let (loss, grad) = match head.loss_and_grad(&point, token) {
            Ok(r) if r.0.is_finite() => r,
            _ => {
                return TokenFit {
                    vector: rounded,
                    converged: false,
                    initial_loss,
                    final_loss: f64::NAN,
                    steps: step,
                }
            }
        };
        if step == 0 {
            initial_loss = loss;
        }
        last_loss = loss;
        if loss <= cfg.loss_threshold {
            return TokenFit {
                vector: rounded,
                converged: true,
                initial_loss,
                final_loss: loss,
                steps: step,
            };
        }
        if step == cfg.max_steps {
            break;
        }
        opt.step(&mut x, &grad);
    }
    TokenFit {
        vector: rounded,
        converged: false,
        initial_loss,
        final_loss: last_loss,
        steps: cfg.max_steps,
    }
}

/// Fit every vocabulary item. Work is spread across the current rayon pool;
/// each token uses its own seed derived from `cfg.seed`, so the table does
/// not depend on the number of workers.
pub fn fit_single_token_enrichments(
    head: &MlmHeadParams,
    cfg: &OptimizerConfig,
) -> Result<EnrichmentTable> {
    cfg.validate()?;
    let fits: Vec<TokenFit> = (0..head.vocab_size())
        .into_par_iter()
        .map(|t| fit_token(head, t, cfg))
        .collect();
    let table = EnrichmentTable::from_fits(head.dim(), fits);
    let unconverged = table.unconverged();
    if !unconverged.is_empty() {
        log::warn!(
            "{} of {} tokens did not reach loss {} within {} steps",
            unconverged.len(),
            table.vocab_size(),
            cfg.loss_threshold,
            cfg.max_steps
        );
    }
    Ok(table)
}
