use std::cmp::Ordering;

use rayon::prelude::*;

use super::params::MlmHeadParams;
use crate::datastore::EmbeddingStore;
use crate::error::{Error, Result};

/// A distribution over the vocabulary obtained by feeding one embedding
/// through the MLM head.
///
/// Tokens are ordered by logit (the same order as probability, without the
/// underflow ties `exp` produces far in the tail), ties broken by ascending
/// token id.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabProjection {
    pub source_id: String,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl VocabProjection {
    pub(crate) fn from_parts(source_id: String, logits: Vec<f64>, probs: Vec<f64>) -> Self {
        VocabProjection {
            source_id,
            logits,
            probs,
        }
    }

    /// Build from raw logits; probabilities are the max-shifted softmax.
    pub fn from_logits(source_id: impl Into<String>, logits: Vec<f64>) -> Result<Self> {
        if logits.len() < 2 {
            return Err(Error::validation("a projection needs at least 2 logits"));
        }
        if let Some(t) = logits.iter().position(|l| !l.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logit for token {t}")));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let probs = exps.into_iter().map(|e| e / sum).collect();
        Ok(VocabProjection::from_parts(source_id.into(), logits, probs))
    }

    pub fn with_source(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn vocab_size(&self) -> usize {
        self.logits.len()
    }

    fn order(&self, a: usize, b: usize) -> Ordering {
        self.logits[b]
            .total_cmp(&self.logits[a])
            .then_with(|| a.cmp(&b))
    }

    /// The `k` most probable tokens with their probabilities, descending.
    pub fn top_k(&self, k: usize) -> Result<Vec<(usize, f64)>> {
        let n = self.vocab_size();
        if k == 0 || k > n {
            return Err(Error::validation(format!(
                "k must be in 1..={n}, got {k}"
            )));
        }
        let mut ids: Vec<usize> = (0..n).collect();
        if k < n {
            ids.select_nth_unstable_by(k - 1, |&a, &b| self.order(a, b));
            ids.truncate(k);
        }
        ids.sort_unstable_by(|&a, &b| self.order(a, b));
        Ok(ids.into_iter().map(|t| (t, self.probs[t])).collect())
    }

    /// Token ids in rank order.
    pub fn ranked_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.vocab_size()).collect();
        ids.sort_unstable_by(|&a, &b| self.order(a, b));
        ids
    }

    /// 1-based rank of `token`.
    pub fn rank_of(&self, token: usize) -> Result<usize> {
        let n = self.vocab_size();
        if token >= n {
            return Err(Error::validation(format!(
                "token {token} outside vocabulary of {n}"
            )));
        }
        let ahead = (0..n)
            .filter(|&j| self.order(j, token) == Ordering::Less)
            .count();
        Ok(ahead + 1)
    }
}

/// Project every row of `store`, preserving store order.
pub fn project_store(head: &MlmHeadParams, store: &EmbeddingStore) -> Result<Vec<VocabProjection>> {
    if store.is_empty() {
        return Ok(Vec::new());
    }
    if store.dim() != head.dim() {
        return Err(Error::DimensionMismatch {
            expected: head.dim(),
            got: store.dim(),
        });
    }
    (0..store.len())
        .into_par_iter()
        .map(|i| {
            head.forward_f32(store.row(i))
                .map(|p| p.with_source(store.ids()[i].clone()))
                .map_err(|e| e.context(format!("row `{}`", store.ids()[i])))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proj(logits: Vec<f64>) -> VocabProjection {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let probs = logits.iter().map(|l| (l - max).exp() / z).collect();
        VocabProjection::from_parts("x".into(), logits, probs)
    }

    #[test]
    fn uniform_ties_break_by_id() {
        let p = proj(vec![0.0; 6]);
        let ids: Vec<usize> = p.top_k(3).unwrap().into_iter().map(|(t, _)| t).collect();
        assert_eq!(ids, [0, 1, 2]);
        assert_eq!(p.rank_of(5).unwrap(), 6);
    }

    #[test]
    fn full_k_is_permutation() {
        let p = proj(vec![0.3, -1.0, 2.0, 0.3, 5.0]);
        let mut ids: Vec<usize> = p.top_k(5).unwrap().into_iter().map(|(t, _)| t).collect();
        assert_eq!(ids, [4, 2, 0, 3, 1]);
        ids.sort();
        assert_eq!(ids, [0, 1, 2, 3, 4]);
    }

    #[test]
    fn argmax_and_minimum_ranks() {
        let p = proj(vec![0.3, -1.0, 2.0, 0.1]);
        assert_eq!(p.rank_of(2).unwrap(), 1);
        assert_eq!(p.rank_of(1).unwrap(), 4);
    }

    #[test]
    fn k_out_of_range() {
        let p = proj(vec![0.0, 1.0]);
        assert!(p.top_k(0).is_err());
        assert!(p.top_k(3).is_err());
        assert!(p.rank_of(2).is_err());
    }
}
