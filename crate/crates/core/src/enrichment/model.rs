use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::EnrichmentTable;
use super::whitening::{fit_whitening, WhiteningParams};
use crate::datastore::EmbeddingStore;
use crate::error::{Error, Result};
use crate::lexical::{tokenize, IdfTable, Vocabulary};
use crate::mlm_head::MlmHeadParams;

/// Ablation switches for the lexical vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Switches {
    pub use_idf: bool,
    pub use_whitening: bool,
    pub use_l2_norm: bool,
    /// Use the head's output embeddings in place of fitted enrichments.
    pub use_embedding_matrix: bool,
    /// Sum over distinct tokens instead of occurrences.
    pub unique_tokens: bool,
}

impl Default for Switches {
    fn default() -> Self {
        Switches {
            use_idf: true,
            use_whitening: true,
            use_l2_norm: true,
            use_embedding_matrix: false,
            unique_tokens: false,
        }
    }
}

/// Fitted single-token enrichments and the whitening fitted on their
/// converged rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedEnrichments {
    pub table: EnrichmentTable,
    pub whitening: WhiteningParams,
}

impl FittedEnrichments {
    pub fn new(table: EnrichmentTable) -> Result<Self> {
        let whitening = fit_whitening(&table.converged_rows(), table.dim())
            .map_err(|e| e.context("fitting whitening on converged enrichments"))?;
        Ok(FittedEnrichments { table, whitening })
    }
}

/// Everything needed to turn a token sequence into a lexical vector and mix
/// it into a dense representation.
#[derive(Debug, Clone)]
pub struct EnrichmentModel {
    dim: usize,
    /// Effective per-token vectors after the switches are applied.
    rows: Vec<f32>,
    weights: Vec<f32>,
    excluded: Vec<bool>,
    lambda: f64,
    switches: Switches,
}

impl EnrichmentModel {
    /// `excluded` lists token ids that never contribute (special tokens).
    pub fn build(
        head: &MlmHeadParams,
        fitted: &FittedEnrichments,
        idf: &IdfTable,
        excluded: &BTreeSet<u32>,
        lambda: f64,
        switches: Switches,
    ) -> Result<Self> {
        let n = head.vocab_size();
        let d = head.dim();
        if fitted.table.vocab_size() != n || fitted.table.dim() != d {
            return Err(Error::validation(format!(
                "enrichment table is {}x{} but the head is {n}x{d}",
                fitted.table.vocab_size(),
                fitted.table.dim()
            )));
        }
        let rows = if switches.use_embedding_matrix {
            let v: Vec<f32> = (0..n).flat_map(|t| head.token_embedding(t).iter().copied()).collect();
            if switches.use_whitening {
                fit_whitening(&v, d)
                    .map_err(|e| e.context("fitting whitening on output embeddings"))?
                    .apply_rows(&v)?
            } else {
                v
            }
        } else if switches.use_whitening {
            fitted.whitening.apply_rows(fitted.table.rows())?
        } else {
            fitted.table.rows().to_vec()
        };
        let weights = if switches.use_idf {
            if idf.vocab_size() != n {
                return Err(Error::validation(format!(
                    "IDF table covers {} tokens, vocabulary has {n}",
                    idf.vocab_size()
                )));
            }
            idf.weights().to_vec()
        } else {
            vec![1.0; n]
        };
        let mut mask = vec![false; n];
        for &t in excluded {
            if let Some(m) = mask.get_mut(t as usize) {
                *m = true;
            }
        }
        Self::from_rows(d, rows, weights, mask, lambda, switches)
    }

    /// Assemble from explicit per-token vectors and weights.
    pub fn from_rows(
        dim: usize,
        rows: Vec<f32>,
        weights: Vec<f32>,
        excluded: Vec<bool>,
        lambda: f64,
        switches: Switches,
    ) -> Result<Self> {
        let n = weights.len();
        if rows.len() != n * dim || excluded.len() != n {
            return Err(Error::validation("enrichment rows, weights and mask disagree in size"));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::validation(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if let Some(t) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::validation(format!("token {t} has an invalid weight")));
        }
        if let Some(i) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("enrichment row {} is not finite", i / dim)));
        }
        Ok(EnrichmentModel {
            dim,
            rows,
            weights,
            excluded,
            lambda,
            switches,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn switches(&self) -> Switches {
        self.switches
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::validation(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn row(&self, token: u32) -> &[f32] {
        let t = token as usize;
        &self.rows[t * self.dim..(t + 1) * self.dim]
    }

    /// `(1/n) Σ w_i s_i` over the eligible tokens of `ids`.
    pub fn lexical_vector(&self, ids: &[u32]) -> Result<Vec<f64>> {
        let n_vocab = self.vocab_size();
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= n_vocab) {
            return Err(Error::validation(format!(
                "token id {bad} outside vocabulary of {n_vocab}"
            )));
        }
        let mut eligible: Vec<u32> = ids
            .iter()
            .copied()
            .filter(|&t| !self.excluded[t as usize])
            .collect();
        if self.switches.unique_tokens {
            let mut seen = BTreeSet::new();
            eligible.retain(|t| seen.insert(*t));
        }
        if eligible.is_empty() {
            return Err(Error::Empty("empty lexical input".into()));
        }
        let mut acc = vec![0.0f64; self.dim];
        for &t in &eligible {
            let w = self.weights[t as usize] as f64;
            for (a, s) in acc.iter_mut().zip(self.row(t)) {
                *a += w * *s as f64;
            }
        }
        let n = eligible.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }

    /// The vector actually added per unit of λ: the lexical vector, scaled
    /// to unit length when normalization is on.
    pub fn direction(&self, lexical: &[f64]) -> Result<Vec<f64>> {
        if !self.switches.use_l2_norm {
            return Ok(lexical.to_vec());
        }
        let norm = lexical.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numeric(format!("cannot normalize lexical vector of norm {norm}")));
        }
        Ok(lexical.iter().map(|v| v / norm).collect())
    }

    /// `e + λ · direction(lexical)`. With λ = 0 the input comes back
    /// unchanged, bit for bit.
    pub fn enrich(&self, e: &[f64], lexical: &[f64]) -> Result<Vec<f64>> {
        if e.len() != self.dim || lexical.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: if e.len() != self.dim { e.len() } else { lexical.len() },
            });
        }
        if self.lambda == 0.0 {
            return Ok(e.to_vec());
        }
        let dir = self.direction(lexical)?;
        Ok(mix(e, &dir, self.lambda))
    }

    /// Lexical directions for every row of `store`, tokenizing `texts[id]`.
    pub fn store_directions(
        &self,
        vocab: &Vocabulary,
        store: &EmbeddingStore,
        texts: &HashMap<String, String>,
    ) -> Result<Vec<Vec<f64>>> {
        check_texts(store, texts)?;
        if store.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: store.dim(),
            });
        }
        store
            .ids()
            .par_iter()
            .map(|id| {
                let ids = tokenize(vocab, &texts[id]);
                self.lexical_vector(&ids)
                    .and_then(|lex| self.direction(&lex))
                    .map_err(|e| e.context(format!("row `{id}`")))
            })
            .collect()
    }

    /// Enrich every row of `store`. Ids, order and the similarity tag are kept.
    pub fn enrich_store(
        &self,
        vocab: &Vocabulary,
        store: &EmbeddingStore,
        texts: &HashMap<String, String>,
    ) -> Result<EmbeddingStore> {
        if self.lambda == 0.0 {
            check_texts(store, texts)?;
            return Ok(store.clone());
        }
        let dirs = self.store_directions(vocab, store, texts)?;
        mix_store(store, &dirs, self.lambda)
    }
}

fn check_texts(store: &EmbeddingStore, texts: &HashMap<String, String>) -> Result<()> {
    let missing: Vec<&str> = store
        .ids()
        .iter()
        .filter(|id| !texts.contains_key(*id))
        .take(10)
        .map(|s| s.as_str())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::validation(format!("no text for ids: {}", missing.join(", "))))
    }
}

fn mix(e: &[f64], dir: &[f64], lambda: f64) -> Vec<f64> {
    e.iter().zip(dir).map(|(x, u)| x + lambda * u).collect()
}

/// Add `λ · dirs[i]` to row `i` of `store`. Rows are returned to `f32`; with
/// λ = 0 the store is copied unchanged.
pub fn mix_store(store: &EmbeddingStore, dirs: &[Vec<f64>], lambda: f64) -> Result<EmbeddingStore> {
    if dirs.len() != store.len() {
        return Err(Error::validation(format!(
            "{} directions for {} rows",
            dirs.len(),
            store.len()
        )));
    }
    if lambda == 0.0 {
        return Ok(store.clone());
    }
    let mut vectors = Vec::with_capacity(store.vectors().len());
    for (row, dir) in store.rows().zip(dirs) {
        let e: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        vectors.extend(mix(&e, dir, lambda).into_iter().map(|v| v as f32));
    }
    EmbeddingStore::new(store.ids().to_vec(), vectors, store.dim(), store.similarity())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis_model(weights: Vec<f32>, switches: Switches) -> EnrichmentModel {
        let n = weights.len();
        let mut rows = vec![0.0f32; n * n];
        for t in 0..n {
            rows[t * n + t] = 1.0;
        }
        EnrichmentModel::from_rows(n, rows, weights, vec![false; n], 1.0, switches).unwrap()
    }

    #[test]
    fn idf_weighted_average_of_basis_rows() {
        let m = basis_model(vec![2.0, 1.0, 0.5], Switches::default());
        let v = m.lexical_vector(&[0, 1, 2]).unwrap();
        let want = [2.0 / 3.0, 1.0 / 3.0, 0.5 / 3.0];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_token_equals_single() {
        let m = basis_model(vec![2.0, 1.0, 0.5], Switches::default());
        assert_eq!(m.lexical_vector(&[1, 1]).unwrap(), m.lexical_vector(&[1]).unwrap());
    }

    #[test]
    fn occurrences_versus_unique_tokens() {
        let occ = basis_model(vec![1.0; 3], Switches::default());
        let uniq = basis_model(
            vec![1.0; 3],
            Switches {
                unique_tokens: true,
                ..Switches::default()
            },
        );
        assert_eq!(occ.lexical_vector(&[0, 0, 1]).unwrap(), vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
        assert_eq!(uniq.lexical_vector(&[0, 0, 1]).unwrap(), vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn excluded_tokens_do_not_count() {
        let mut m = basis_model(vec![1.0; 3], Switches::default());
        m.excluded[2] = true;
        assert_eq!(m.lexical_vector(&[0, 2]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(matches!(m.lexical_vector(&[2]), Err(Error::Empty(_))));
        assert!(m.lexical_vector(&[]).is_err());
    }

    #[test]
    fn zero_lambda_is_identity() {
        let m = basis_model(vec![1.0; 3], Switches::default()).with_lambda(0.0).unwrap();
        let e = [-0.0, 1.5, f64::MIN_POSITIVE];
        let out = m.enrich(&e, &[1.0, 2.0, 3.0]).unwrap();
        assert!(out.iter().zip(e).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn normalized_direction_from_zero() {
        let m = basis_model(vec![1.0; 3], Switches::default());
        let out = m.enrich(&[0.0; 3], &[3.0, 0.0, 4.0]).unwrap();
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(m.enrich(&[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn raw_direction_without_l2() {
        let m = basis_model(
            vec![1.0; 3],
            Switches {
                use_l2_norm: false,
                ..Switches::default()
            },
        )
        .with_lambda(2.0)
        .unwrap();
        assert_eq!(m.enrich(&[1.0, 0.0, 0.0], &[3.0, 0.0, 4.0]).unwrap(), vec![7.0, 0.0, 8.0]);
    }
}
