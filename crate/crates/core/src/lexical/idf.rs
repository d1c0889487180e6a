use std::path::Path;

use rayon::prelude::*;

use crate::datastore::{read_bundle, write_bundle, Tensor, TensorBundle};
use crate::error::{Error, Result};

/// Smoothed inverse document frequency, `ln(1 + (N - df + 0.5) / (df + 0.5))`.
/// Positive for every `df <= N`, so ubiquitous tokens are down-weighted but
/// never removed.
pub fn smoothed_idf(n_docs: u64, df: u64) -> f64 {
    let n = n_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    n_docs: u64,
    df: Vec<u64>,
    idf: Vec<f32>,
}

impl IdfTable {
    /// Build from per-document token id streams over a vocabulary of
    /// `vocab_size` ids. Ids outside the vocabulary are ignored.
    pub fn from_token_streams<S>(streams: &[S], vocab_size: usize) -> Result<Self>
    where
        S: AsRef<[u32]> + Sync,
    {
        if streams.is_empty() {
            return Err(Error::Empty("IDF needs at least one document".into()));
        }
        let df = streams
            .par_iter()
            .fold(
                || vec![0u64; vocab_size],
                |mut acc, doc| {
                    let mut ids: Vec<u32> = doc
                        .as_ref()
                        .iter()
                        .copied()
                        .filter(|&t| (t as usize) < vocab_size)
                        .collect();
                    ids.sort_unstable();
                    ids.dedup();
                    for t in ids {
                        acc[t as usize] += 1;
                    }
                    acc
                },
            )
            .reduce(
                || vec![0u64; vocab_size],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        Ok(Self::from_counts(streams.len() as u64, df))
    }

    pub fn from_counts(n_docs: u64, df: Vec<u64>) -> Self {
        let idf = df
            .iter()
            .map(|&d| smoothed_idf(n_docs, d) as f32)
            .collect();
        IdfTable { n_docs, df, idf }
    }

    /// A table that gives every token weight `w`.
    pub fn constant(vocab_size: usize, w: f32) -> Self {
        IdfTable {
            n_docs: 0,
            df: vec![0; vocab_size],
            idf: vec![w; vocab_size],
        }
    }

    /// Directly supplied weights (no document statistics).
    pub fn from_weights(weights: Vec<f32>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::validation(format!(
                "idf weight {i} must be finite and non-negative"
            )));
        }
        Ok(IdfTable {
            n_docs: 0,
            df: vec![0; weights.len()],
            idf: weights,
        })
    }

    pub fn weight(&self, token: u32) -> f32 {
        self.idf[token as usize]
    }

    pub fn weights(&self) -> &[f32] {
        &self.idf
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn df(&self, token: u32) -> u64 {
        self.df[token as usize]
    }

    pub fn vocab_size(&self) -> usize {
        self.idf.len()
    }

    pub fn to_bundle(&self) -> TensorBundle {
        let mut b = TensorBundle::new();
        b.insert("idf", Tensor::vector(self.idf.clone()))
            .insert("N", Tensor::scalar(self.n_docs as f32))
            .insert("df", Tensor::vector(self.df.iter().map(|&d| d as f32).collect()));
        b.set_meta("kind", "idf")
            .set_meta("n_docs", self.n_docs.to_string());
        b
    }

    pub fn from_bundle(bundle: &TensorBundle) -> Result<Self> {
        let idf = bundle.get("idf")?.data.clone();
        let df_f = &bundle.get("df")?.data;
        if df_f.len() != idf.len() {
            return Err(Error::validation("idf and df lengths differ"));
        }
        // The exact document count is kept in metadata; the `N` tensor is an
        // f32 copy for consumers that only read tensors.
        let n_docs = match bundle.meta("n_docs") {
            Some(s) => s
                .parse::<u64>()
                .map_err(|_| Error::validation(format!("bad n_docs `{s}`")))?,
            None => bundle.get("N")?.data[0] as u64,
        };
        let df: Vec<u64> = df_f.iter().map(|&d| d as u64).collect();
        if let Some(t) = df.iter().position(|&d| d > n_docs) {
            return Err(Error::validation(format!(
                "df of token {t} exceeds document count {n_docs}"
            )));
        }
        let mut table = Self::from_weights(idf)?;
        table.n_docs = n_docs;
        table.df = df;
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bundle(&self.to_bundle(), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bundle(&read_bundle(path)?)
    }
}
