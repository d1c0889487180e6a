//! Okapi BM25 over an inverted index, with either plain words or WordPiece
//! tokens as index terms.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dense::top_k_docs;
use super::run::RunList;
use crate::datastore::CorpusRecord;
use crate::error::{Error, Result};
use crate::lexical::{smoothed_idf, tokenize, word_tokens, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermMode {
    /// Lowercased words, punctuation removed.
    Word,
    /// WordPiece tokens of the encoder vocabulary (special tokens dropped).
    Wordpiece,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub params: Bm25Params,
    pub mode: TermMode,
    doc_ids: Vec<String>,
    doc_lens: Vec<u32>,
    avg_len: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

/// Index terms for `text` under `mode`.
pub fn terms(mode: TermMode, vocab: Option<&Vocabulary>, text: &str) -> Result<Vec<String>> {
    match mode {
        TermMode::Word => Ok(word_tokens(text)),
        TermMode::Wordpiece => {
            let vocab = vocab.ok_or_else(|| {
                Error::validation("wordpiece BM25 needs the encoder vocabulary")
            })?;
            Ok(tokenize(vocab, text)
                .into_iter()
                .filter(|&id| !vocab.is_special(id))
                .filter_map(|id| vocab.token(id).map(str::to_string))
                .collect())
        }
    }
}

impl Bm25Index {
    pub fn build(
        corpus: &[CorpusRecord],
        mode: TermMode,
        vocab: Option<&Vocabulary>,
        params: Bm25Params,
    ) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("BM25 index over an empty corpus".into()));
        }
        let docs: Vec<Vec<String>> = corpus
            .par_iter()
            .map(|r| terms(mode, vocab, &r.full_text()))
            .collect::<Result<_>>()?;
        let doc_lens: Vec<u32> = docs.iter().map(|d| d.len() as u32).collect();
        let total: u64 = doc_lens.iter().map(|&l| l as u64).sum();
        if total == 0 {
            return Err(Error::Empty("every document tokenizes to nothing".into()));
        }
        let avg_len = total as f64 / docs.len() as f64;

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (doc, terms) in docs.into_iter().enumerate() {
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for t in terms {
                *counts.entry(t).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting {
                    doc: doc as u32,
                    tf,
                });
            }
        }
        Ok(Bm25Index {
            params,
            mode,
            doc_ids: corpus.iter().map(|r| r.id.clone()).collect(),
            doc_lens,
            avg_len,
            postings,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn idf(&self, term: &str) -> f64 {
        smoothed_idf(self.n_docs() as u64, self.postings(term).len() as u64)
    }

    fn term_weight(&self, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = 1.0 - b + b * doc_len as f64 / self.avg_len;
        tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// Scores for every document; `None` for documents sharing no term with
    /// the query. Each distinct query term counts once.
    pub fn score_terms(&self, query_terms: &[String]) -> Vec<Option<f64>> {
        let mut unique: Vec<&String> = query_terms.iter().collect();
        unique.sort();
        unique.dedup();
        let mut scores: Vec<Option<f64>> = vec![None; self.n_docs()];
        for term in unique {
            let postings = self.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = self.idf(term);
            for p in postings {
                let s = scores[p.doc as usize].get_or_insert(0.0);
                *s += idf * self.term_weight(p.tf, self.doc_lens[p.doc as usize]);
            }
        }
        scores
    }

    pub fn search_text(
        &self,
        vocab: Option<&Vocabulary>,
        text: &str,
        k: usize,
    ) -> Result<Vec<super::ScoredDoc>> {
        let query_terms = terms(self.mode, vocab, text)?;
        let scores = self.score_terms(&query_terms);
        let flat: Vec<f64> = scores.iter().map(|s| s.unwrap_or(0.0)).collect();
        Ok(top_k_docs(&self.doc_ids, &flat, k, |i| scores[i].is_some()))
    }

    /// Search every `(query id, text)` pair. Queries without matching terms
    /// get an empty ranking.
    pub fn search<'q, I>(&self, vocab: Option<&Vocabulary>, queries: I, k: usize) -> Result<RunList>
    where
        I: IntoIterator<Item = (&'q str, &'q str)>,
    {
        if k == 0 {
            return Err(Error::validation("search depth must be at least 1"));
        }
        let queries: Vec<(&str, &str)> = queries.into_iter().collect();
        let ranked: Vec<Vec<super::ScoredDoc>> = queries
            .par_iter()
            .map(|(_, text)| self.search_text(vocab, text, k))
            .collect::<Result<_>>()?;
        let mut run = RunList::new();
        for ((qid, _), docs) in queries.iter().zip(ranked) {
            run.insert(*qid, docs)?;
        }
        Ok(run)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::format(path, e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let index: Bm25Index =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if index.doc_lens.len() != index.doc_ids.len() || !(index.avg_len > 0.0) {
            return Err(Error::format(path, "inconsistent BM25 index"));
        }
        Ok(index)
    }
}
