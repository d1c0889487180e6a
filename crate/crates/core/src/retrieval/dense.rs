use rayon::prelude::*;

use super::run::{ranking_order, RunList, ScoredDoc};
use crate::datastore::{EmbeddingStore, Similarity};
use crate::error::{Error, Result};

/// Exact (brute-force) inner-product or cosine search over a passage store.
pub struct DenseIndex<'a> {
    passages: &'a EmbeddingStore,
    /// Passage norms, used only under cosine similarity.
    norms: Vec<f64>,
}

pub(crate) fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += *x as f64 * *y as f64;
    }
    acc
}

pub(crate) fn norm_f64(a: &[f32]) -> f64 {
    dot_f64(a, a).sqrt()
}

impl<'a> DenseIndex<'a> {
    pub fn new(passages: &'a EmbeddingStore) -> Result<Self> {
        if passages.is_empty() {
            return Err(Error::Empty("dense index over an empty passage store".into()));
        }
        let norms = match passages.similarity() {
            Similarity::Cosine => passages.rows().map(norm_f64).collect(),
            Similarity::Dot => Vec::new(),
        };
        Ok(DenseIndex { passages, norms })
    }

    pub fn similarity(&self) -> Similarity {
        self.passages.similarity()
    }

    /// Score of every passage for one query vector, in store order.
    pub fn scores(&self, query: &[f32]) -> Vec<f64> {
        match self.similarity() {
            Similarity::Dot => self.passages.rows().map(|p| dot_f64(query, p)).collect(),
            Similarity::Cosine => {
                let qn = norm_f64(query);
                self.passages
                    .rows()
                    .zip(&self.norms)
                    .map(|(p, &pn)| {
                        if qn == 0.0 || pn == 0.0 {
                            0.0
                        } else {
                            dot_f64(query, p) / (qn * pn)
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn search_one(&self, query: &[f32], k: usize) -> Vec<ScoredDoc> {
        let scores = self.scores(query);
        top_k_docs(self.passages.ids(), &scores, k, |_| true)
    }

    pub fn search(&self, queries: &EmbeddingStore, k: usize) -> Result<RunList> {
        if k == 0 {
            return Err(Error::validation("search depth must be at least 1"));
        }
        if queries.dim() != self.passages.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.passages.dim(),
                got: queries.dim(),
            });
        }
        if queries.similarity() != self.similarity() {
            return Err(Error::validation(format!(
                "query store uses {} similarity but passages use {}",
                queries.similarity(),
                self.similarity()
            )));
        }
        let ranked: Vec<Vec<ScoredDoc>> = (0..queries.len())
            .into_par_iter()
            .map(|i| self.search_one(queries.row(i), k))
            .collect();
        let mut run = RunList::new();
        for (qid, docs) in queries.ids().iter().zip(ranked) {
            run.insert(qid.clone(), docs)?;
        }
        Ok(run)
    }
}

pub fn dense_search(
    passages: &EmbeddingStore,
    queries: &EmbeddingStore,
    k: usize,
) -> Result<RunList> {
    DenseIndex::new(passages)?.search(queries, k)
}

/// Best `k` of `scores` (ids parallel to scores) that pass `keep`, in
/// canonical ranking order.
pub(crate) fn top_k_docs(
    ids: &[String],
    scores: &[f64],
    k: usize,
    keep: impl Fn(usize) -> bool,
) -> Vec<ScoredDoc> {
    let mut docs: Vec<ScoredDoc> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(i, &s)| ScoredDoc::new(ids[i].clone(), s))
        .collect();
    if docs.len() > k {
        docs.select_nth_unstable_by(k - 1, ranking_order);
        docs.truncate(k);
    }
    docs.sort_by(ranking_order);
    docs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(rows: &[Vec<f32>], sim: Similarity, prefix: &str) -> EmbeddingStore {
        let ids = (0..rows.len()).map(|i| format!("{prefix}{i}")).collect();
        EmbeddingStore::from_rows(ids, rows, sim).unwrap()
    }

    #[test]
    fn self_match_ranks_first_under_cosine() {
        let p = store(
            &[vec![1.0, 0.0], vec![0.6, 0.8], vec![-1.0, 0.2]],
            Similarity::Cosine,
            "p",
        );
        let q = store(&[vec![0.6, 0.8]], Similarity::Cosine, "q");
        let run = dense_search(&p, &q, 3).unwrap();
        assert_eq!(run.rank_of("q0", "p1"), Some(1));
    }

    #[test]
    fn depth_beyond_corpus_returns_everything() {
        let p = store(&[vec![1.0], vec![2.0], vec![3.0]], Similarity::Dot, "p");
        let q = store(&[vec![1.0]], Similarity::Dot, "q");
        let run = dense_search(&p, &q, 10).unwrap();
        let ids: Vec<&str> = run.get("q0").unwrap().iter().map(|d| d.pid.as_str()).collect();
        assert_eq!(ids, ["p2", "p1", "p0"]);
    }

    #[test]
    fn ties_break_by_passage_id() {
        let p = store(&[vec![1.0], vec![1.0], vec![1.0]], Similarity::Dot, "p");
        let q = store(&[vec![1.0]], Similarity::Dot, "q");
        let run = dense_search(&p, &q, 2).unwrap();
        let ids: Vec<&str> = run.get("q0").unwrap().iter().map(|d| d.pid.as_str()).collect();
        assert_eq!(ids, ["p0", "p1"]);
    }

    #[test]
    fn mismatches_rejected() {
        let p = store(&[vec![1.0, 0.0]], Similarity::Dot, "p");
        let q = store(&[vec![1.0]], Similarity::Dot, "q");
        assert!(dense_search(&p, &q, 1).is_err());
        let q = store(&[vec![1.0, 0.0]], Similarity::Cosine, "q");
        assert!(dense_search(&p, &q, 1).is_err());
    }
}
