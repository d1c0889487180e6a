//! Exact dense search, BM25 and retrieval metrics.

mod bm25;
mod dense;
mod metrics;
mod run;

pub use bm25::{terms, Bm25Index, Bm25Params, Posting, TermMode};
pub use dense::{dense_search, DenseIndex};
pub use metrics::{
    answer_hit, mrr_at, ndcg_at, ndcg_at_10, topk_accuracy, AccuracyReport, NdcgReport,
};
pub use run::{ranking_order, AnswerJudge, HitJudge, Qrels, RunList, ScoredDoc};
