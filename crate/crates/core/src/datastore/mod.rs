//! File formats shared by every stage: tensor bundles, embedding stores,
//! line-delimited corpora/queries and TREC runs/qrels.

mod bundle;
mod embeddings;
mod records;
mod trec;

pub use bundle::{
    bundle_paths, read_bundle, read_bundle_with, write_bundle, ReadOptions, Tensor, TensorBundle,
};
pub use embeddings::{ids_path, load_embeddings, write_embeddings, EmbeddingStore, Similarity};
pub use records::{
    load_corpus, load_queries, write_corpus, write_queries, CorpusRecord, QueryRecord,
};
pub use trec::{
    format_qrels, format_run, parse_qrels, parse_run, read_qrels, read_run, write_qrels,
    write_run,
};
