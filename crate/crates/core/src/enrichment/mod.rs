//! Lexical Enrichment: single-token enrichments fitted through the MLM head,
//! whitening, IDF-weighted lexical vectors and λ-mixing into dense vectors.

mod adam;
mod fit;
mod model;
mod persist;
mod whitening;

pub use adam::Adam;
pub use fit::{fit_single_token_enrichments, fit_token, EnrichmentTable, OptimizerConfig, TokenFit};
pub use model::{mix_store, EnrichmentModel, FittedEnrichments, Switches};
pub use persist::FitProvenance;
pub use whitening::{fit_whitening, WhiteningParams, EIGENVALUE_FLOOR};
