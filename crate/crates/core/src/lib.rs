pub mod analysis;
pub mod datastore;
pub mod enrichment;
pub mod error;
pub mod lexical;
pub mod mlm_head;
pub mod pipeline;
pub mod retrieval;
pub mod synthetic;

pub use error::{Error, Result};
