//! The masked-language-model head and vocabulary projections.
//!
//! `MLM-Head(h)[i] = softmax(V · g(h) + b)[i]` with
//! `g(h) = LayerNorm(act(W h + b_g))`. Projecting a retriever's query or
//! passage embedding through the head of the language model it was
//! initialized from yields a distribution over the vocabulary whose top
//! tokens can be read directly.

mod forward;
mod params;
mod projection;

pub use forward::ForwardTrace;
pub use params::{
    Activation, MlmHeadBuilder, MlmHeadParams, DECODER_BIAS, DECODER_WEIGHT,
    DEFAULT_LAYERNORM_EPS, LAYERNORM_BETA, LAYERNORM_GAMMA, TRANSFORM_BIAS, TRANSFORM_WEIGHT,
};
pub use projection::{project_store, VocabProjection};
