//! Vocabulary, WordPiece tokenization, content-token filtering and IDF.

mod filter;
mod idf;
mod tokenize;
mod vocab;

pub use filter::{content_token_set, ContentFilter, Origin, StopList, TokenSet};
pub use idf::{smoothed_idf, IdfTable};
pub use tokenize::{
    basic_words, is_punctuation, tokenize, tokenize_to_strings, word_tokens, MAX_WORD_CHARS,
};
pub use vocab::Vocabulary;

/// The bundled English stop list.
pub const ENGLISH_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

pub fn english_stoplist() -> StopList {
    StopList::new(ENGLISH_STOPWORDS.lines())
}
