use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use super::tokenize::{is_punctuation, tokenize};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

/// Lowercase stop words, one per line in the backing file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StopList {
    words: HashSet<String>,
}

impl StopList {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        StopList {
            words: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(text.lines()))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Query,
    Passage,
}

/// Deduplicated content tokens of one text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSet {
    pub ids: BTreeSet<u32>,
    pub origin: Origin,
}

impl TokenSet {
    pub fn contains(&self, id: u32) -> bool {
        self.ids.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn intersection(&self, other: &TokenSet) -> BTreeSet<u32> {
        self.ids.intersection(&other.ids).copied().collect()
    }

    pub fn difference(&self, other: &TokenSet) -> BTreeSet<u32> {
        self.ids.difference(&other.ids).copied().collect()
    }
}

/// Per-token flag: not special, not a stop word, not punctuation-only.
#[derive(Debug, Clone)]
pub struct ContentFilter {
    content: Vec<bool>,
}

impl ContentFilter {
    pub fn new(vocab: &Vocabulary, stoplist: &StopList) -> Self {
        let content = vocab
            .tokens()
            .iter()
            .enumerate()
            .map(|(id, tok)| {
                let bare = tok.strip_prefix("##").unwrap_or(tok);
                !(vocab.is_special(id as u32)
                    || stoplist.contains(tok)
                    || bare.is_empty()
                    || bare.chars().all(is_punctuation))
            })
            .collect();
        ContentFilter { content }
    }

    pub fn is_content(&self, id: u32) -> bool {
        self.content.get(id as usize).copied().unwrap_or(false)
    }

    pub fn vocab_size(&self) -> usize {
        self.content.len()
    }
}

pub fn content_token_set(
    vocab: &Vocabulary,
    filter: &ContentFilter,
    text: &str,
    origin: Origin,
) -> TokenSet {
    TokenSet {
        ids: tokenize(vocab, text)
            .into_iter()
            .filter(|&id| filter.is_content(id))
            .collect(),
        origin,
    }
}
