use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Token strings indexed by id. Continuation pieces carry the `##` prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    special: BTreeSet<u32>,
    unk_id: u32,
}

fn looks_special(token: &str) -> bool {
    let bracketed = |open: char, close: char| {
        token.len() > 2 && token.starts_with(open) && token.ends_with(close)
    };
    bracketed('[', ']') || bracketed('<', '>')
}

impl Vocabulary {
    /// Build from tokens in id order. Bracketed entries (`[CLS]`, `<s>`,
    /// `[unused0]`, ...) are treated as special tokens; one of them must be
    /// `[UNK]` or `<unk>`.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        let mut special = BTreeSet::new();
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::validation(format!("empty token at id {i}")));
            }
            if let Some(prev) = ids.insert(tok.clone(), i as u32) {
                return Err(Error::validation(format!(
                    "token `{tok}` appears at ids {prev} and {i}"
                )));
            }
            if looks_special(tok) {
                special.insert(i as u32);
            }
        }
        let unk_id = ["[UNK]", "<unk>"]
            .iter()
            .find_map(|u| ids.get(*u).copied())
            .ok_or_else(|| Error::validation("vocabulary has no [UNK] or <unk> token"))?;
        Ok(Vocabulary {
            tokens,
            ids,
            special,
            unk_id,
        })
    }

    /// One token per line; line number (from 0) is the id.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens = text
            .lines()
            .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
            .collect();
        Self::new(tokens).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.special.contains(&id)
    }

    pub fn special_ids(&self) -> &BTreeSet<u32> {
        &self.special
    }
}
