//! Lowercasing basic tokenizer followed by greedy longest-match WordPiece.

use unicode_general_category::get_general_category;

use super::vocab::Vocabulary;

/// Words longer than this many characters map straight to the unknown token.
pub const MAX_WORD_CHARS: usize = 100;

const CONTINUATION: &str = "##";

/// Unicode general category P* or S*.
pub fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c).abbreviation().as_bytes()[0],
        b'P' | b'S'
    )
}

fn is_control(c: char) -> bool {
    matches!(get_general_category(c).abbreviation(), "Cc" | "Cf")
}

/// Lowercase, split on whitespace, and make each punctuation or symbol
/// character a word of its own. Control characters are dropped.
pub fn basic_words(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_whitespace() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
        } else if is_punctuation(c) {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            words.push(c.to_string());
        } else if !is_control(c) {
            current.push(c);
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Lowercased words with punctuation removed, for word-level BM25.
pub fn word_tokens(text: &str) -> Vec<String> {
    basic_words(text)
        .into_iter()
        .filter(|w| !w.chars().all(is_punctuation))
        .collect()
}

/// Segment one word into vocabulary pieces, or `None` if some suffix cannot
/// be matched.
fn wordpiece(vocab: &Vocabulary, word: &str) -> Option<Vec<u32>> {
    let bounds: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let mut pieces = Vec::new();
    let mut start = 0usize;
    let mut candidate = String::with_capacity(word.len() + 2);
    while start + 1 < bounds.len() {
        let mut found = None;
        for end in (start + 1..bounds.len()).rev() {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION);
            }
            candidate.push_str(&word[bounds[start]..bounds[end]]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some((id, end));
                break;
            }
        }
        let (id, end) = found?;
        pieces.push(id);
        start = end;
    }
    Some(pieces)
}

/// Token ids for `text`. Total: unsegmentable words become the unknown id.
pub fn tokenize(vocab: &Vocabulary, text: &str) -> Vec<u32> {
    let mut ids = Vec::new();
    for word in basic_words(text) {
        if word.chars().count() > MAX_WORD_CHARS {
            ids.push(vocab.unk_id());
            continue;
        }
        match wordpiece(vocab, &word) {
            Some(pieces) => ids.extend(pieces),
            None => ids.push(vocab.unk_id()),
        }
    }
    ids
}

/// Token strings for `text` (surface forms, `##` continuations included).
pub fn tokenize_to_strings(vocab: &Vocabulary, text: &str) -> Vec<String> {
    tokenize(vocab, text)
        .into_iter()
        .map(|id| vocab.token(id).unwrap_or_default().to_string())
        .collect()
}
