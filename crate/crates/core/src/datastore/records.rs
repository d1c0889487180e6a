//! Line-delimited JSON corpora and query sets.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
}

impl CorpusRecord {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        CorpusRecord {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    /// Title and body joined the way the passage is fed to tokenizers.
    pub fn full_text(&self) -> String {
        if self.title.is_empty() {
            self.text.clone()
        } else {
            format!("{} {}", self.title, self.text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub answers: Vec<String>,
    #[serde(default)]
    pub gold_pids: Vec<String>,
}

impl QueryRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        QueryRecord {
            id: id.into(),
            text: text.into(),
            answers: Vec::new(),
            gold_pids: Vec::new(),
        }
    }
}

trait Identified {
    fn id(&self) -> &str;
}

impl Identified for CorpusRecord {
    fn id(&self) -> &str {
        &self.id
    }
}

impl Identified for QueryRecord {
    fn id(&self) -> &str {
        &self.id
    }
}

fn load_jsonl<T: DeserializeOwned + Identified>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {lineno}: {e}")))?;
        if record.id().is_empty() {
            return Err(Error::format(path, format!("line {lineno}: empty id")));
        }
        if let Some(first) = seen.insert(record.id().to_string(), lineno) {
            return Err(Error::format(
                path,
                format!(
                    "duplicate id `{}` on lines {first} and {lineno}",
                    record.id()
                ),
            ));
        }
        records.push(record);
    }
    Ok(records)
}

fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::format(path, e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>> {
    load_jsonl(path.as_ref())
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<QueryRecord>> {
    load_jsonl(path.as_ref())
}

pub fn write_corpus(records: &[CorpusRecord], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(records, path.as_ref())
}

pub fn write_queries(records: &[QueryRecord], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(records, path.as_ref())
}
