use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bundle::{bundle_paths, read_bundle, with_suffix, write_bundle, Tensor, TensorBundle};
use crate::error::{Error, Result};

/// How query/passage scores are computed for a given encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    Dot,
    Cosine,
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Similarity::Dot => "dot",
            Similarity::Cosine => "cosine",
        })
    }
}

impl FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Similarity::Dot),
            "cosine" => Ok(Similarity::Cosine),
            other => Err(Error::validation(format!(
                "similarity must be `dot` or `cosine`, got `{other}`"
            ))),
        }
    }
}

/// Id-addressed dense vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    ids: Vec<String>,
    vectors: Vec<f32>,
    dim: usize,
    similarity: Similarity,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(
        ids: Vec<String>,
        vectors: Vec<f32>,
        dim: usize,
        similarity: Similarity,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        if !vectors.len().is_multiple_of(dim) {
            return Err(Error::validation(format!(
                "vector buffer of {} values is not a multiple of dim {dim}",
                vectors.len()
            )));
        }
        let rows = vectors.len() / dim;
        if rows != ids.len() {
            return Err(Error::validation(format!(
                "{} ids but {rows} vector rows",
                ids.len()
            )));
        }
        let bad: Vec<usize> = vectors
            .chunks_exact(dim)
            .enumerate()
            .filter(|(_, row)| row.iter().any(|v| !v.is_finite()))
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            let list: Vec<String> = bad.iter().map(|i| i.to_string()).collect();
            return Err(Error::validation(format!(
                "non-finite row {}",
                list.join(", ")
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() || id.contains(['\n', '\r']) {
                return Err(Error::validation(format!("invalid embedding id at row {i}")));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::validation(format!("duplicate embedding id `{id}`")));
            }
        }
        Ok(EmbeddingStore {
            ids,
            vectors,
            dim,
            similarity,
            index,
        })
    }

    pub fn from_rows(
        ids: Vec<String>,
        rows: &[Vec<f32>],
        similarity: Similarity,
    ) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(1);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        Self::new(ids, rows.concat(), dim, similarity)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn similarity(&self) -> Similarity {
        self.similarity
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.vectors.chunks_exact(self.dim)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }
}

pub fn write_embeddings(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    if store.is_empty() {
        return Err(Error::validation("cannot write an empty embedding store"));
    }
    let mut bundle = TensorBundle::new();
    bundle.insert(
        "vectors",
        Tensor::new(vec![store.len(), store.dim], store.vectors.clone()),
    );
    bundle.set_meta("similarity", store.similarity.to_string());
    bundle.set_meta("kind", "embeddings");
    write_bundle(&bundle, &path)?;

    let ids_path = ids_path(path.as_ref());
    let mut text = store.ids.join("\n");
    text.push('\n');
    fs::write(&ids_path, text).map_err(|e| Error::io(&ids_path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let bundle = read_bundle(&path)?;
    let (manifest_path, _) = bundle_paths(&path);
    let vectors = bundle.get("vectors")?;
    let (rows, dim) = vectors.matrix_dims().ok_or_else(|| {
        Error::format(&manifest_path, "tensor `vectors` must be a matrix")
    })?;
    let similarity: Similarity = bundle
        .meta("similarity")
        .ok_or_else(|| Error::format(&manifest_path, "missing `similarity` metadata"))?
        .parse()?;

    let ids_path = ids_path(path.as_ref());
    let text = fs::read_to_string(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
    let ids: Vec<String> = text.lines().map(str::to_string).collect();
    if ids.len() != rows {
        return Err(Error::format(
            &ids_path,
            format!("{} ids but {rows} vector rows", ids.len()),
        ));
    }
    EmbeddingStore::new(ids, vectors.data.clone(), dim, similarity)
        .map_err(|e| e.context(manifest_path.display().to_string()))
}

/// The id sidecar written next to an embedding bundle.
pub fn ids_path(path: &Path) -> std::path::PathBuf {
    let (manifest, _) = bundle_paths(path);
    with_suffix(&manifest.with_extension(""), "ids")
}
