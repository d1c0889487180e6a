//! Tensor bundles: a JSON manifest (`<name>.manifest`) next to a raw payload
//! (`<name>.bin`) of little-endian, row-major `f32` values.
//!
//! The manifest lists every tensor with its shape and byte offset into the
//! payload. Free-form string metadata (activation name, epsilon, similarity
//! tag, ...) travels in the manifest as well.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FORMAT: &str = "lexlens-tensor-bundle";
const VERSION: u32 = 1;

/// A dense `f32` array with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        Tensor { shape, data }
    }

    pub fn vector(data: Vec<f32>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn scalar(value: f32) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Row count and row width of a rank-2 tensor.
    pub fn matrix_dims(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [rows, cols] => Some((*rows, *cols)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorBundle {
    pub tensors: IndexMap<String, Tensor>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    byte_order: String,
    payload: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    tensors: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Reject NaN and infinite values.
    pub finite_only: bool,
}

impl TensorBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> &mut Self {
        self.tensors.insert(name.into(), tensor);
        self
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) -> &mut Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::validation(format!("bundle has no tensor `{name}`")))
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, tensor) in &self.tensors {
            if name.is_empty() {
                return Err(Error::validation("tensor with empty name"));
            }
            if tensor.shape.is_empty() || tensor.shape.contains(&0) {
                return Err(Error::validation(format!(
                    "tensor `{name}`: shape {:?} must be a non-empty list of positive sizes",
                    tensor.shape
                )));
            }
            let expected = tensor.element_count();
            if expected != tensor.data.len() {
                return Err(Error::validation(format!(
                    "tensor `{name}`: shape {:?} declares {} bytes but payload has {} bytes",
                    tensor.shape,
                    expected * 4,
                    tensor.data.len() * 4
                )));
            }
        }
        Ok(())
    }
}

/// Resolve `<base>.manifest` / `<base>.bin` from a base path. A path already
/// ending in `.manifest` is accepted as well.
pub fn bundle_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let path = path.as_ref();
    let base = if path.extension().is_some_and(|e| e == "manifest") {
        path.with_extension("")
    } else {
        path.to_path_buf()
    };
    (with_suffix(&base, "manifest"), with_suffix(&base, "bin"))
}

pub(crate) fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_bundle(bundle: &TensorBundle, path: impl AsRef<Path>) -> Result<()> {
    bundle.validate()?;
    let (manifest_path, payload_path) = bundle_paths(path);

    let mut payload = Vec::with_capacity(bundle.tensors.values().map(|t| t.data.len() * 4).sum());
    let mut entries = Vec::with_capacity(bundle.tensors.len());
    for (name, tensor) in &bundle.tensors {
        entries.push(ManifestEntry {
            name: name.clone(),
            dtype: "f32".to_string(),
            shape: tensor.shape.clone(),
            offset: payload.len() as u64,
        });
        for v in &tensor.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    let manifest = Manifest {
        format: FORMAT.to_string(),
        version: VERSION,
        byte_order: "little".to_string(),
        payload: payload_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        metadata: bundle.metadata.clone(),
        tensors: entries,
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    text.push('\n');

    if let Some(dir) = manifest_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&payload_path, &payload).map_err(|e| Error::io(&payload_path, e))?;
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(())
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<TensorBundle> {
    read_bundle_with(path, ReadOptions::default())
}

pub fn read_bundle_with(path: impl AsRef<Path>, opts: ReadOptions) -> Result<TensorBundle> {
    let (manifest_path, _) = bundle_paths(&path);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::format(
            &manifest_path,
            format!(
                "unsupported bundle format {} v{}",
                manifest.format, manifest.version
            ),
        ));
    }
    if manifest.byte_order != "little" {
        return Err(Error::format(
            &manifest_path,
            format!("unsupported byte order `{}`", manifest.byte_order),
        ));
    }

    let payload_path = manifest_path
        .parent()
        .map(|d| d.join(&manifest.payload))
        .unwrap_or_else(|| PathBuf::from(&manifest.payload));
    let payload = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;

    let mut bundle = TensorBundle {
        tensors: IndexMap::with_capacity(manifest.tensors.len()),
        metadata: manifest.metadata,
    };
    let mut declared = 0usize;
    for entry in manifest.tensors {
        if entry.dtype != "f32" {
            return Err(Error::format(
                &manifest_path,
                format!("tensor `{}`: unsupported dtype `{}`", entry.name, entry.dtype),
            ));
        }
        if entry.shape.is_empty() || entry.shape.contains(&0) {
            return Err(Error::format(
                &manifest_path,
                format!("tensor `{}`: invalid shape {:?}", entry.name, entry.shape),
            ));
        }
        let count: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + count * 4;
        if end > payload.len() {
            return Err(Error::format(
                &payload_path,
                format!(
                    "tensor `{}` is absent from the payload: needs bytes {start}..{end}, payload has {}",
                    entry.name,
                    payload.len()
                ),
            ));
        }
        let data: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if opts.finite_only {
            if let Some(i) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::format(
                    &payload_path,
                    format!("tensor `{}`: non-finite value at element {i}", entry.name),
                ));
            }
        }
        if bundle.tensors.contains_key(&entry.name) {
            return Err(Error::format(
                &manifest_path,
                format!("duplicate tensor name `{}`", entry.name),
            ));
        }
        declared += count * 4;
        bundle.tensors.insert(entry.name, Tensor::new(entry.shape, data));
    }
    if declared != payload.len() {
        return Err(Error::format(
            &payload_path,
            format!(
                "manifest declares {declared} payload bytes but file has {}",
                payload.len()
            ),
        ));
    }
    Ok(bundle)
}
