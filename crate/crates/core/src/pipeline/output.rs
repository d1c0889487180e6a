use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::datastore::bundle_paths;
use crate::error::{Error, Result};

/// sha256 of a file, or of a bundle's manifest, payload and id sidecar in
/// that order when `path` is a bundle base.
pub fn file_checksum(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_file() {
        h.update(fs::read(path).map_err(|e| Error::io(path, e))?);
    } else {
        let (manifest, payload) = bundle_paths(path);
        let ids = crate::datastore::ids_path(path);
        for p in [manifest, payload] {
            h.update(fs::read(&p).map_err(|e| Error::io(&p, e))?);
        }
        if ids.is_file() {
            h.update(fs::read(&ids).map_err(|e| Error::io(&ids, e))?);
        }
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checksum {
    pub name: String,
    pub path: String,
    pub sha256: String,
}

/// Written as `manifest-<command>.json` next to a command's outputs. Holds
/// the resolved config, so the command can be re-run from it alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: String,
    pub inputs: Vec<Checksum>,
    pub outputs: Vec<Checksum>,
    pub notices: Vec<String>,
}

/// Collects output files of one command and writes its manifest.
pub struct OutputDir {
    dir: PathBuf,
    command: String,
    outputs: Vec<PathBuf>,
    pub notices: Vec<String>,
}

impl OutputDir {
    pub fn create(cfg: &RunConfig, command: &str) -> Result<Self> {
        let dir = cfg.output_dir();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(OutputDir {
            dir,
            command: command.to_string(),
            outputs: Vec::new(),
            notices: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path for an output, recorded for the manifest.
    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.outputs.push(p.clone());
        p
    }

    pub fn notice(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.notices.push(msg);
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_csv(&mut self, name: &str, table: &Table) -> Result<PathBuf> {
        let p = self.path(name);
        table.write(&p)?;
        Ok(p)
    }

    pub fn finish(self, cfg: &RunConfig) -> Result<RunManifest> {
        let config = cfg.to_toml();
        let inputs = cfg
            .referenced_paths()
            .into_iter()
            .map(|(name, p)| {
                Ok(Checksum {
                    name,
                    path: p.display().to_string(),
                    sha256: file_checksum(&p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut outputs = Vec::new();
        for p in &self.outputs {
            let rel = p.strip_prefix(&self.dir).unwrap_or(p);
            outputs.push(Checksum {
                name: rel.display().to_string(),
                path: rel.display().to_string(),
                sha256: file_checksum(p)?,
            });
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            seed: cfg.seed,
            config_sha256: hex::encode(Sha256::digest(config.as_bytes())),
            config,
            inputs,
            outputs,
            notices: self.notices.clone(),
        };
        let path = self.dir.join(format!("manifest-{}.json", self.command));
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(&self.header).map_err(|e| csv_error(path, e))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = r
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| {
                rec.map(|rec| rec.iter().map(str::to_string).collect())
                    .map_err(|e| csv_error(path, e))
            })
            .collect::<Result<_>>()?;
        Ok(Table { header, rows })
    }

    /// Index of a column by header name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format(path, e.to_string())
    }
}

/// Format an optional float as a CSV cell, empty when absent.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
