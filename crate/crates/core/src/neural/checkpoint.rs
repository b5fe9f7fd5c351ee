//! Checkpoint container.
//!
//! A checkpoint is a single JSON document:
//!
//! ```json
//! {
//!   "format": "spc-checkpoint",
//!   "version": 1,
//!   "kind": "discovery",
//!   "metadata": { ... model-specific, e.g. the vocabulary ... },
//!   "params": { "params": { "<dotted.name>": { "shape": [r, c], "data": [...] } } }
//! }
//! ```
//!
//! Parameter names are sorted, and floats are written with shortest
//! round-trip formatting, so saving the same parameters always produces the
//! same bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

pub const FORMAT: &str = "spc-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub metadata: serde_json::Value,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(kind: &str, metadata: serde_json::Value, params: ParamStore) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: kind.to_string(),
            metadata,
            params,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, expected_kind: &str) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint =
            serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format != FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format tag {:?}", ckpt.format)));
        }
        if ckpt.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        if ckpt.kind != expected_kind {
            return Err(Error::Checkpoint(format!(
                "expected a {expected_kind} checkpoint, found {}",
                ckpt.kind
            )));
        }
        Ok(ckpt)
    }

    pub fn metadata_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        serde_json::from_value(self.metadata.clone()).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// Write `config` as TOML next to the checkpoint at `path`.
pub(crate) fn write_sidecar<T: Serialize>(path: &Path, config: &T) -> Result<()> {
    let side = path.with_extension("config.toml");
    let text = toml::to_string(config).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&side, text).map_err(|e| Error::io(side, e))
}

/// Loaded parameters must match the architecture's names and shapes.
pub(crate) fn check_params(expected: &ParamStore, loaded: &ParamStore) -> Result<()> {
    for (name, t) in expected.iter() {
        match loaded.get(name) {
            Some(l) if l.shape() == t.shape() => {}
            Some(l) => {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    l.shape(),
                    t.shape()
                )))
            }
            None => return Err(Error::Checkpoint(format!("missing parameter {name}"))),
        }
    }
    if loaded.len() != expected.len() {
        return Err(Error::Checkpoint("checkpoint has unexpected parameters".into()));
    }
    Ok(())
}
