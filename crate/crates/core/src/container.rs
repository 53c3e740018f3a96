//! Index file layout, all integers little-endian:
//!
//! ```text
//! "FANN"            4 bytes magic
//! version           u32
//! metadata length   u64, then that many bytes of JSON (IndexMetadata)
//! body length       u64, then that many bytes of bincode (dataset + strategy)
//! ```
//!
//! The body holds only ordered collections, so equal indexes serialize to
//! equal bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FannsError, Result};
use crate::model::{Dataset, DistanceMetric};
use crate::strategy::{Algorithm, FannsIndex, Params, StrategyIndex};

pub const MAGIC: &[u8; 4] = b"FANN";
pub const FORMAT_VERSION: u32 = 1;

/// Human-readable header of an index file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMetadata {
    pub algorithm: Algorithm,
    pub params: Params,
    pub metric: DistanceMetric,
    pub seed: u64,
    pub n: usize,
    pub dim: usize,
}

#[derive(Serialize)]
struct BodyRef<'a> {
    dataset: &'a Dataset,
    strategy: &'a StrategyIndex,
}

#[derive(Deserialize)]
struct Body {
    dataset: Dataset,
    strategy: StrategyIndex,
}

fn container_err(msg: impl Into<String>) -> FannsError {
    FannsError::Container(msg.into())
}

impl FannsIndex {
    pub fn metadata(&self) -> IndexMetadata {
        IndexMetadata {
            algorithm: self.algorithm,
            params: self.params.clone(),
            metric: self.metric,
            seed: self.seed,
            n: self.dataset.len(),
            dim: self.dataset.dim(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.metadata())?;
        let body = bincode::serialize(&BodyRef {
            dataset: &self.dataset,
            strategy: &self.strategy,
        })
        .map_err(|e| container_err(format!("encoding index body: {e}")))?;
        let mut out = Vec::with_capacity(24 + meta.len() + body.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(body.len() as u64).to_le_bytes());
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (meta, body) = split(bytes)?;
        let meta: IndexMetadata = serde_json::from_slice(meta)?;
        let body: Body = bincode::deserialize(body)
            .map_err(|e| container_err(format!("decoding index body: {e}")))?;
        if body.dataset.vectors.len() != body.dataset.labels.len() || body.dataset.len() != meta.n {
            return Err(container_err("record count disagrees between header and body"));
        }
        if body.dataset.dim() != meta.dim {
            return Err(container_err("dimension disagrees between header and body"));
        }
        Ok(FannsIndex::assemble(
            meta.algorithm,
            meta.params,
            meta.metric,
            meta.seed,
            body.dataset,
            body.strategy,
        ))
    }

    /// Serialized size of the search structure, excluding the dataset.
    pub fn index_bytes(&self) -> Result<u64> {
        bincode::serialized_size(&self.strategy)
            .map_err(|e| container_err(format!("sizing index body: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path).map_err(|e| FannsError::io(path, e))?;
        f.write_all(&bytes).map_err(|e| FannsError::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| FannsError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Reads only the header of an index file.
pub fn read_metadata(path: impl AsRef<Path>) -> Result<IndexMetadata> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FannsError::io(path, e))?;
    let (meta, _) = split(&bytes)?;
    Ok(serde_json::from_slice(meta)?)
}

fn split(bytes: &[u8]) -> Result<(&[u8], &[u8])> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(container_err("not an index file (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(container_err(format!(
            "unsupported format version {version} (this build reads {FORMAT_VERSION})"
        )));
    }
    let (meta, rest) = take_block(&bytes[8..], "metadata")?;
    let (body, rest) = take_block(rest, "body")?;
    if !rest.is_empty() {
        return Err(container_err(format!("{} trailing bytes after body", rest.len())));
    }
    Ok((meta, body))
}

fn take_block<'a>(bytes: &'a [u8], what: &str) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 8 {
        return Err(container_err(format!("truncated {what} length")));
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
    let rest = &bytes[8..];
    if (rest.len() as u64) < len {
        return Err(container_err(format!("truncated {what} block")));
    }
    Ok(rest.split_at(len as usize))
}
