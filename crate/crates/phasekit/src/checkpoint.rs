//! Parameter checkpoints: one F32T file per tensor plus `checkpoint.json`.

use std::path::Path;

use phasekit_core::digest::hex;
use phasekit_core::{EmbedderConfig, EmbedderParams};
use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};
use crate::f32t;

pub const MANIFEST: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
    pub crc64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: EmbedderConfig,
    pub epoch: usize,
    /// Digest over all parameter values.
    pub params_digest: String,
    pub tensors: Vec<TensorEntry>,
}

pub fn save(dir: &Path, params: &EmbedderParams, epoch: usize) -> Result<CheckpointManifest> {
    let mut tensors = Vec::new();
    for (name, t) in params.names().into_iter().zip(params.tensors()) {
        let file = format!("{name}.f32t");
        let crc = f32t::write(&dir.join(&file), t)?;
        tensors.push(TensorEntry {
            name,
            file,
            shape: t.shape().to_vec(),
            crc64: hex(crc),
        });
    }
    let manifest = CheckpointManifest {
        config: params.config.clone(),
        epoch,
        params_digest: hex(params.digest()),
        tensors,
    };
    error::write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<EmbedderParams> {
    let path = dir.join(MANIFEST);
    let manifest: CheckpointManifest = error::read_json(&path)?;
    let named = manifest
        .tensors
        .iter()
        .map(|e| {
            let want = u64::from_str_radix(&e.crc64, 16).map_err(|_| Error::format(&path, "bad digest"))?;
            Ok((e.name.clone(), f32t::read(&dir.join(&e.file), Some(want))?))
        })
        .collect::<Result<Vec<_>>>()?;
    let params = EmbedderParams::from_named(&manifest.config, named)?;
    if hex(params.digest()) != manifest.params_digest {
        return Err(Error::DigestMismatch {
            path,
            expected: manifest.params_digest,
            actual: hex(params.digest()),
        });
    }
    Ok(params)
}
