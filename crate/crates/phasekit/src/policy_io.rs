//! Policy files: `policy.json`, an `[N, D]` embedding matrix and the frames.

use std::path::Path;

use phasekit_core::digest::{f32_digest, hex};
use phasekit_core::policy::{Action, Policy};
use phasekit_core::{Embedding, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};
use crate::f32t;

pub const MANIFEST: &str = "policy.json";
pub const EMBEDDINGS: &str = "embeddings.f32t";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyManifest {
    pub goal_index: usize,
    pub actions: Vec<Action>,
    pub embedding_digests: Vec<String>,
    pub embeddings_crc64: String,
    pub frames: Vec<String>,
    pub frames_crc64: Vec<String>,
}

pub fn save(dir: &Path, policy: &Policy) -> Result<PolicyManifest> {
    let entries = policy.entries();
    let dim = entries[0].embedding.0.len();
    let matrix = Tensor::new(
        vec![entries.len(), dim],
        entries.iter().flat_map(|e| e.embedding.0.iter().copied()).collect(),
    )?;
    let embeddings_crc = f32t::write(&dir.join(EMBEDDINGS), &matrix)?;
    let mut frames = Vec::new();
    let mut frames_crc = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let rel = format!("frames/frame_{i}.f32t");
        frames_crc.push(hex(f32t::write(&dir.join(&rel), &e.image)?));
        frames.push(rel);
    }
    let manifest = PolicyManifest {
        goal_index: policy.goal_index(),
        actions: entries.iter().map(|e| e.action).collect(),
        embedding_digests: entries.iter().map(|e| hex(f32_digest(&e.embedding.0))).collect(),
        embeddings_crc64: hex(embeddings_crc),
        frames,
        frames_crc64: frames_crc,
    };
    error::write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn parse_hex(path: &Path, s: &str) -> Result<u64> {
    u64::from_str_radix(s, 16).map_err(|_| Error::format(path, format!("bad digest {s:?}")))
}

pub fn load(dir: &Path) -> Result<Policy> {
    let path = dir.join(MANIFEST);
    let m: PolicyManifest = error::read_json(&path)?;
    let matrix = f32t::read(&dir.join(EMBEDDINGS), Some(parse_hex(&path, &m.embeddings_crc64)?))?;
    if matrix.rank() != 2 || matrix.shape()[0] != m.frames.len() {
        return Err(Error::format(&dir.join(EMBEDDINGS), "embedding matrix does not match the frame list"));
    }
    let dim = matrix.shape()[1];
    let embeddings: Vec<Embedding> = matrix.data().chunks(dim.max(1)).map(|c| Embedding(c.to_vec())).collect();
    let images = m
        .frames
        .iter()
        .zip(&m.frames_crc64)
        .map(|(rel, crc)| f32t::read(&dir.join(rel), Some(parse_hex(&path, crc)?)))
        .collect::<Result<Vec<_>>>()?;
    let policy = Policy::from_parts(images, embeddings, m.goal_index)?;
    let actions: Vec<Action> = policy.entries().iter().map(|e| e.action).collect();
    if actions != m.actions {
        return Err(Error::format(&path, "action table disagrees with the goal index"));
    }
    Ok(policy)
}
