//! On-disk corpus of phase-indexed multi-view sequences.
//!
//! ```text
//! <out>/<task>/manifest.json
//! <out>/<task>/run_<id>/run.json
//! <out>/<task>/run_<id>/view_<v>/frame_<p>.f32t
//! ```
//!
//! The corpus manifest lists every run with its seed, ground truth and the
//! CRC-64 of each file. The last `ceil(n/10)` runs form the validation split.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use phasekit_core::digest::{crc64, hex};
use phasekit_core::sampler::{FrameId, FrameSource, SampleError, Split};
use phasekit_core::scenesim::{phase_scene, randomize_run, render, RunSetup, Task};
use phasekit_core::{seed, EmbedderConfig, Tensor, PHASES, VIEWS};
use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};
use crate::{f32t, pool};

pub const MANIFEST: &str = "manifest.json";
pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run_id: u32,
    pub seed: u64,
    /// Objects in the region or particles in the cup, per phase.
    pub ground_truth: Vec<u32>,
    /// Path relative to the task directory -> CRC-64 (hex).
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub task: Task,
    pub image_size: usize,
    pub seed: u64,
    pub phases: usize,
    pub views: usize,
    pub train_run_ids: Vec<u32>,
    pub val_run_ids: Vec<u32>,
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: u32,
    pub seed: u64,
    pub ground_truth: Vec<u32>,
    pub setup: RunSetup,
}

/// A corpus on disk, opened through its manifest.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub manifest: CorpusManifest,
    /// CRC-64 of the manifest file.
    pub digest: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub run_id: u32,
    pub view_id: usize,
    pub frames: Vec<Tensor>,
    pub ground_truth: Vec<u32>,
    pub seed: u64,
}

pub fn val_count(n_runs: usize) -> usize {
    n_runs.div_ceil(10)
}

pub fn frame_path(run_id: u32, view: usize, phase: usize) -> String {
    format!("run_{run_id}/view_{view}/frame_{phase}.f32t")
}

fn run_manifest_path(run_id: u32) -> String {
    format!("run_{run_id}/{RUN_MANIFEST}")
}

fn generate_run(task: Task, corpus_seed: u64, run_id: u32, image_size: usize, dir: &Path) -> Result<(RunEntry, u64)> {
    let run_seed = seed::derive(corpus_seed, "run", run_id as u64);
    let setup = randomize_run(task, run_seed);
    let scenes = (0..PHASES)
        .map(|p| phase_scene(&setup.scene, p))
        .collect::<Result<Vec<_>, _>>()?;
    let ground_truth: Vec<u32> = scenes.iter().map(|s| s.ground_truth()).collect();
    let mut files = BTreeMap::new();
    let mut bytes = 0u64;
    for (v, view) in setup.views.iter().enumerate() {
        for (p, scene) in scenes.iter().enumerate() {
            let image = render(scene, view, p as u32, image_size);
            let rel = frame_path(run_id, v, p);
            files.insert(rel.clone(), hex(f32t::write(&dir.join(&rel), &image)?));
            bytes += f32t::encode(&image).len() as u64;
        }
    }
    let record = RunRecord {
        run_id,
        seed: run_seed,
        ground_truth: ground_truth.clone(),
        setup,
    };
    let rel = run_manifest_path(run_id);
    error::write_json(&dir.join(&rel), &record)?;
    let written = error::read(&dir.join(&rel))?;
    bytes += written.len() as u64;
    files.insert(rel, hex(crc64(&written)));
    Ok((
        RunEntry {
            run_id,
            seed: run_seed,
            ground_truth,
            files,
        },
        bytes,
    ))
}

/// Renders `n_runs` randomized runs into `<out_dir>/<task>/`.
pub fn generate_corpus(task: Task, n_runs: usize, image_size: usize, corpus_seed: u64, out_dir: &Path) -> Result<Corpus> {
    if n_runs < 2 {
        return Err(Error::Usage(format!("need at least 2 runs, got {n_runs}")));
    }
    EmbedderConfig::standard(image_size)
        .validate()
        .map_err(|e| Error::Usage(format!("image size {image_size}: {e}")))?;
    let root = out_dir.join(task.name());
    let results = pool::try_map(n_runs, pool::workers(), |i| generate_run(task, corpus_seed, i as u32, image_size, &root))?;
    let n_val = val_count(n_runs);
    let ids: Vec<u32> = (0..n_runs as u32).collect();
    let (train, val) = ids.split_at(n_runs - n_val);
    let mut bytes = 0;
    let mut runs = Vec::with_capacity(n_runs);
    for (entry, b) in results {
        bytes += b;
        runs.push(entry);
    }
    let manifest = CorpusManifest {
        task,
        image_size,
        seed: corpus_seed,
        phases: PHASES,
        views: VIEWS,
        train_run_ids: train.to_vec(),
        val_run_ids: val.to_vec(),
        runs,
    };
    let path = root.join(MANIFEST);
    error::write_json(&path, &manifest)?;
    let written = error::read(&path)?;
    Ok(Corpus {
        root,
        manifest,
        digest: crc64(&written),
        bytes: bytes + written.len() as u64,
    })
}

impl Corpus {
    /// Opens a task directory, or a directory holding exactly one task.
    pub fn open(dir: &Path) -> Result<Self> {
        let root = if dir.join(MANIFEST).is_file() {
            dir.to_path_buf()
        } else {
            let candidates: Vec<PathBuf> = [Task::Floor, Task::Cup]
                .iter()
                .map(|t| dir.join(t.name()))
                .filter(|d| d.join(MANIFEST).is_file())
                .collect();
            match candidates.len() {
                0 => return Err(Error::NotFound(dir.join(MANIFEST))),
                1 => candidates.into_iter().next().unwrap(),
                _ => {
                    return Err(Error::Usage(format!(
                        "{} holds several corpora; point at one task directory",
                        dir.display()
                    )))
                }
            }
        };
        let path = root.join(MANIFEST);
        let bytes = error::read(&path)?;
        let manifest: CorpusManifest =
            serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e.to_string()))?;
        Ok(Corpus {
            root,
            manifest,
            digest: crc64(&bytes),
            bytes: bytes.len() as u64,
        })
    }

    pub fn task(&self) -> Task {
        self.manifest.task
    }

    pub fn sequences(&self) -> usize {
        self.manifest.runs.len() * self.manifest.views
    }

    fn entry(&self, run_id: u32) -> Result<&RunEntry> {
        self.manifest
            .runs
            .iter()
            .find(|r| r.run_id == run_id)
            .ok_or_else(|| Error::Missing(format!("run {run_id} in {}", self.root.display())))
    }

    fn checked_read(&self, entry: &RunEntry, rel: &str) -> Result<Tensor> {
        let digest = entry
            .files
            .get(rel)
            .ok_or_else(|| Error::Missing(format!("{rel} in the corpus manifest")))?;
        let want = u64::from_str_radix(digest, 16).map_err(|_| Error::format(&self.root.join(MANIFEST), "bad digest"))?;
        f32t::read(&self.root.join(rel), Some(want))
    }

    pub fn run_record(&self, run_id: u32) -> Result<RunRecord> {
        let entry = self.entry(run_id)?;
        let rel = run_manifest_path(run_id);
        let path = self.root.join(&rel);
        let bytes = error::read(&path)?;
        if let Some(want) = entry.files.get(&rel) {
            let got = hex(crc64(&bytes));
            if &got != want {
                return Err(Error::DigestMismatch {
                    path,
                    expected: want.clone(),
                    actual: got,
                });
            }
        }
        serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e.to_string()))
    }

    pub fn load_sequence(&self, run_id: u32, view_id: usize) -> Result<SequenceRecord> {
        let entry = self.entry(run_id)?;
        if view_id >= self.manifest.views {
            return Err(Error::Missing(format!("view {view_id} of run {run_id}")));
        }
        let frames = (0..self.manifest.phases)
            .map(|p| self.checked_read(entry, &frame_path(run_id, view_id, p)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SequenceRecord {
            run_id,
            view_id,
            frames,
            ground_truth: entry.ground_truth.clone(),
            seed: entry.seed,
        })
    }

    /// Reads every frame into memory.
    pub fn load(&self) -> Result<LoadedCorpus> {
        let m = &self.manifest;
        let per_run = pool::try_map(m.runs.len(), pool::workers(), |i| {
            let run = m.runs[i].run_id;
            (0..m.views)
                .map(|v| self.load_sequence(run, v).map(|s| s.frames))
                .collect::<Result<Vec<_>>>()
        })?;
        let mut frames = Vec::with_capacity(m.runs.len() * m.views * m.phases);
        for views in per_run {
            for seq in views {
                frames.extend(seq);
            }
        }
        Ok(LoadedCorpus {
            index: m.runs.iter().enumerate().map(|(i, r)| (r.run_id, i)).collect(),
            train: m.train_run_ids.clone(),
            val: m.val_run_ids.clone(),
            views: m.views,
            phases: m.phases,
            frames,
        })
    }
}

/// A corpus held in memory, ready for sampling.
pub struct LoadedCorpus {
    index: BTreeMap<u32, usize>,
    train: Vec<u32>,
    val: Vec<u32>,
    views: usize,
    phases: usize,
    frames: Vec<Tensor>,
}

impl FrameSource for LoadedCorpus {
    fn runs(&self, split: Split) -> &[u32] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
        }
    }

    fn views(&self) -> usize {
        self.views
    }

    fn frame(&self, id: FrameId) -> Result<&Tensor, SampleError> {
        let missing = |reason: &str| SampleError::Frame {
            id,
            reason: reason.into(),
        };
        let &pos = self.index.get(&id.run).ok_or_else(|| missing("unknown run"))?;
        if id.view >= self.views || id.phase >= self.phases {
            return Err(missing("index out of range"));
        }
        Ok(&self.frames[(pos * self.views + id.view) * self.phases + id.phase])
    }
}
