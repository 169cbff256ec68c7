//! Time-contrastive triplets from phase-aligned multi-view sequences.
//!
//! The anchor and positive show the same phase of one run through two
//! different cameras; the negative is a frame of the same run at another
//! phase, seen from any camera.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Tensor, PHASES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameId {
    pub run: u32,
    pub view: usize,
    pub phase: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: FrameId,
    pub positive: FrameId,
    pub negative: FrameId,
}

impl Triplet {
    /// Same run everywhere, positive shares the anchor's phase from another
    /// camera, negative has a different phase.
    pub fn is_valid(&self) -> bool {
        let (a, p, n) = (self.anchor, self.positive, self.negative);
        a.run == p.run && a.run == n.run && a.phase == p.phase && a.view != p.view && n.phase != a.phase
    }

    pub fn frames(&self) -> [FrameId; 3] {
        [self.anchor, self.positive, self.negative]
    }
}

/// How negatives are drawn relative to the anchor's phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// Any other phase, uniformly.
    UniformNegative,
    /// A phase at most `radius` steps away.
    AdjacentNegative { radius: usize },
}

impl SamplingStrategy {
    pub fn adjacent(radius: usize) -> Result<Self, SampleError> {
        if radius == 0 || radius >= PHASES {
            return Err(SampleError::BadRadius(radius));
        }
        Ok(Self::AdjacentNegative { radius })
    }

    pub fn label(&self) -> String {
        match self {
            Self::UniformNegative => "uniform".into(),
            Self::AdjacentNegative { radius } => alloc::format!("adjacent(radius={radius})"),
        }
    }

    fn negative_phase<R: Rng>(&self, anchor: usize, rng: &mut R) -> usize {
        match *self {
            Self::UniformNegative => {
                let q = rng.random_range(0..PHASES - 1);
                if q >= anchor {
                    q + 1
                } else {
                    q
                }
            }
            Self::AdjacentNegative { radius } => {
                let lo = anchor.saturating_sub(radius);
                let hi = (anchor + radius).min(PHASES - 1);
                let q = rng.random_range(lo..hi);
                if q >= anchor {
                    q + 1
                } else {
                    q
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("no runs to sample from")]
    EmptyCorpus,
    #[error("triplets need at least two views, corpus has {0}")]
    TooFewViews(usize),
    #[error("adjacency radius must lie in 1..=15, got {0}")]
    BadRadius(usize),
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("frame {id:?} unavailable: {reason}")]
    Frame { id: FrameId, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// Phase-indexed frames grouped into runs with a train/validation split.
pub trait FrameSource {
    fn runs(&self, split: Split) -> &[u32];
    fn views(&self) -> usize;
    fn frame(&self, id: FrameId) -> Result<&Tensor, SampleError>;
}

pub fn sample_triplet<R: Rng>(
    runs: &[u32],
    views: usize,
    strategy: SamplingStrategy,
    rng: &mut R,
) -> Result<Triplet, SampleError> {
    if runs.is_empty() {
        return Err(SampleError::EmptyCorpus);
    }
    if views < 2 {
        return Err(SampleError::TooFewViews(views));
    }
    if let SamplingStrategy::AdjacentNegative { radius } = strategy {
        if radius == 0 || radius >= PHASES {
            return Err(SampleError::BadRadius(radius));
        }
    }
    let run = runs[rng.random_range(0..runs.len())];
    let phase = rng.random_range(0..PHASES);
    let anchor_view = rng.random_range(0..views);
    let mut positive_view = rng.random_range(0..views - 1);
    if positive_view >= anchor_view {
        positive_view += 1;
    }
    let negative_phase = strategy.negative_phase(phase, rng);
    let negative_view = rng.random_range(0..views);
    Ok(Triplet {
        anchor: FrameId { run, view: anchor_view, phase },
        positive: FrameId { run, view: positive_view, phase },
        negative: FrameId {
            run,
            view: negative_view,
            phase: negative_phase,
        },
    })
}

/// Independent triplets with their images, in `[anchor, positive, negative]`
/// order per triplet.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub triplets: Vec<Triplet>,
    pub images: Vec<[&'a Tensor; 3]>,
}

impl Batch<'_> {
    pub fn image_count(&self) -> usize {
        self.images.len() * 3
    }
}

pub fn make_batch<'a, S: FrameSource + ?Sized, R: Rng>(
    source: &'a S,
    split: Split,
    strategy: SamplingStrategy,
    batch_size: usize,
    rng: &mut R,
) -> Result<Batch<'a>, SampleError> {
    if batch_size == 0 {
        return Err(SampleError::EmptyBatch);
    }
    let runs = source.runs(split);
    let mut triplets = Vec::with_capacity(batch_size);
    let mut images = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let t = sample_triplet(runs, source.views(), strategy, rng)?;
        images.push([source.frame(t.anchor)?, source.frame(t.positive)?, source.frame(t.negative)?]);
        triplets.push(t);
    }
    Ok(Batch { triplets, images })
}
