//! A goal-conditioned policy from an image sequence: every frame carries an
//! action telling the agent which way to move along the sequence to reach the
//! goal frame, and queries are answered by nearest-neighbor lookup in
//! embedding space.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embedder::{embed, squared_distance};
use crate::scenesim::ImageTensor;
use crate::{EmbedderParams, Embedding, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    /// Move to the next frame of the sequence.
    Advance,
    /// Move to the previous frame.
    Retreat,
    Hold,
}

/// The action attached to frame `index` when the goal frame is `goal`.
pub fn action_for(index: usize, goal: usize) -> Action {
    match index.cmp(&goal) {
        core::cmp::Ordering::Less => Action::Advance,
        core::cmp::Ordering::Equal => Action::Hold,
        core::cmp::Ordering::Greater => Action::Retreat,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("a policy needs at least one frame")]
    Empty,
    #[error("goal index {goal} out of range for {len} frames")]
    GoalOutOfRange { goal: usize, len: usize },
    #[error("entry {0} has a non-unit embedding")]
    NotUnitNorm(usize),
    #[error("{images} images but {embeddings} embeddings")]
    LengthMismatch { images: usize, embeddings: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    pub image: ImageTensor,
    pub embedding: Embedding,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    entries: Vec<PolicyEntry>,
    goal_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub action: Action,
    pub index: usize,
    pub distance: f32,
    pub embedding: Embedding,
}

/// Index of the closest embedding; ties go to the lowest index.
pub fn nearest_index(embeddings: impl IntoIterator<Item = impl AsRef<[f32]>>, w: &[f32]) -> Option<(usize, f32)> {
    let mut best: Option<(usize, f32)> = None;
    for (i, e) in embeddings.into_iter().enumerate() {
        let d = squared_distance(e.as_ref(), w);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

impl AsRef<[f32]> for Embedding {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

impl Policy {
    /// Assembles a policy from precomputed embeddings.
    pub fn from_parts(images: Vec<ImageTensor>, embeddings: Vec<Embedding>, goal_index: usize) -> Result<Self, PolicyError> {
        if images.is_empty() {
            return Err(PolicyError::Empty);
        }
        if images.len() != embeddings.len() {
            return Err(PolicyError::LengthMismatch {
                images: images.len(),
                embeddings: embeddings.len(),
            });
        }
        if goal_index >= images.len() {
            return Err(PolicyError::GoalOutOfRange {
                goal: goal_index,
                len: images.len(),
            });
        }
        if let Some(i) = embeddings.iter().position(|e| (e.norm() - 1.0).abs() > 1e-4) {
            return Err(PolicyError::NotUnitNorm(i));
        }
        let entries = images
            .into_iter()
            .zip(embeddings)
            .enumerate()
            .map(|(i, (image, embedding))| PolicyEntry {
                image,
                embedding,
                action: action_for(i, goal_index),
            })
            .collect();
        Ok(Self { entries, goal_index })
    }

    pub fn entries(&self) -> &[PolicyEntry] {
        &self.entries
    }

    pub fn goal_index(&self) -> usize {
        self.goal_index
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn goal_embedding(&self) -> &Embedding {
        &self.entries[self.goal_index].embedding
    }

    pub fn nearest_neighbor(&self, w: &Embedding) -> Neighbor {
        let (index, d2) = nearest_index(self.entries.iter().map(|e| &e.embedding), w.as_slice())
            .expect("policies are never empty");
        Neighbor {
            index,
            distance: libm::sqrtf(d2),
        }
    }

    /// Embeds `image` and returns the action of its nearest frame.
    pub fn query_action(&self, params: &EmbedderParams, image: &ImageTensor) -> Result<Query, PolicyError> {
        let embedding = embed(params, image)?;
        let n = self.nearest_neighbor(&embedding);
        Ok(Query {
            action: self.entries[n.index].action,
            index: n.index,
            distance: n.distance,
            embedding,
        })
    }
}

/// Embeds a demonstration sequence and labels each frame relative to the goal.
pub fn build_policy(params: &EmbedderParams, images: Vec<ImageTensor>, goal_index: usize) -> Result<Policy, PolicyError> {
    if images.is_empty() {
        return Err(PolicyError::Empty);
    }
    if goal_index >= images.len() {
        return Err(PolicyError::GoalOutOfRange {
            goal: goal_index,
            len: images.len(),
        });
    }
    let embeddings = images.iter().map(|im| embed(params, im)).collect::<Result<Vec<_>, _>>()?;
    Policy::from_parts(images, embeddings, goal_index)
}
