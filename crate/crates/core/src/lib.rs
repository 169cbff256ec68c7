//! Time-contrastive task-progress estimation.
//!
//! The crate covers the algorithmic half of the pipeline: a small dense
//! tensor kernel set with hand-written backward passes, a procedural
//! multi-view scene simulator, triplet sampling, the embedding network and
//! its trainer, nearest-neighbor image-sequence policies and closed-loop
//! episodes against the simulator. Everything here is `no_std` + `alloc`;
//! persistence, the CLI and reporting live in the `phasekit` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod agent;
pub mod digest;
pub mod embedder;
pub mod policy;
pub mod sampler;
pub mod scenesim;
pub mod seed;
pub mod tensorcore;
pub mod trainer;

pub use embedder::{Embedding, EmbedderConfig, EmbedderParams};
pub use tensorcore::{LayerGrad, Tensor, TensorError};

/// Number of phase-indexed frames in every sequence.
pub const PHASES: usize = 16;
/// Number of cameras recorded per run.
pub const VIEWS: usize = 4;
/// The camera that stands in for the agent's own sensor.
pub const ROBOT_VIEW: usize = 3;
