//! Corpus files, checkpoints, experiment drivers and reports on top of
//! `phasekit-core`.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod f32t;
pub mod plot;
pub mod policy_io;
pub mod pool;
pub mod stats;

pub use error::{Error, Result};
pub use phasekit_core as core;
