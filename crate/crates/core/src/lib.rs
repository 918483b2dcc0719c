//! Speech-driven 3D talking heads driven by landmark motion.
//!
//! The pipeline has two independently trained stages:
//!
//! * [`s2l`]: a bidirectional LSTM regressing per-frame landmark
//!   displacements from contextual audio features ([`audio`]).
//! * [`s2d`]: a spiral-convolution decoder that expands the sparse landmark
//!   displacements to a dense per-vertex motion field on a fixed topology
//!   ([`mesh`]).
//!
//! [`data`] builds the displacement datasets, [`train`] runs the two training
//! loops, [`eval`] implements the lips / displacement / angle metrics and
//! [`pipeline`] composes everything for inference.

pub mod audio;
pub mod container;
pub mod data;
pub mod error;
pub mod eval;
pub mod mesh;
pub mod nn;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod pipeline;
pub mod render;
pub mod s2d;
pub mod s2l;
pub mod train;

pub use error::{Error, Result};
