//! Desk-scale mechanistic-interpretability toolkit: trains tiny
//! decoder-only transformers, decomposes attention heads into QK/OV
//! circuits, scores heads for relation induction and copying, and
//! measures three levels of in-context learning across checkpoints.

pub mod circuits;
pub mod corpus;
pub mod icl;
mod error;
pub mod metrics;
pub mod model;
pub mod probe;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};

/// Toolkit version stamped into every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
