//! Library surface of the induction-lens CLI: corpus/reference recipes,
//! sweep orchestration, CSV conventions, and figure emission. The binary
//! in `main.rs` is a thin argument layer over these.

pub mod csvio;
pub mod reference;
pub mod report;
pub mod svg;
pub mod sweep;
