//! Region-to-pattern recommendation over a pruned region-feature knowledge
//! graph with intent-aware embeddings.

pub mod analysis;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod interactions;
pub mod kg;
pub mod model;
pub mod parallel;
pub mod pipeline;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
