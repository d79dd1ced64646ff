//! Auditable pipeline measuring whether dementia-related information units
//! and discourse markers in text prompts leak into text-to-image generator
//! outputs.
//!
//! Stages: corpus ingestion -> IU vocabulary -> image generation -> joint
//! embeddings -> leakage classifiers -> contribution attribution ->
//! propagation metrics (IPS/ECS) -> audit report. Every stage is seeded,
//! content-addressed cached, and backed by deterministic mock adapters so
//! the whole audit reproduces bit-for-bit without GPU models.

pub mod attribution;
pub mod backends;
pub mod classify;
pub mod config;
pub mod corpus;
pub mod error;
pub mod iu;
pub mod lemma;
pub mod metrics;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
