//! Layerwise representational analyses of speech-model embeddings.
//!
//! Frame-level hidden states (EMB1 files) are mean-pooled over aligned phone
//! and word segments ([`store`]), sampled into balanced sets, speaker splits
//! and ABX triplets ([`sampling`]), and scored per layer by the analyses in
//! [`metrics`]: phone identity probes, ABX discrimination, silhouette
//! clustering after PCA/LDA, and RSA against text-derived word vectors.

pub mod config;
pub mod container;
pub mod error;
pub mod inventory;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod store;
pub mod synth;

pub use error::{Error, ErrorKind, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
