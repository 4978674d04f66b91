//! Temporal graph collaborative filtering.
//!
//! A causal, windowed LightGCN engine for daily top-k recommendation over
//! drifting user-item interaction streams, with BPR training, dynamic
//! negative sampling, static/MF/popularity baselines, and a rolling daily
//! evaluation protocol.

pub mod baselines;
pub mod config;
pub mod dataio;
pub mod engine;
pub mod error;
pub mod eval;
pub mod graph;
pub mod runner;
pub mod training;

pub use error::{Result, TgcfError};

/// Library version, echoed into run summaries.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
