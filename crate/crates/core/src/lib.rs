//! Early-warning toolkit for token rug pulls.
//!
//! The crate ingests ERC-20-style transfer logs, scores wash-trading patterns
//! (self-trades, matched back-and-forth trades, short circular routes), derives
//! a twelve-feature risk vector per token or sliding window, and trains two
//! interpretable classifiers (logistic regression and a random forest) whose
//! warnings are evaluated both by ranking quality and by how many hours of
//! lead time they give before the rug-pull event.
//!
//! Everything is deterministic for a fixed seed: one experiment seed funnels
//! all randomness (splits, bootstraps, synthetic data) through per-purpose
//! substreams, and artifacts are byte-identical across reruns except for a
//! single wall-clock field.

pub mod config;
pub mod experiments;
pub mod features;
pub mod ingest;
pub mod metrics;
pub mod models;
pub mod patterns;
pub mod seed;
pub mod stages;
pub mod synth;

pub use config::RunConfig;
pub use ingest::{Label, TokenDataset, TransferRecord};
