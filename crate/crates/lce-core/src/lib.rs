//! Core library for streaming top-k recommendation over temporal
//! user-item interaction graphs.
//!
//! The pieces fit together like this:
//!
//! * [`graph`] stores a timestamped edge log and derives immutable CSR
//!   snapshots plus the replay schedule (offline / validation / streaming
//!   chunks / test windows).
//! * [`propagation`] holds the sparse message-passing kernels: neighbor
//!   composition for the implicit side and simplified GCN layers (identity
//!   transform, no self-loops) with layer averaging.
//! * [`lce`] trains the compositional model: explicit embeddings for one
//!   node kind only, the other kind is composed from its neighbors, so a
//!   streaming update is just recomposition on the merged graph.
//! * [`baselines`] implements top-popularity, RP3beta, implicit-feedback
//!   ALS, SLIM, and an explicit-embedding GCN reference model, each with
//!   an incremental inference rule.
//! * [`eval`] and [`replay`] rank, score, and drive the replay protocol:
//!   train offline once, then evaluate step by step as graph increments
//!   arrive, optionally against a retrain-every-step skyline.
//! * [`checkpoint`] persists fitted models so scoring is bit-reproducible
//!   across processes.

pub mod baselines;
pub mod checkpoint;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod graph;
pub mod lce;
pub mod metrics;
pub mod propagation;
pub mod replay;
pub mod stats;
pub mod synth;
pub mod train;

pub use embedding::EmbeddingTable;
pub use error::{CoreError, Result};
