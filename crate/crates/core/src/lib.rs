//! Single-process simulator for graph federated recommendation.
//!
//! Every user is a client holding an anchored, expanded bipartite subgraph.
//! Clients train LightGCN embeddings locally with BPR loss and the server
//! merges the returned user and item rows through a pluggable aggregation
//! strategy. Strategies are registered by id (`dist-fedavg`, `fedavg`,
//! `simpleavg`, `fedmedian`, `fedatt`) and picked at runtime from config.

pub mod aggregation;
pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod federation;
pub mod gnn;
pub mod graph;
pub(crate) mod seeding;

pub use embedding::EmbeddingMatrix;
pub use error::{Error, Result};
