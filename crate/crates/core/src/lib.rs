//! Multimodal graph recommendation.
//!
//! Items are represented by a learned gated fusion of projected image and
//! text features; users by two layers of symmetric-normalized light graph
//! convolution over the user-item interaction graph. Training minimizes
//! binary cross-entropy with per-epoch negative sampling using hand-derived
//! gradients and Adam; evaluation ranks each user's held-out item against
//! sampled negatives and reports Recall@K and NDCG@K.
//!
//! Module map:
//!
//! - [`linalg`]: dense/sparse kernels and the finite-difference checker
//! - [`ingest`]: file loading, preprocessing, splits, negatives, synthetic data
//! - [`graph`]: CSR bipartite graph and multi-layer propagation
//! - [`model`]: parameters and the forward pass
//! - [`train`]: loss, backpropagation, Adam, the epoch loop, checkpoints
//! - [`eval`]: sampled-candidate ranking metrics
//! - [`cli`]: the `mmrec` command-line front end

pub mod cli;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
