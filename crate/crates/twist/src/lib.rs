//! Community detection on mixture multi-layer networks.
//!
//! The crate implements TWIST (Tucker decomposition with integrated SVD
//! transformation): a regularized tensor power iteration over the stacked
//! adjacency tensor of a multi-layer network, followed by clustering of
//! the resulting node and layer embeddings. It also ships the generative
//! mixture multi-layer stochastic block model, reference baselines, a
//! layered edge-list format, and a simulation harness.

pub mod baselines;
pub mod clustering;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod mmsbm;
pub mod pipeline;
pub mod power;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
