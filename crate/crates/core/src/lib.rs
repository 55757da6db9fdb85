//! Guided graph compression.
//!
//! Graph autoencoders that shrink both the node count and the feature width
//! of a graph, trained either on their own or jointly with a downstream
//! classifier: a small classical graph convolution network or one of two
//! simulated quantum graph neural networks. The crate also carries the jet
//! feature pipeline, training loops, hyperparameter search and ROC-AUC
//! evaluation needed to run the full comparison.

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gae;
pub mod gnn;
pub mod graph;
pub mod jetdata;
pub mod qgnn;
pub mod qsim;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{CompressedGraph, Edge, Graph};
pub use tensor::Matrix;
