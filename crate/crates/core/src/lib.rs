//! Explainable graph neural networks, a budget-enforcing query oracle, and an
//! explanation-guided model extraction attack.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: graphs, datasets, TU ingestion, the planted-motif generator, splits.
//! - [`diff`]: dense 2-D tensors, a reverse-mode tape, losses and Adam.
//! - [`model`]: GIN/GCN encoders with mean pooling and a linear head.
//! - [`explain`]: Graph-CAM, gradient and Grad-CAM node importance.
//! - [`oracle`]: the target model behind a query budget, in-process or over TCP.
//! - [`attack`]: query collection, style augmentation, alignment losses, surrogate training.
//! - [`metrics`]: ROC-AUC, fidelity, Kendall tau, structural features and MMD.
//! - [`experiment`]: the end-to-end harness used by the CLI.

pub mod attack;
pub mod diff;
pub mod error;
pub mod experiment;
pub mod explain;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
