//! Node clustering for attributed, possibly directed, heterophilous graphs.
//!
//! Two feature maps `φ` and `ψ` are learned so that the asymmetric similarity
//! `S = ΦΨᵀ` is well suited to spectral biclustering. Training happens in the
//! primal (linear in the number of nodes); the [`dual`] module holds the exact
//! SVD-based formulation that serves as an oracle for the primal path.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. IO, file formats and the command-line front end live in the
//! `hencler` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod dual;
mod error;
pub mod graph;
pub mod linalg;
pub mod loss;
pub(crate) mod math;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use graph::{AttributedGraph, PositionalEncoding};
pub use linalg::Matrix;
pub use model::{EmbeddingPair, HenclerParams, ModelDims, SimilarityFactor};
pub use train::{RunRecord, TrainConfig, Trainer};
