//! Clustering under measurement error.
//!
//! Gaussian mixtures (EM, BIC selection, Bhattacharyya merging) and DBSCAN
//! (automatic `eps`, bootstrap stability) are run on a fixed three-cluster
//! population before and after random or systematic error is injected, and
//! the resulting partitions are compared with the adjusted Rand index.

pub mod datagen;
pub mod dbscan;
pub mod error;
pub mod error_model;
pub mod gmm;
pub mod harness;
pub mod labels;
pub mod linalg;
pub mod rng;
pub mod validation;

pub use error::{Error, Result};
pub use labels::{ClusterLabels, NOISE};
pub use linalg::Matrix;
pub use rng::RngStream;
