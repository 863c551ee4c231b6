//! Encoded linear mixed models and Gaussian mixtures.
//!
//! Large sample counts make the `n × n` covariance of a mixed model
//! expensive to invert; large feature counts do the same for the `p × p`
//! component covariances of a mixture. This crate compresses one of those
//! dimensions with an orthonormal encoder obtained from a truncated
//! eigen/singular value decomposition, fits the model in the reduced space,
//! and maps the results back.
//!
//! * [`encoding`]: sample encoders (`m × n`, orthonormal rows) built from a
//!   relatedness matrix and feature encoders (`p × r`, orthonormal columns)
//!   built from a data matrix.
//! * [`lmm`]: two-component REML (average-information Newton) on raw or
//!   sample-encoded inputs.
//! * [`mixture`]: EM for full-covariance Gaussian mixtures and mixtures of
//!   factor analyzers, raw or feature-encoded.
//! * [`data`]: genotype/phenotype simulation, CSV ingestion, clustering
//!   metrics.
//! * [`bench`]: permutation benchmarks and report emission.

pub mod bench;
pub mod data;
pub mod encoding;
pub mod error;
pub mod linalg;
pub mod lmm;
pub mod mixture;

pub use error::{Error, Result};

/// Dense real matrix, rows are samples and columns are features.
pub type DataMatrix = faer::Mat<f64>;
