//! Biclustering of textual collations by non-negative matrix factorization.
//!
//! The pipeline runs [`collation`] ingestion and exclusion, [`matrix`]
//! construction and weighting, [`factorize`] (alternating non-negative least
//! squares by projected gradient), and [`analysis`] of the resulting factors.
//! [`synth`] generates planted-cluster collations for validation, and
//! [`artifacts`] and [`cli`] handle the on-disk run format.

pub mod analysis;
pub mod artifacts;
pub mod cli;
pub mod collation;
pub mod error;
pub mod factorize;
pub mod matrix;
pub mod nnls;
pub mod synth;

pub use error::{Error, Result};
