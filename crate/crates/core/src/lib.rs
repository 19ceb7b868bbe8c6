//! Clique-based batch mining and geographic retrieval diagnostics.
//!
//! The crate covers the full loop of a place-recognition training
//! experiment at desk scale: synthetic street-level worlds, candidate graphs
//! over descriptor-similar sequences, clique-based place sampling into
//! training batches, a multi-similarity loss with online pair selection, a
//! linear toy embedder, and retrieval/geographic-sensitivity diagnostics.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the disk
//! format stores descriptors as f32 either way. The [`Dataset64`] family of
//! aliases picks the double-precision instantiation used by the CLI.

pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod geo;
pub mod mining;
pub mod rng;
pub mod synth;
pub mod scalar;
pub mod training;

pub use embedding::{desc_distance, EmbeddingMatrix};
pub use error::{Error, Result};
pub use geo::{geo_distance, Position};
pub use scalar::Scalar;

/// Single-precision dataset, matching the on-disk descriptor width.
pub type Dataset32 = dataset::Dataset<f32>;
/// Double-precision dataset, the default working type.
pub type Dataset64 = dataset::Dataset<f64>;
/// Single-precision descriptor matrix.
pub type EmbeddingMatrix32 = embedding::EmbeddingMatrix<f32>;
/// Double-precision descriptor matrix.
pub type EmbeddingMatrix64 = embedding::EmbeddingMatrix<f64>;
