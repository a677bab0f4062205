//! Sketching toolkit for lp-norm subspace embeddings, 1 <= p <= 2.
//!
//! The crate provides:
//!
//! - dense and sparse matrix types with MatrixMarket / plain-text I/O
//!   ([`matrix`], [`io`]);
//! - seeded, labeled random streams ([`rng`]);
//! - Cauchy, p-stable, and truncated samplers plus Monte-Carlo tail
//!   reports against a calibrated constants table ([`stable`]);
//! - every sketching family behind one [`embed::EmbeddingSpec`] interface:
//!   CountSketch, OSNAP, sparse stable diagonals, two-block compositions,
//!   Bernoulli-sampled and truncated variants, and dense stable maps;
//! - conditioning measurement and sketch-based preconditioning
//!   ([`conditioning`]);
//! - a distortion harness with exact l2 ratios and witness-search lower
//!   bounds for general p ([`distortion`]);
//! - a generator for adversarial instances with known column structure
//!   ([`hardgen`]);
//! - sketch-and-solve and precondition-sample-solve lp regression
//!   ([`regress`]).

pub mod conditioning;
pub mod distortion;
pub mod embed;
pub mod error;
pub mod hardgen;
pub mod io;
pub(crate) mod linalg;
pub mod matrix;
pub mod norm;
pub mod regress;
pub mod rng;
pub mod stable;

pub use error::{Error, Result};
pub use matrix::{DenseMatrix, MatrixRef, SparseMatrix};
pub use norm::PNorm;
pub use rng::RngStream;
