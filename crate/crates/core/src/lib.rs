//! Structured node pruning in a lower-triangular orthogonal subspace.
//!
//! Layer inputs are factorized with a unit-diagonal LDL decomposition of their
//! Gram matrix. Dropping trailing subspace coordinates removes whole input
//! units while folding the least-squares reconstruction of their activity into
//! the surviving weights. Units are ordered beforehand by an importance score
//! (see [`ScoreMethod`]), and per-layer depths can come from a single
//! network-wide cumulative-variance threshold.
//!
//! Module map:
//! - [`linalg`]: dense matrices, Gram accumulation, LDL, symmetric eigen, permutations.
//! - [`model`]: network representation, forward pass with input capture, model files.
//! - [`pruning`]: importance scores, prune plans, weight reparameterization.
//! - [`verify`]: independent least-squares oracles and synthetic sweeps.
//! - [`eval`]: datasets, calibration sampling, accuracy, reports.
//! - [`cli`]: run configuration and the batch commands behind the `subprune` binary.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod eval;
pub mod exec;
pub mod linalg;
pub mod model;
pub mod pruning;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;
pub use linalg::{GramMatrix, Permutation, SubspaceFactor, Tensor2D};
pub use model::{Layer, Network};
pub use pruning::{ImportanceScores, LayerPrunePlan, PruneMode, PruneSpec, ScoreMethod};

