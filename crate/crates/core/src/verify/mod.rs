//! Independent least-squares oracles for the pruning path.
//!
//! Nothing here touches the crate's LDL factorization, Jacobi eigen solver or
//! Gram accumulation: every solve goes through nalgebra's symmetric
//! eigendecomposition of freshly formed normal equations.

mod oracle;
mod sweep;
mod synth;

pub use oracle::{
    lls_recovery_from_gram, lls_recovery_oracle, reconstruction_error, relative_error, residual_score_oracle,
    OracleResult, RELATIVE_ERROR_FLOOR,
};
pub use sweep::{
    run_sweep, verify_gram_set, CheckSummary, Fault, GramCheck, SweepConfig, SweepReport, WorstCase,
    LLS_TOLERANCE, ZCA_TOLERANCE,
};
pub use synth::correlated_rows;
