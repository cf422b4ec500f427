//! Importance scoring, prune plans and subspace reparameterization.
//!
//! For a layer whose input units have Gram `C`, units are first ordered by an
//! importance score. The reordered Gram is factorized as
//! `P·C·Pᵀ = M⁻¹·diag(D)·M⁻ᵀ` with unit-diagonal lower-triangular `M⁻¹`.
//! Keeping the first `k` subspace coordinates gives the recovery matrix
//! `B = M⁻¹[:, :k] · M[:k, :k]`, which maps the kept units onto the least-squares
//! estimate of every unit. The consumer weights become `Ŵ = W·A`, where `A` is
//! `B` scattered back into the original unit order.

mod network;
mod plan;
mod reparam;
mod scores;

pub use network::{prune_network, LayerOutcome, PruneOptions, PruneOutcome};
pub use plan::{
    build_plan, build_plan_with_bias, cumulative_importance, keep_for_cutoff, retained_fraction,
    LayerPrunePlan, PlanDump, PruneMode, PruneSpec,
};
pub use reparam::{prune_layer, prune_layer_unpermuted, recovery, subspace_recovery, Recovery};
pub use scores::{
    score_random, score_saw, score_saw_tilde, score_unnorm_zca, ImportanceScores, ScoreMethod,
};
