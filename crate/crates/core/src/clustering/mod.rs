//! Scenario clustering: seed orders over failure configurations, cluster
//! probabilities, clustered lower and upper bounds, and seed refinement.

mod dominance;
mod probability;
mod refine;
mod solve;

pub use dominance::{
    assign_cluster, failure_dominates, failure_overlap, fds_probability, non_failure_dominates,
    validate_seed_order, Bound, SeedOrder, SeedOrderViolation,
};
pub use probability::{
    cluster_distribution, cluster_probs_exact, cluster_probs_exact_with_limit, cluster_probs_ie,
    cluster_probs_mc, ClusterDistribution, DistributionKind, ProbabilityMode, DEFAULT_IE_DEPTH,
};
pub use refine::{
    refine, select_random_seed, select_seed, RefineOptions, RefinementStep, RefinementTrace,
    SeedSelect, H_TOLERANCE,
};
pub use solve::{
    clustered_expectation, reorder_seeds, seed_q_values, solve_clustered, ReorderOutcome,
    DEFAULT_REORDER_ITERS,
};
