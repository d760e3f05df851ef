//! Two-stage stochastic matching of unreliable buy contracts to sell
//! contracts.
//!
//! Buys fail independently; all units of a buy type fail together. After the
//! failures are observed, surviving buy units are matched to held sell units
//! along admissible edges to avoid penalties. [`recourse`] solves this
//! exactly by enumerating all `2^q` failure configurations, [`greedy`] gives
//! cheap baselines, and [`clustering`] approximates the problem from below
//! and above with a few representative configurations.

pub mod clustering;
pub mod error;
pub mod experiment;
pub mod greedy;
pub mod lp;
pub mod model;
pub mod recourse;
mod seeding;
#[cfg(test)]
mod testutil;

pub use clustering::{
    Bound, ClusterDistribution, DistributionKind, ProbabilityMode, RefineOptions, RefinementTrace,
    SeedOrder, SeedSelect,
};
pub use error::{Error, Result};
pub use model::{
    generate_instance, parse_allocation, parse_instance, Allocation, BuyContractType,
    FailureConfiguration, GeneratorParams, ProblemInstance, SellContractType,
};
pub use recourse::{
    evaluate_exact, solve_exact, solve_matching, BoundKind, MatchingResult, SolveReport,
};
