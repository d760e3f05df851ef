//! Shared inputs for the benchmarks.

use stochmatch_core::{generate_instance, GeneratorParams, ProblemInstance};

/// A generated instance with `q` buys and `k` sells at edge density 0.5.
pub fn instance(q: usize, k: usize, seed: u64) -> ProblemInstance {
    generate_instance(&GeneratorParams::new(q, k, 0.5), seed).expect("valid generator parameters")
}
