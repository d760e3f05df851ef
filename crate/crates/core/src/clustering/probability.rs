use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dominance::{alive_marginal, failed_marginal, Bound, SeedOrder};
use crate::error::{Error, Result};
use crate::model::{FailureConfiguration, ProblemInstance};
use crate::recourse::{check_enumeration, config_probability, DEFAULT_EVALUATION_LIMIT};

/// Default number of inclusion-exclusion orders kept.
pub const DEFAULT_IE_DEPTH: usize = 2;

const MC_BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Exact,
    /// Truncated inclusion-exclusion, corrected so the clustered LP stays a
    /// lower bound.
    IeLowerCorrected,
    /// The mirror construction for the upper bound.
    IeUpperCorrected,
    MonteCarlo,
}

/// Probability mass of each cluster of a seed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDistribution {
    /// One weight per seed, in seed order.
    pub weights: Vec<f64>,
    pub kind: DistributionKind,
    pub bound: Bound,
    /// Sample count for Monte Carlo, truncation depth for inclusion-exclusion.
    pub meta: Option<usize>,
}

/// How cluster weights are obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityMode {
    #[default]
    Exact,
    InclusionExclusion { depth: usize },
    MonteCarlo { samples: usize },
}

impl ClusterDistribution {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

pub fn cluster_probs_exact(
    instance: &ProblemInstance,
    w: &SeedOrder,
    bound: Bound,
) -> Result<ClusterDistribution> {
    cluster_probs_exact_with_limit(instance, w, bound, DEFAULT_EVALUATION_LIMIT)
}

/// Cluster weights by enumerating every configuration.
pub fn cluster_probs_exact_with_limit(
    instance: &ProblemInstance,
    w: &SeedOrder,
    bound: Bound,
    limit: usize,
) -> Result<ClusterDistribution> {
    check_order(instance, w)?;
    let q = instance.num_buys();
    check_enumeration("cluster_probs_exact", q, limit)?;
    let assigned: Vec<(usize, f64)> = (0..1u64 << q)
        .into_par_iter()
        .map(|mask| {
            let c = FailureConfiguration::from_alive_mask(mask, q);
            (w.assign(&c, bound), config_probability(instance, mask))
        })
        .collect();
    let mut weights = vec![0.0; w.len()];
    for (j, p) in assigned {
        weights[j] += p;
    }
    Ok(ClusterDistribution {
        weights,
        kind: DistributionKind::Exact,
        bound,
        meta: None,
    })
}

/// Cluster weights from inclusion-exclusion truncated after `depth` orders.
///
/// A seed's cluster is the set it dominates minus everything dominated by an
/// earlier seed (later seeds for the upper clustering). The series over the
/// earlier seeds is cut so it ends on a subtracted term, making each partial
/// sum a lower estimate `p̂`. Each non-residual seed gets `max(p(S_j), p̂)`,
/// never more than its true mass, and the leftover goes to the all-failed
/// seed (lower) or the all-alive seed (upper). The lower LP therefore sees
/// pessimistic mass and the upper LP optimistic mass. With `depth` at least
/// the number of seeds the weights are exact.
pub fn cluster_probs_ie(
    instance: &ProblemInstance,
    w: &SeedOrder,
    bound: Bound,
    depth: usize,
) -> Result<ClusterDistribution> {
    check_order(instance, w)?;
    if depth == 0 {
        return Err(Error::validation("depth", "must be at least 1"));
    }
    let seeds = w.seeds();
    let r = seeds.len();
    // Each cluster is described by a mask whose union over seeds yields the
    // intersection of the dominated sets.
    let (masks, marginal, order, residual): (
        Vec<u64>,
        fn(&ProblemInstance, u64) -> f64,
        Vec<usize>,
        usize,
    ) = match bound {
        Bound::Lower => (
            seeds.iter().map(|s| s.alive_mask()).collect(),
            alive_marginal,
            (0..r - 1).collect(),
            r - 1,
        ),
        Bound::Upper => (
            seeds.iter().map(|s| s.failed_mask()).collect(),
            failed_marginal,
            (1..r).rev().collect(),
            0,
        ),
    };

    let mut weights = vec![0.0; r];
    for (step, &j) in order.iter().enumerate() {
        let before: Vec<u64> = order[..step].iter().map(|&i| masks[i]).collect();
        let estimate = truncated_series(instance, masks[j], &before, depth, marginal);
        let own = config_probability(instance, seeds[j].alive_mask());
        weights[j] = own.max(estimate);
    }
    let claimed: f64 = weights.iter().sum();
    weights[residual] = (1.0 - claimed).max(0.0);
    Ok(ClusterDistribution {
        weights,
        kind: match bound {
            Bound::Lower => DistributionKind::IeLowerCorrected,
            Bound::Upper => DistributionKind::IeUpperCorrected,
        },
        bound,
        meta: Some(depth),
    })
}

/// `P(A_own) - sum P(A_own ∩ A_i) + sum P(A_own ∩ A_i ∩ A_k) - ...` over the
/// `before` sets, keeping terms with at most `depth - 1` of them and ending
/// on a subtraction whenever terms are dropped.
fn truncated_series(
    instance: &ProblemInstance,
    own: u64,
    before: &[u64],
    depth: usize,
    marginal: fn(&ProblemInstance, u64) -> f64,
) -> f64 {
    let mut max_order = depth as i64 - 1;
    if (max_order as usize) < before.len() && max_order % 2 == 0 {
        max_order -= 1;
    }
    if max_order < 0 {
        return 0.0;
    }
    let max_order = max_order as usize;

    // Signed coefficient per (union mask, number of sets intersected).
    let mut terms: BTreeMap<(u64, usize), f64> = BTreeMap::new();
    terms.insert((own, 0), 1.0);
    for &b in before {
        let grown: Vec<((u64, usize), f64)> = terms
            .iter()
            .filter(|((_, t), _)| *t < max_order)
            .map(|(&(m, t), &c)| ((m | b, t + 1), -c))
            .collect();
        for (key, c) in grown {
            *terms.entry(key).or_insert(0.0) += c;
        }
    }
    let mut by_mask: BTreeMap<u64, f64> = BTreeMap::new();
    for ((m, _), c) in terms {
        *by_mask.entry(m).or_insert(0.0) += c;
    }
    by_mask
        .into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|(m, c)| c * marginal(instance, m))
        .sum()
}

/// Empirical cluster frequencies over `samples` independent draws.
///
/// Samples are drawn in fixed-size batches, each from its own ChaCha stream
/// keyed by `rng_seed`, so the result does not depend on thread scheduling.
pub fn cluster_probs_mc(
    instance: &ProblemInstance,
    w: &SeedOrder,
    bound: Bound,
    samples: usize,
    rng_seed: u64,
) -> Result<ClusterDistribution> {
    check_order(instance, w)?;
    if samples == 0 {
        return Err(Error::validation("samples", "must be at least 1"));
    }
    let q = instance.num_buys();
    let fail: Vec<f64> = instance.fail_probs().collect();
    let batches = samples.div_ceil(MC_BATCH);
    let counts = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(b as u64);
            let mut counts = vec![0u64; w.len()];
            let n = MC_BATCH.min(samples - b * MC_BATCH);
            for _ in 0..n {
                let mut alive = 0u64;
                for (u, &p) in fail.iter().enumerate() {
                    if rng.gen::<f64>() >= p {
                        alive |= 1 << u;
                    }
                }
                counts[w.assign(&FailureConfiguration::from_alive_mask(alive, q), bound)] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; w.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(ClusterDistribution {
        weights: counts.iter().map(|&c| c as f64 / samples as f64).collect(),
        kind: DistributionKind::MonteCarlo,
        bound,
        meta: Some(samples),
    })
}

/// Dispatches on `mode`; `rng_seed` is only used for Monte Carlo.
pub fn cluster_distribution(
    instance: &ProblemInstance,
    w: &SeedOrder,
    bound: Bound,
    mode: ProbabilityMode,
    rng_seed: u64,
) -> Result<ClusterDistribution> {
    match mode {
        ProbabilityMode::Exact => cluster_probs_exact(instance, w, bound),
        ProbabilityMode::InclusionExclusion { depth } => {
            cluster_probs_ie(instance, w, bound, depth)
        }
        ProbabilityMode::MonteCarlo { samples } => {
            cluster_probs_mc(instance, w, bound, samples, rng_seed)
        }
    }
}

pub(crate) fn check_order(instance: &ProblemInstance, w: &SeedOrder) -> Result<()> {
    if w.q() != instance.num_buys() {
        return Err(Error::DistributionMismatch(format!(
            "seed order has {} bits but the instance has {} buy types",
            w.q(),
            instance.num_buys()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::{generate_instance, GeneratorParams};
    use crate::recourse::scenario_probability;

    fn order(bits: &[&str]) -> SeedOrder {
        SeedOrder::new(bits.iter().map(|b| config(b)).collect()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn tiny_exact_weights() {
        let tiny = tiny();
        let two = order(&["11", "00"]);
        let three = order(&["11", "10", "00"]);
        let lo = cluster_probs_exact(&tiny, &two, Bound::Lower).unwrap();
        assert!(close(&lo.weights, &[0.45, 0.55], 1e-12));
        let up = cluster_probs_exact(&tiny, &two, Bound::Upper).unwrap();
        assert!(close(&up.weights, &[0.95, 0.05], 1e-12));
        let lo3 = cluster_probs_exact(&tiny, &three, Bound::Lower).unwrap();
        assert!(close(&lo3.weights, &[0.45, 0.45, 0.10], 1e-12));
        assert_eq!(lo3.kind, DistributionKind::Exact);
    }

    #[test]
    fn tiny_ie_weights() {
        let tiny = tiny();
        let three = order(&["11", "10", "00"]);
        for depth in 2..5 {
            let d = cluster_probs_ie(&tiny, &three, Bound::Lower, depth).unwrap();
            assert!(
                close(&d.weights, &[0.45, 0.45, 0.10], 1e-12),
                "depth {depth}"
            );
        }
        let d = cluster_probs_ie(&tiny, &order(&["11", "00"]), Bound::Lower, 1).unwrap();
        assert!(close(&d.weights, &[0.45, 0.55], 1e-12));
        assert_eq!(d.kind, DistributionKind::IeLowerCorrected);
        assert_eq!(d.meta, Some(1));
        assert!(cluster_probs_ie(&tiny, &three, Bound::Lower, 0).is_err());
    }

    #[test]
    fn depth_one_falls_back_to_seed_mass() {
        // Only the order-0 term is allowed, which overestimates, so it is
        // dropped and each interior seed keeps just its own probability.
        let tiny = tiny();
        let d = cluster_probs_ie(&tiny, &order(&["11", "10", "00"]), Bound::Lower, 1).unwrap();
        assert!(close(&d.weights, &[0.45, 0.45, 0.10], 1e-12));
        let d =
            cluster_probs_ie(&tiny, &order(&["11", "01", "10", "00"]), Bound::Upper, 1).unwrap();
        let exact =
            cluster_probs_exact(&tiny, &order(&["11", "01", "10", "00"]), Bound::Upper).unwrap();
        assert!(close(&d.weights, &exact.weights, 1e-12));
    }

    #[test]
    fn full_depth_matches_enumeration() {
        for seed in 0..40u64 {
            let q = 2 + seed as usize % 5;
            let inst = generate_instance(&GeneratorParams::new(q, 2, 0.5), seed).unwrap();
            let w = SeedOrder::random(q, (2 + seed as usize % 12).min(1 << q), seed ^ 77).unwrap();
            for bound in [Bound::Lower, Bound::Upper] {
                let exact = cluster_probs_exact(&inst, &w, bound).unwrap();
                let ie = cluster_probs_ie(&inst, &w, bound, w.len()).unwrap();
                assert!(
                    close(&ie.weights, &exact.weights, 1e-9),
                    "seed {seed} {bound}"
                );
            }
        }
    }

    #[test]
    fn truncation_shifts_mass_to_the_residual_seed() {
        for seed in 0..40u64 {
            let q = 3 + seed as usize % 4;
            let inst = generate_instance(&GeneratorParams::new(q, 2, 0.5), seed).unwrap();
            let w = SeedOrder::random(q, (4 + seed as usize % 20).min(1 << q), seed).unwrap();
            for (bound, residual) in [(Bound::Lower, w.len() - 1), (Bound::Upper, 0)] {
                let exact = cluster_probs_exact(&inst, &w, bound).unwrap();
                for depth in 1..4 {
                    let ie = cluster_probs_ie(&inst, &w, bound, depth).unwrap();
                    assert!((ie.total() - 1.0).abs() < 1e-9);
                    for (j, (a, e)) in ie.weights.iter().zip(&exact.weights).enumerate() {
                        if j == residual {
                            assert!(*a >= e - 1e-12, "seed {seed} depth {depth}");
                        } else {
                            assert!(*a <= e + 1e-12, "seed {seed} depth {depth} cluster {j}");
                            let own = scenario_probability(&inst, &w.seeds()[j]).unwrap();
                            assert!(*a >= own - 1e-15);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn exact_weights_partition_the_space() {
        for seed in 0..30u64 {
            let q = 1 + seed as usize % 6;
            let inst = generate_instance(&GeneratorParams::new(q, 2, 0.5), seed).unwrap();
            let w = SeedOrder::random(q, (2 + seed as usize % 9).min(1 << q), seed).unwrap();
            for bound in [Bound::Lower, Bound::Upper] {
                let d = cluster_probs_exact(&inst, &w, bound).unwrap();
                assert!((d.total() - 1.0).abs() < 1e-9);
                assert!(d.weights.iter().all(|&x| x >= 0.0));
                // Each seed belongs to its own cluster.
                for (j, s) in w.seeds().iter().enumerate() {
                    assert_eq!(w.assign(s, bound), j);
                }
            }
        }
    }

    #[test]
    fn monte_carlo_tracks_exact_weights() {
        let tiny = tiny();
        let w = order(&["11", "00"]);
        let d = cluster_probs_mc(&tiny, &w, Bound::Lower, 100_000, 1).unwrap();
        assert!(close(&d.weights, &[0.45, 0.55], 0.01));
        assert_eq!(d.meta, Some(100_000));
        assert_eq!(
            d,
            cluster_probs_mc(&tiny, &w, Bound::Lower, 100_000, 1).unwrap()
        );
        assert!((d.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_sample_is_a_point_mass() {
        let tiny = tiny();
        let d = cluster_probs_mc(&tiny, &order(&["11", "10", "00"]), Bound::Upper, 1, 3).unwrap();
        assert_eq!(d.weights.iter().filter(|&&x| x == 1.0).count(), 1);
        assert_eq!(d.weights.iter().filter(|&&x| x == 0.0).count(), 2);
        assert!(cluster_probs_mc(&tiny, &order(&["11", "00"]), Bound::Lower, 0, 3).is_err());
    }

    #[test]
    fn reliable_buys_always_land_in_the_first_cluster() {
        let inst = generate_instance(
            &GeneratorParams {
                fail_prob: crate::model::ValueRange::new(0.0, 0.0),
                ..GeneratorParams::new(4, 2, 0.5)
            },
            2,
        )
        .unwrap();
        let w = SeedOrder::random(4, 6, 2).unwrap();
        let d = cluster_probs_mc(&inst, &w, Bound::Lower, 5000, 9).unwrap();
        assert_eq!(d.weights[0], 1.0);
    }

    #[test]
    fn order_must_match_instance() {
        let tiny = tiny();
        let w = SeedOrder::endpoints(3);
        assert!(matches!(
            cluster_probs_exact(&tiny, &w, Bound::Lower),
            Err(Error::DistributionMismatch(_))
        ));
    }
}
