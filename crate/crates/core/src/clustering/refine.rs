use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dominance::{Bound, SeedOrder};
use super::probability::{check_order, cluster_distribution, ClusterDistribution, ProbabilityMode};
use super::solve::{reorder_seeds, solve_clustered, DEFAULT_REORDER_ITERS};
use crate::error::{Error, Result};
use crate::model::{Allocation, FailureConfiguration, ProblemInstance};
use crate::recourse::config_probability;
use crate::seeding::derive_seed;

/// Clusters whose unexplained mass is at most this are not split.
pub const H_TOLERANCE: f64 = 1e-12;

const MAX_DRAWS: usize = 1000;
/// Largest cluster (in free bits) the deterministic fallback will scan.
const FALLBACK_BITS: usize = 20;

/// Picks a configuration that splits the lower cluster with the most
/// probability mass not already carried by its seed, and the position to
/// insert it at.
///
/// Members are drawn from the seed's dominated set, keeping the seed's live
/// buys alive and letting each of its failed buys survive independently with
/// its usual probability. Draws that belong to an earlier cluster or are
/// already seeds are rejected. If nothing is accepted after 1000 draws the
/// most likely eligible member is taken by enumeration, and if the cluster
/// has none the next best cluster is tried.
///
/// The new seed goes right before the seed it was drawn from. That keeps the
/// order valid: no earlier seed dominates it (otherwise it would sit in an
/// earlier cluster), and if it dominated some later seed then so would the
/// source seed, which dominates it.
pub fn select_seed(
    instance: &ProblemInstance,
    w: &SeedOrder,
    dist: &ClusterDistribution,
    rng_seed: u64,
) -> Result<(FailureConfiguration, usize)> {
    check_order(instance, w)?;
    if dist.bound != Bound::Lower || dist.weights.len() != w.len() {
        return Err(Error::DistributionMismatch(
            "seed selection needs lower-clustering weights for this order".into(),
        ));
    }
    let mut ranked: Vec<(f64, usize)> = w
        .seeds()
        .iter()
        .zip(&dist.weights)
        .enumerate()
        .map(|(j, (s, &p))| (p - config_probability(instance, s.alive_mask()), j))
        .filter(|(h, _)| *h > H_TOLERANCE)
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for (_, j) in ranked {
        if let Some(c) =
            draw_member(instance, w, j, &mut rng).or_else(|| likeliest_member(instance, w, j))
        {
            return Ok((c, j));
        }
    }
    Err(Error::NoSplittableCluster)
}

fn eligible(w: &SeedOrder, j: usize, c: &FailureConfiguration) -> bool {
    w.assign(c, Bound::Lower) == j && !w.contains(c)
}

fn draw_member(
    instance: &ProblemInstance,
    w: &SeedOrder,
    j: usize,
    rng: &mut ChaCha8Rng,
) -> Option<FailureConfiguration> {
    let seed = w.seeds()[j];
    let q = seed.len();
    let free: Vec<(usize, f64)> = instance
        .fail_probs()
        .enumerate()
        .filter(|(u, _)| !seed.is_alive(*u))
        .collect();
    for _ in 0..MAX_DRAWS {
        let mut alive = seed.alive_mask();
        for &(u, p) in &free {
            if rng.gen::<f64>() >= p {
                alive |= 1 << u;
            }
        }
        let c = FailureConfiguration::from_alive_mask(alive, q);
        if eligible(w, j, &c) {
            return Some(c);
        }
    }
    None
}

fn likeliest_member(
    instance: &ProblemInstance,
    w: &SeedOrder,
    j: usize,
) -> Option<FailureConfiguration> {
    let seed = w.seeds()[j];
    let free = seed.failed_mask();
    if free.count_ones() as usize > FALLBACK_BITS {
        return None;
    }
    let mut best: Option<(f64, FailureConfiguration)> = None;
    // Walk every subset of the free bits.
    let mut sub = free;
    loop {
        let c = FailureConfiguration::from_alive_mask(seed.alive_mask() | sub, seed.len());
        if eligible(w, j, &c) {
            let p = config_probability(instance, c.alive_mask());
            if best.map_or(true, |(bp, bc)| p > bp || (p == bp && c < bc)) {
                best = Some((p, c));
            }
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & free;
    }
    best.map(|(_, c)| c)
}

/// A uniformly random configuration that is not yet a seed, inserted before
/// the seed of the lower cluster it falls in.
pub fn select_random_seed(w: &SeedOrder, rng_seed: u64) -> Result<(FailureConfiguration, usize)> {
    let q = w.q();
    if q < 63 && w.len() as u64 >= 1u64 << q {
        return Err(Error::NoSplittableCluster);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    loop {
        let c = FailureConfiguration::from_alive_mask(rng.gen::<u64>(), q);
        if !w.contains(&c) {
            return Ok((c, w.assign(&c, Bound::Lower)));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedSelect {
    /// Split the cluster with the most unexplained mass.
    Heuristic,
    /// Add a uniformly random configuration.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineOptions {
    pub max_clusters: usize,
    pub prob_mode: ProbabilityMode,
    pub seed_select: SeedSelect,
    /// Sort seeds by `Q` after every insertion.
    pub reorder: bool,
    pub max_reorder_iters: usize,
    /// Also solve the upper clustering at every step.
    pub track_upper: bool,
    pub rng_seed: u64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_clusters: 30,
            prob_mode: ProbabilityMode::Exact,
            seed_select: SeedSelect::Heuristic,
            reorder: true,
            max_reorder_iters: DEFAULT_REORDER_ITERS,
            track_upper: false,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementStep {
    pub cluster_count: usize,
    pub lower: f64,
    pub upper: Option<f64>,
    /// Allocation of the lower-bound solve.
    pub allocation: Allocation,
    pub seeds: SeedOrder,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementTrace {
    pub steps: Vec<RefinementStep>,
}

impl RefinementTrace {
    pub fn last(&self) -> &RefinementStep {
        self.steps.last().expect("a trace has at least one step")
    }
}

/// Grows the seed order one configuration at a time from (all-alive,
/// all-failed), solving the clustered LP at every size.
pub fn refine(instance: &ProblemInstance, options: &RefineOptions) -> Result<RefinementTrace> {
    if options.max_clusters < 2 {
        return Err(Error::validation("max_clusters", "must be at least 2"));
    }
    let mut order = SeedOrder::endpoints(instance.num_buys());
    let mut steps = Vec::new();
    for step in 0u64.. {
        let started = Instant::now();
        let seed = |tag: u64| derive_seed(options.rng_seed, step, tag);
        let dist =
            cluster_distribution(instance, &order, Bound::Lower, options.prob_mode, seed(0))?;
        let lower = solve_clustered(instance, &order, &dist, Bound::Lower)?;
        let upper = if options.track_upper {
            let d =
                cluster_distribution(instance, &order, Bound::Upper, options.prob_mode, seed(1))?;
            Some(solve_clustered(instance, &order, &d, Bound::Upper)?.objective_value)
        } else {
            None
        };
        steps.push(RefinementStep {
            cluster_count: order.len(),
            lower: lower.objective_value,
            upper,
            allocation: lower.allocation,
            seeds: order.clone(),
            elapsed: started.elapsed(),
        });
        if order.len() >= options.max_clusters {
            break;
        }

        let picked = match options.seed_select {
            SeedSelect::Heuristic => select_seed(instance, &order, &dist, seed(2)),
            SeedSelect::Random => select_random_seed(&order, seed(2)),
        };
        let (config, position) = match picked {
            Ok(p) => p,
            Err(Error::NoSplittableCluster) => break,
            Err(e) => return Err(e),
        };
        order = order.inserted(position, config)?;
        if options.reorder {
            order = reorder_seeds(
                instance,
                &order,
                Bound::Lower,
                options.prob_mode,
                seed(3),
                options.max_reorder_iters,
            )?
            .order;
        }
    }
    Ok(RefinementTrace { steps })
}
