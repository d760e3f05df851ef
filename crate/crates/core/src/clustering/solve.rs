use std::time::Instant;

use serde::Serialize;

use super::dominance::{Bound, SeedOrder};
use super::probability::{
    check_order, cluster_distribution, ClusterDistribution, DistributionKind, ProbabilityMode,
};
use crate::error::{Error, Result};
use crate::model::{Allocation, FailureConfiguration, ProblemInstance};
use crate::recourse::{
    match_units, q_values, solve_two_stage, BoundKind, ScenarioQ, SolveReport, SolverStats,
};

/// Default cap on reorder passes.
pub const DEFAULT_REORDER_ITERS: usize = 20;

/// Q values closer than this are treated as equal when sorting seeds.
const Q_QUANTUM: f64 = 1e-7;

fn check_distribution(w: &SeedOrder, dist: &ClusterDistribution, bound: Bound) -> Result<()> {
    if dist.weights.len() != w.len() {
        return Err(Error::DistributionMismatch(format!(
            "{} weights for {} seeds",
            dist.weights.len(),
            w.len()
        )));
    }
    if dist.bound != bound {
        return Err(Error::DistributionMismatch(format!(
            "weights were computed for the {} clustering, not the {bound}",
            dist.bound
        )));
    }
    match (dist.kind, bound) {
        (DistributionKind::IeLowerCorrected, Bound::Upper)
        | (DistributionKind::IeUpperCorrected, Bound::Lower) => {
            return Err(Error::DistributionMismatch(format!(
                "{:?} weights cannot back a {bound} bound",
                dist.kind
            )));
        }
        _ => {}
    }
    if let Some(j) = dist.weights.iter().position(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::DistributionMismatch(format!(
            "weight {j} is {}",
            dist.weights[j]
        )));
    }
    let total = dist.total();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::DistributionMismatch(format!(
            "weights sum to {total}"
        )));
    }
    Ok(())
}

/// Solves the two-stage LP with the seeds of `w` as the only scenarios,
/// weighted by `dist`.
///
/// With exact weights the lower clustering replaces every configuration by
/// one it dominates, so the value can only drop; the upper clustering is
/// the mirror. Monte Carlo weights are accepted but give estimates rather
/// than guaranteed bounds; `probability_kind` records which was used.
pub fn solve_clustered(
    instance: &ProblemInstance,
    w: &SeedOrder,
    dist: &ClusterDistribution,
    bound: Bound,
) -> Result<SolveReport> {
    let started = Instant::now();
    check_order(instance, w)?;
    check_distribution(w, dist, bound)?;
    let scenarios: Vec<(FailureConfiguration, f64)> = w
        .seeds()
        .iter()
        .copied()
        .zip(dist.weights.iter().copied())
        .collect();
    let solution = solve_two_stage(instance, &scenarios)?;
    let qs = q_values(instance, &solution.n, &solution.m, w.seeds())?;
    let per_scenario_q = scenarios
        .iter()
        .zip(qs)
        .map(|(&(config, weight), q_value)| ScenarioQ {
            config,
            weight,
            q_value,
        })
        .collect();
    Ok(SolveReport {
        objective_value: solution.objective,
        allocation: solution.allocation,
        lp_n: solution.n,
        lp_m: solution.m,
        integral: solution.integral,
        bound_kind: match bound {
            Bound::Lower => BoundKind::Lower,
            Bound::Upper => BoundKind::Upper,
        },
        probability_kind: Some(dist.kind),
        per_scenario_q,
        stats: SolverStats {
            scenarios: scenarios.len(),
            lp_variables: solution.lp_variables,
            lp_constraints: solution.lp_constraints,
            lp_iterations: solution.lp_iterations,
            wall_time: started.elapsed(),
        },
    })
}

/// `Q` of a fixed allocation at every seed.
pub fn seed_q_values(
    instance: &ProblemInstance,
    alloc: &Allocation,
    w: &SeedOrder,
) -> Result<Vec<f64>> {
    alloc.validate(instance)?;
    check_order(instance, w)?;
    q_values(instance, &alloc.n_f64(), &alloc.m_f64(), w.seeds())
}

/// Expected profit of a fixed allocation when each cluster is represented
/// by its seed.
pub fn clustered_expectation(
    instance: &ProblemInstance,
    alloc: &Allocation,
    w: &SeedOrder,
    dist: &ClusterDistribution,
) -> Result<f64> {
    check_distribution(w, dist, dist.bound)?;
    let (n, m) = (alloc.n_f64(), alloc.m_f64());
    let mut recourse = 0.0;
    for (s, &p) in w.seeds().iter().zip(&dist.weights) {
        if p > 0.0 {
            recourse += p * match_units(instance, &n, &m, s.alive_mask())?.q_value;
        }
    }
    alloc.validate(instance)?;
    Ok(alloc.first_stage_value(instance) + recourse)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReorderOutcome {
    pub order: SeedOrder,
    /// Solve of the clustered LP for `order`.
    pub report: SolveReport,
    /// Objective after each solve, starting with the input order.
    pub history: Vec<f64>,
}

/// Sorts seeds by their `Q` at the current solution, highest first, and
/// re-solves, until the order stops changing or `max_iters` passes.
///
/// Ties go to fewer failures, then lexicographic order. That keeps the
/// order valid: a seed dominating another never has a larger `Q`, and at
/// equal `Q` it has strictly more failures, so it still sorts later.
pub fn reorder_seeds(
    instance: &ProblemInstance,
    w: &SeedOrder,
    bound: Bound,
    mode: ProbabilityMode,
    rng_seed: u64,
    max_iters: usize,
) -> Result<ReorderOutcome> {
    let mut order = w.clone();
    let dist = cluster_distribution(instance, &order, bound, mode, rng_seed)?;
    let mut report = solve_clustered(instance, &order, &dist, bound)?;
    let mut history = vec![report.objective_value];
    for _ in 0..max_iters {
        let next = sorted_by_q(&order, &report)?;
        if next == order {
            break;
        }
        order = next;
        let dist = cluster_distribution(instance, &order, bound, mode, rng_seed)?;
        report = solve_clustered(instance, &order, &dist, bound)?;
        history.push(report.objective_value);
    }
    Ok(ReorderOutcome {
        order,
        report,
        history,
    })
}

fn sorted_by_q(order: &SeedOrder, report: &SolveReport) -> Result<SeedOrder> {
    let mut keyed: Vec<(i64, FailureConfiguration)> = report
        .per_scenario_q
        .iter()
        .map(|s| ((s.q_value / Q_QUANTUM).round() as i64, s.config))
        .collect();
    debug_assert_eq!(keyed.len(), order.len());
    keyed.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(a.1.failure_count().cmp(&b.1.failure_count()))
            .then(a.1.cmp(&b.1))
    });
    SeedOrder::new(keyed.into_iter().map(|(_, c)| c).collect())
        .map_err(|v| Error::Solver(format!("sorting seeds by Q broke the order: {v}")))
}
