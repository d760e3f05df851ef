//! Second-stage matching, exact evaluation of fixed allocations, and the
//! expanded two-stage LP.
//!
//! With penalties stored as magnitudes, the matching value of an allocation
//! under a failure configuration is
//!
//! ```text
//! Q(n, m, S) = max  sum_{(u,i)} j_ui * penalty_i
//!              s.t. sum_u j_ui <= m_i          for every sell i
//!                   sum_i j_ui <= s_u * n_u    for every buy u
//!                   j >= 0
//! ```
//!
//! and the expected profit of `(n, m)` is
//! `-sum n_u R_u + sum m_i (R_i - penalty_i) + E_S[Q(n, m, S)]`.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::DistributionKind;
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, Relation, INTEGRALITY_TOL};
use crate::model::{check_config_len, Allocation, FailureConfiguration, ProblemInstance};

/// Default guard for operations that enumerate every configuration once.
pub const DEFAULT_EVALUATION_LIMIT: usize = 20;
/// Default guard for the expanded LP over all configurations.
pub const DEFAULT_EXACT_LIMIT: usize = 14;
/// Hard ceiling for any enumeration, whatever guard the caller configures.
pub const MAX_ENUMERATION: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchingResult {
    /// Recovered penalty `Q(n, m, S)`.
    pub q_value: f64,
    /// Flow along each edge, indexed like [`ProblemInstance::edges`].
    pub flows: Vec<f64>,
}

impl MatchingResult {
    fn zero(instance: &ProblemInstance) -> Self {
        Self {
            q_value: 0.0,
            flows: vec![0.0; instance.edges().len()],
        }
    }

    pub fn flow(&self, instance: &ProblemInstance, buy: usize, sell: usize) -> Option<f64> {
        instance.edge_index(buy, sell).map(|e| self.flows[e])
    }

    pub fn total_flow(&self) -> f64 {
        self.flows.iter().sum()
    }
}

/// Solves the matching LP for allocation `alloc` once `config` is observed.
pub fn solve_matching(
    instance: &ProblemInstance,
    alloc: &Allocation,
    config: &FailureConfiguration,
) -> Result<MatchingResult> {
    alloc.validate(instance)?;
    check_config_len(instance, config)?;
    match_units(
        instance,
        &alloc.n_f64(),
        &alloc.m_f64(),
        config.alive_mask(),
    )
}

/// Matching with possibly fractional holdings, as returned by the two-stage LP.
pub(crate) fn match_units(
    instance: &ProblemInstance,
    n: &[f64],
    m: &[f64],
    alive: u64,
) -> Result<MatchingResult> {
    let usable: Vec<usize> = instance
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            alive >> e.buy & 1 == 1
                && n[e.buy] > 0.0
                && m[e.sell] > 0.0
                && instance.sell(e.sell).penalty > 0.0
        })
        .map(|(idx, _)| idx)
        .collect();
    if usable.is_empty() {
        return Ok(MatchingResult::zero(instance));
    }

    let objective = usable
        .iter()
        .map(|&e| instance.sell(instance.edges()[e].sell).penalty)
        .collect();
    let mut lp = LinearProgram::new(objective)?;
    let mut buy_rows = vec![Vec::new(); instance.num_buys()];
    let mut sell_rows = vec![Vec::new(); instance.num_sells()];
    for (col, &e) in usable.iter().enumerate() {
        let edge = instance.edges()[e];
        buy_rows[edge.buy].push((col, 1.0));
        sell_rows[edge.sell].push((col, 1.0));
    }
    for (i, row) in sell_rows.into_iter().enumerate() {
        if !row.is_empty() {
            lp.add_constraint(row, Relation::Le, m[i])?;
        }
    }
    for (u, row) in buy_rows.into_iter().enumerate() {
        if !row.is_empty() {
            lp.add_constraint(row, Relation::Le, n[u])?;
        }
    }

    let values = solve_lp(&lp)?.into_values()?;
    let mut flows = vec![0.0; instance.edges().len()];
    for (&e, &v) in usable.iter().zip(&values) {
        flows[e] = v;
    }
    let q_value = usable
        .iter()
        .zip(&values)
        .map(|(&e, &v)| v * instance.sell(instance.edges()[e].sell).penalty)
        .sum();
    Ok(MatchingResult { q_value, flows })
}

/// Probability of observing exactly `config` under independent failures.
pub fn scenario_probability(
    instance: &ProblemInstance,
    config: &FailureConfiguration,
) -> Result<f64> {
    check_config_len(instance, config)?;
    Ok(config_probability(instance, config.alive_mask()))
}

pub(crate) fn config_probability(instance: &ProblemInstance, alive: u64) -> f64 {
    instance
        .fail_probs()
        .enumerate()
        .map(|(u, p)| if alive >> u & 1 == 1 { 1.0 - p } else { p })
        .product()
}

pub(crate) fn check_enumeration(operation: &'static str, q: usize, limit: usize) -> Result<()> {
    if q > limit.min(MAX_ENUMERATION) {
        return Err(Error::EnumerationLimit {
            operation,
            q,
            limit: limit.min(MAX_ENUMERATION),
        });
    }
    Ok(())
}

/// Exact expected profit of a fixed allocation.
pub fn evaluate_exact(instance: &ProblemInstance, alloc: &Allocation) -> Result<f64> {
    evaluate_exact_with_limit(instance, alloc, DEFAULT_EVALUATION_LIMIT)
}

pub fn evaluate_exact_with_limit(
    instance: &ProblemInstance,
    alloc: &Allocation,
    limit: usize,
) -> Result<f64> {
    alloc.validate(instance)?;
    let q = instance.num_buys();
    check_enumeration("evaluate_exact", q, limit)?;
    let (n, m) = (alloc.n_f64(), alloc.m_f64());
    let configs: Vec<FailureConfiguration> = FailureConfiguration::enumerate(q).collect();
    let terms = configs
        .par_iter()
        .map(|c| {
            let p = config_probability(instance, c.alive_mask());
            if p == 0.0 {
                return Ok(0.0);
            }
            Ok(p * match_units(instance, &n, &m, c.alive_mask())?.q_value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(alloc.first_stage_value(instance) + terms.iter().sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Exact,
    Lower,
    Upper,
}

impl std::fmt::Display for BoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundKind::Exact => "exact",
            BoundKind::Lower => "lower",
            BoundKind::Upper => "upper",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioQ {
    pub config: FailureConfiguration,
    /// Probability mass the scenario carried in the LP.
    pub weight: f64,
    pub q_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub scenarios: usize,
    pub lp_variables: usize,
    pub lp_constraints: usize,
    pub lp_iterations: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub objective_value: f64,
    /// Holdings rounded to the nearest integers.
    pub allocation: Allocation,
    /// Holdings exactly as the LP returned them.
    pub lp_n: Vec<f64>,
    pub lp_m: Vec<f64>,
    /// Whether the LP holdings were integral within [`INTEGRALITY_TOL`].
    pub integral: bool,
    pub bound_kind: BoundKind,
    /// Source of the scenario weights for clustered solves.
    pub probability_kind: Option<DistributionKind>,
    /// `Q` at the LP holdings: every configuration for exact solves, every
    /// seed (in seed order) for clustered ones.
    pub per_scenario_q: Vec<ScenarioQ>,
    pub stats: SolverStats,
}

pub(crate) struct TwoStageSolution {
    pub objective: f64,
    pub n: Vec<f64>,
    pub m: Vec<f64>,
    pub allocation: Allocation,
    pub integral: bool,
    pub lp_variables: usize,
    pub lp_constraints: usize,
    pub lp_iterations: u64,
}

/// Solves the expanded LP whose scenario set is `scenarios`, each with the
/// given probability weight. Recourse columns are only created where they
/// can carry value: live buy, positive weight and positive penalty.
pub(crate) fn solve_two_stage(
    instance: &ProblemInstance,
    scenarios: &[(FailureConfiguration, f64)],
) -> Result<TwoStageSolution> {
    let (q, k) = (instance.num_buys(), instance.num_sells());
    let mut objective: Vec<f64> = instance.buys().iter().map(|b| -b.price).collect();
    objective.extend(instance.sells().iter().map(|s| s.price - s.penalty));

    // (scenario, edge) for every recourse column, in column order.
    let mut recourse = Vec::new();
    for (v, (config, weight)) in scenarios.iter().enumerate() {
        if *weight <= 0.0 {
            continue;
        }
        for (e, edge) in instance.edges().iter().enumerate() {
            let penalty = instance.sell(edge.sell).penalty;
            if config.is_alive(edge.buy)
                && penalty > 0.0
                && instance.buy(edge.buy).capacity > 0
                && instance.sell(edge.sell).capacity > 0
            {
                recourse.push((v, e));
                objective.push(weight * penalty);
            }
        }
    }

    let mut lp = LinearProgram::new(objective)?;
    for (u, b) in instance.buys().iter().enumerate() {
        lp.set_bounds(u, 0.0, b.capacity as f64)?;
    }
    for (i, s) in instance.sells().iter().enumerate() {
        lp.set_bounds(q + i, 0.0, s.capacity as f64)?;
    }

    let mut start = 0;
    while start < recourse.len() {
        let v = recourse[start].0;
        let end = start
            + recourse[start..]
                .iter()
                .take_while(|(w, _)| *w == v)
                .count();
        let mut buy_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); q];
        let mut sell_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
        for (offset, &(_, e)) in recourse[start..end].iter().enumerate() {
            let col = q + k + start + offset;
            let edge = instance.edges()[e];
            buy_rows[edge.buy].push((col, 1.0));
            sell_rows[edge.sell].push((col, 1.0));
        }
        for (i, mut row) in sell_rows.into_iter().enumerate() {
            if !row.is_empty() {
                row.push((q + i, -1.0));
                lp.add_constraint(row, Relation::Le, 0.0)?;
            }
        }
        for (u, mut row) in buy_rows.into_iter().enumerate() {
            if !row.is_empty() {
                row.push((u, -1.0));
                lp.add_constraint(row, Relation::Le, 0.0)?;
            }
        }
        start = end;
    }

    let solution = solve_lp(&lp)?;
    let iterations = solution.iterations;
    let objective_value = solution.objective_value;
    let values = solution.into_values()?;

    let snap = |x: f64| {
        let r = x.round();
        if (x - r).abs() <= INTEGRALITY_TOL {
            (r, true)
        } else {
            (x, false)
        }
    };
    let mut integral = true;
    let mut n = Vec::with_capacity(q);
    let mut m = Vec::with_capacity(k);
    for (j, &x) in values[..q + k].iter().enumerate() {
        let (v, ok) = snap(x);
        integral &= ok;
        if j < q {
            n.push(v);
        } else {
            m.push(v);
        }
    }
    let round = |x: &f64, cap: u32| (x.round().max(0.0) as u32).min(cap);
    let allocation = Allocation {
        n: n.iter()
            .zip(instance.buys())
            .map(|(x, b)| round(x, b.capacity))
            .collect(),
        m: m.iter()
            .zip(instance.sells())
            .map(|(x, s)| round(x, s.capacity))
            .collect(),
    };

    Ok(TwoStageSolution {
        objective: objective_value,
        n,
        m,
        allocation,
        integral,
        lp_variables: lp.num_vars(),
        lp_constraints: lp.num_constraints(),
        lp_iterations: iterations,
    })
}

/// `Q` at fractional holdings for each configuration, computed in parallel.
pub(crate) fn q_values(
    instance: &ProblemInstance,
    n: &[f64],
    m: &[f64],
    configs: &[FailureConfiguration],
) -> Result<Vec<f64>> {
    configs
        .par_iter()
        .map(|c| Ok(match_units(instance, n, m, c.alive_mask())?.q_value))
        .collect()
}

/// Optimal expected profit over all allocations, via the expanded LP over
/// all `2^q` configurations.
pub fn solve_exact(instance: &ProblemInstance) -> Result<SolveReport> {
    solve_exact_with_limit(instance, DEFAULT_EXACT_LIMIT)
}

pub fn solve_exact_with_limit(instance: &ProblemInstance, limit: usize) -> Result<SolveReport> {
    let started = Instant::now();
    let q = instance.num_buys();
    check_enumeration("solve_exact", q, limit)?;
    let scenarios: Vec<(FailureConfiguration, f64)> = FailureConfiguration::enumerate(q)
        .map(|c| (c, config_probability(instance, c.alive_mask())))
        .collect();
    let solution = solve_two_stage(instance, &scenarios)?;
    let configs: Vec<FailureConfiguration> = scenarios.iter().map(|s| s.0).collect();
    let qs = q_values(instance, &solution.n, &solution.m, &configs)?;
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
        bound_kind: BoundKind::Exact,
        probability_kind: None,
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
