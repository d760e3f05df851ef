//! Linear programs in maximization form and their solver.
//!
//! Rows are stored sparsely. Solving is delegated to `microlp`'s revised
//! simplex; every solution it returns is re-checked against the rows and
//! bounds here before being handed back, and the objective is recomputed
//! from the returned values.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};

use crate::error::{Error, Result};

/// Feasibility tolerance, applied relative to the magnitude of each row.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Optimality tolerance for comparing objective values.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Distance from the nearest integer below which a value is reported integral.
pub const INTEGRALITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    terms: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

impl Constraint {
    pub fn terms(&self) -> &[(usize, f64)] {
        &self.terms
    }

    pub fn relation(&self) -> Relation {
        self.relation
    }

    pub fn rhs(&self) -> f64 {
        self.rhs
    }

    fn activity(&self, values: &[f64]) -> (f64, f64) {
        self.terms.iter().fold((0.0, 0.0), |(sum, mag), &(j, a)| {
            let t = a * values[j];
            (sum + t, mag + t.abs())
        })
    }
}

/// `maximize objective · x` subject to the rows and `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    constraints: Vec<Constraint>,
}

impl LinearProgram {
    /// New program over `objective.len()` variables, each bounded to `[0, +inf)`.
    pub fn new(objective: Vec<f64>) -> Result<Self> {
        if let Some(j) = objective.iter().position(|c| !c.is_finite()) {
            return Err(Error::LpConstruction(format!(
                "objective coefficient {j} is not finite"
            )));
        }
        let bounds = vec![(0.0, f64::INFINITY); objective.len()];
        Ok(Self {
            objective,
            bounds,
            constraints: Vec::new(),
        })
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> Result<()> {
        if var >= self.num_vars() {
            return Err(Error::LpConstruction(format!(
                "variable {var} out of range ({} variables)",
                self.num_vars()
            )));
        }
        if lower.is_nan()
            || upper.is_nan()
            || lower == f64::INFINITY
            || upper == f64::NEG_INFINITY
            || lower > upper
        {
            return Err(Error::LpConstruction(format!(
                "invalid bounds [{lower}, {upper}] for variable {var}"
            )));
        }
        self.bounds[var] = (lower, upper);
        Ok(())
    }

    /// Adds `sum terms relation rhs`. Repeated indices are summed and zero
    /// coefficients dropped.
    pub fn add_constraint(
        &mut self,
        mut terms: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Result<()> {
        let row = self.constraints.len();
        if !rhs.is_finite() {
            return Err(Error::LpConstruction(format!(
                "row {row}: right-hand side is not finite"
            )));
        }
        for &(j, a) in &terms {
            if j >= self.num_vars() {
                return Err(Error::LpConstruction(format!(
                    "row {row}: column {j} out of range ({} variables)",
                    self.num_vars()
                )));
            }
            if !a.is_finite() {
                return Err(Error::LpConstruction(format!(
                    "row {row}: coefficient of column {j} is not finite"
                )));
            }
        }
        terms.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (j, a) in terms {
            match merged.last_mut() {
                Some((last, acc)) if *last == j => *acc += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.constraints.push(Constraint {
            terms: merged,
            relation,
            rhs,
        });
        Ok(())
    }

    /// Adds a row given densely; its width must equal the number of variables.
    pub fn add_dense_constraint(
        &mut self,
        row: &[f64],
        relation: Relation,
        rhs: f64,
    ) -> Result<()> {
        if row.len() != self.num_vars() {
            return Err(Error::LpConstruction(format!(
                "row has width {} but the program has {} variables",
                row.len(),
                self.num_vars()
            )));
        }
        let terms = row
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, a)| a != 0.0)
            .collect();
        self.add_constraint(terms, relation, rhs)
    }

    /// Largest violation of any row or bound at `values`, each scaled by
    /// `1 + |rhs| + sum |a_j x_j|`.
    pub fn max_scaled_violation(&self, values: &[f64]) -> f64 {
        let bound_violation = self
            .bounds
            .iter()
            .zip(values)
            .map(|(&(lo, hi), &x)| (lo - x).max(x - hi).max(0.0) / (1.0 + x.abs()))
            .fold(0.0, f64::max);
        self.constraints
            .iter()
            .map(|c| {
                let (lhs, mag) = c.activity(values);
                let gap = match c.relation {
                    Relation::Le => lhs - c.rhs,
                    Relation::Ge => c.rhs - lhs,
                    Relation::Eq => (lhs - c.rhs).abs(),
                };
                gap.max(0.0) / (1.0 + c.rhs.abs() + mag)
            })
            .fold(bound_violation, f64::max)
    }

    pub fn objective_at(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, x)| c * x).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal value; `-inf` when infeasible and `+inf` when unbounded.
    pub objective_value: f64,
    /// Present iff `status` is [`LpStatus::Optimal`].
    pub values: Option<Vec<f64>>,
    pub iterations: u64,
}

impl LpSolution {
    fn infeasible() -> Self {
        Self {
            status: LpStatus::Infeasible,
            objective_value: f64::NEG_INFINITY,
            values: None,
            iterations: 0,
        }
    }

    fn unbounded() -> Self {
        Self {
            status: LpStatus::Unbounded,
            objective_value: f64::INFINITY,
            values: None,
            iterations: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// True if every value lies within `tol` of an integer.
    pub fn is_integral(&self, tol: f64) -> bool {
        self.values
            .as_ref()
            .is_some_and(|v| v.iter().all(|x| (x - x.round()).abs() <= tol))
    }

    /// Values of an optimal solution; errors for any other status, which the
    /// problems built in this crate never produce.
    pub fn into_values(self) -> Result<Vec<f64>> {
        match self.status {
            LpStatus::Optimal => Ok(self.values.expect("optimal solutions carry values")),
            status => Err(Error::Solver(format!(
                "expected an optimal LP solution, got {status:?}"
            ))),
        }
    }
}

/// Solves `lp` to optimality. Infeasible and unbounded programs are reported
/// through [`LpSolution::status`]; only solver breakdowns are errors.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    if lp.num_vars() == 0 {
        let feasible = lp.constraints.iter().all(|c| match c.relation {
            Relation::Le => 0.0 <= c.rhs + FEASIBILITY_TOL,
            Relation::Ge => 0.0 >= c.rhs - FEASIBILITY_TOL,
            Relation::Eq => c.rhs.abs() <= FEASIBILITY_TOL,
        });
        return Ok(if feasible {
            LpSolution {
                status: LpStatus::Optimal,
                objective_value: 0.0,
                values: Some(Vec::new()),
                iterations: 0,
            }
        } else {
            LpSolution::infeasible()
        });
    }

    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = lp
        .objective
        .iter()
        .zip(&lp.bounds)
        .map(|(&c, &bounds)| problem.add_var(c, bounds))
        .collect();
    for c in &lp.constraints {
        let expr: Vec<_> = c.terms.iter().map(|&(j, a)| (vars[j], a)).collect();
        let op = match c.relation {
            Relation::Le => ComparisonOp::Le,
            Relation::Ge => ComparisonOp::Ge,
            Relation::Eq => ComparisonOp::Eq,
        };
        problem.add_constraint(expr, op, c.rhs);
    }

    let solution = match problem.solve() {
        Ok(SolveOutcome::Solution(solution)) => solution,
        Ok(SolveOutcome::Interrupted(_)) => {
            return Err(Error::Solver(
                "LP solve interrupted without a limit being set".into(),
            ))
        }
        Err(microlp::Error::Infeasible) => return Ok(LpSolution::infeasible()),
        Err(microlp::Error::Unbounded) => return Ok(LpSolution::unbounded()),
        Err(e) => return Err(Error::Solver(e.to_string())),
    };

    let mut values: Vec<f64> = vars.iter().map(|&v| solution.var_value(v)).collect();
    for (x, &(lo, hi)) in values.iter_mut().zip(&lp.bounds) {
        // Snap bound noise; anything larger is caught by the check below.
        if *x < lo && lo - *x <= FEASIBILITY_TOL {
            *x = lo;
        } else if *x > hi && *x - hi <= FEASIBILITY_TOL {
            *x = hi;
        }
    }
    let violation = lp.max_scaled_violation(&values);
    if violation > FEASIBILITY_TOL {
        return Err(Error::Solver(format!(
            "LP solution violates its constraints by {violation:e} (scaled)"
        )));
    }

    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: lp.objective_at(&values),
        values: Some(values),
        iterations: solution.stats().lp_iterations,
    })
}
