//! Occupation-measure linear programs.
//!
//! Variables are masses `μ(i, q)` on (node, velocity) pairs. Test functions are the nodal
//! hat functions, so each closedness or holonomy constraint is a flow-conservation row per
//! node: the mass sitting at node `j` balances the mass arriving at `j` through the
//! interpolated backward foot points `x_i - h q`.

use serde::Serialize;
use thiserror::Error;

use crate::ergodic::CriticalData;
use crate::grid::Discretization;
use crate::model::HamiltonianModel;
use crate::simplex::{LinearProgram, LpError, LpSolution, Simplex, SimplexOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("linear program infeasible: {0}")]
    InfeasibleLp(LpError),
    #[error("linear program unbounded (internal error): {0}")]
    Unbounded(LpError),
    #[error("linear solver failure: {0}")]
    Solver(LpError),
    #[error("program has no admissible columns")]
    NoColumns,
    #[error("node {0} is outside the grid")]
    BadNode(usize),
    #[error("discount rate must be positive, got {0}")]
    InvalidLambda(f64),
}

impl From<LpError> for MeasureError {
    fn from(e: LpError) -> Self {
        match e {
            LpError::Infeasible { .. } => MeasureError::InfeasibleLp(e),
            LpError::Unbounded { .. } => MeasureError::Unbounded(e),
            other => MeasureError::Solver(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureKind {
    Ergodic,
    Discounted { lambda: f64, z: usize },
    /// Any other measure (hand-built, sampled vertex, ...).
    Other,
}

/// Sparse nonnegative mass on `(node, velocity index)` pairs, sorted by key.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    pub kind: MeasureKind,
    entries: Vec<(usize, usize, f64)>,
}

impl DiscreteMeasure {
    /// Merges duplicate keys and drops zero masses.
    pub fn new(kind: MeasureKind, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_by_key(|e| (e.0, e.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(last) if last.0 == e.0 && last.1 == e.1 => last.2 += e.2,
                _ => merged.push(e),
            }
        }
        merged.retain(|e| e.2 != 0.0);
        Self { kind, entries: merged }
    }

    pub fn dirac(node: usize, velocity: usize) -> Self {
        Self::new(MeasureKind::Other, vec![(node, velocity, 1.0)])
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    pub fn min_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).fold(f64::INFINITY, f64::min)
    }

    /// Node marginal `Σ_q μ(i, q)`.
    pub fn node_marginal(&self, n_nodes: usize) -> Vec<f64> {
        let mut m = vec![0.0; n_nodes];
        for &(i, _, v) in &self.entries {
            m[i] += v;
        }
        m
    }

    /// Nodes carrying mass above `tol`.
    pub fn support_nodes(&self, tol: f64) -> Vec<usize> {
        let mut s: Vec<usize> = self.entries.iter().filter(|e| e.2 > tol).map(|e| e.0).collect();
        s.dedup();
        s
    }

    /// `⟨μ, f⟩` for a function of `(node, velocity index)`.
    pub fn pair(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        self.entries.iter().map(|&(i, k, v)| v * f(i, k)).sum()
    }

    /// `⟨μ, v⟩` for a function of the node only.
    pub fn pair_field(&self, v: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, _, m)| m * v[i]).sum()
    }

    /// `⟨μ, L⟩`.
    pub fn action(&self, model: &HamiltonianModel, disc: &Discretization) -> f64 {
        self.pair(|i, k| model.lagrangian(disc.grid.point(i), disc.velocities.get(k)))
    }
}

/// Equality-form LP over `(node, velocity)` masses.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub kind: MeasureKind,
    pub program: LinearProgram,
    /// `(node, velocity index)` of each column.
    pub variables: Vec<(usize, usize)>,
    pub n_nodes: usize,
}

impl LpProblem {
    /// Row sums of each column over the node rows; zero for the ergodic flow-conservation
    /// rows and `λh` for the discounted holonomy rows.
    pub fn column_row_sums(&self) -> Vec<f64> {
        (0..self.program.cols())
            .map(|j| self.program.column(j).iter().filter(|e| e.0 < self.n_nodes).map(|e| e.1).sum())
            .collect()
    }
}

fn lagrangian_table(model: &HamiltonianModel, disc: &Discretization) -> Vec<f64> {
    let nq = disc.velocities.len();
    (0..disc.grid.len() * nq)
        .map(|ik| model.lagrangian(disc.grid.point(ik / nq), disc.velocities.get(ik % nq)))
        .collect()
}

/// Minimize `⟨μ, L⟩` over closed probability measures: one flow row per node plus `Σμ = 1`.
/// Transitions whose foot point leaves the box and velocities with infinite `L` are excluded.
pub fn build_ergodic_lp(model: &HamiltonianModel, disc: &Discretization) -> LpProblem {
    let n = disc.grid.len();
    let nq = disc.velocities.len();
    let costs = lagrangian_table(model, disc);
    let mut program = LinearProgram::new(n + 1);
    program.set_rhs(n, 1.0);
    let mut variables = Vec::new();
    for i in 0..n {
        for k in 0..nq {
            let c = costs[i * nq + k];
            if !c.is_finite() || disc.backward_clipped(i, k) {
                continue;
            }
            let mut col = vec![(i, 1.0), (n, 1.0)];
            col.extend(disc.backward(i, k).iter().map(|&(j, w)| (j, -w)));
            program.add_column(col, c);
            variables.push((i, k));
        }
    }
    LpProblem { kind: MeasureKind::Ergodic, program, variables, n_nodes: n }
}

/// Minimize `⟨μ, L⟩` subject to the discounted holonomy rows
/// `(1 + λh) Σ_q μ(j, q) - Σ w(i, q → j) μ(i, q) = λh 𝟙[j = z]`, which force `Σμ = 1`.
/// Clipped transitions are kept (state constraint), matching the value iteration.
pub fn build_discounted_lp(
    model: &HamiltonianModel,
    disc: &Discretization,
    lambda: f64,
    z: usize,
) -> Result<LpProblem, MeasureError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(MeasureError::InvalidLambda(lambda));
    }
    let n = disc.grid.len();
    if z >= n {
        return Err(MeasureError::BadNode(z));
    }
    let nq = disc.velocities.len();
    let lh = lambda * disc.grid.h();
    let costs = lagrangian_table(model, disc);
    let mut program = LinearProgram::new(n);
    program.set_rhs(z, lh);
    let mut variables = Vec::new();
    for i in 0..n {
        for k in 0..nq {
            let c = costs[i * nq + k];
            if !c.is_finite() {
                continue;
            }
            let mut col = vec![(i, 1.0 + lh)];
            col.extend(disc.backward(i, k).iter().map(|&(j, w)| (j, -w)));
            program.add_column(col, c);
            variables.push((i, k));
        }
    }
    Ok(LpProblem { kind: MeasureKind::Discounted { lambda, z }, program, variables, n_nodes: n })
}

#[derive(Debug, Clone)]
pub struct LpOutcome {
    pub measure: DiscreteMeasure,
    pub objective: f64,
    /// Multipliers of the node rows (and of the normalization row, last, when present).
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub pivots: usize,
}

fn outcome(problem: &LpProblem, sol: LpSolution) -> LpOutcome {
    let entries = problem
        .variables
        .iter()
        .zip(&sol.x)
        .filter(|(_, &m)| m > 0.0)
        .map(|(&(i, k), &m)| (i, k, m))
        .collect();
    LpOutcome {
        measure: DiscreteMeasure::new(problem.kind, entries),
        objective: sol.objective,
        duals: sol.duals,
        reduced_costs: sol.reduced_costs,
        pivots: sol.pivots,
    }
}

pub fn lp_solve(problem: &LpProblem, opts: SimplexOptions) -> Result<LpOutcome, MeasureError> {
    if problem.program.cols() == 0 {
        return Err(MeasureError::NoColumns);
    }
    let sol = crate::simplex::solve(&problem.program, opts)?;
    Ok(outcome(problem, sol))
}

/// Optimal face of the ergodic LP: closed probability measures supported on the columns
/// with zero reduced cost under an optimal dual. By complementary slackness these are
/// exactly the minimizing measures.
#[derive(Debug, Clone)]
pub struct MatherPolytope {
    pub problem: LpProblem,
    /// Optimal value of the ergodic LP.
    pub action: f64,
    pub reference: DiscreteMeasure,
}

impl MatherPolytope {
    pub fn from_ergodic(
        ergodic: &LpProblem,
        solution: &LpOutcome,
        tol: f64,
    ) -> Result<Self, MeasureError> {
        let n = ergodic.n_nodes;
        let keep: Vec<usize> =
            (0..ergodic.program.cols()).filter(|&j| solution.reduced_costs[j] <= tol).collect();
        if keep.is_empty() {
            return Err(MeasureError::NoColumns);
        }
        let mut used = vec![false; n + 1];
        for &j in &keep {
            for &(r, _) in ergodic.program.column(j) {
                used[r] = true;
            }
        }
        let mut row_map = vec![usize::MAX; n + 1];
        let mut rows = 0;
        for r in 0..=n {
            if used[r] {
                row_map[r] = rows;
                rows += 1;
            }
        }
        let mut program = LinearProgram::new(rows);
        program.set_rhs(row_map[n], 1.0);
        let mut variables = Vec::with_capacity(keep.len());
        for &j in &keep {
            let col = ergodic.program.column(j).iter().map(|&(r, v)| (row_map[r], v)).collect();
            program.add_column(col, ergodic.program.cost()[j]);
            variables.push(ergodic.variables[j]);
        }
        let mut problem = LpProblem { kind: MeasureKind::Ergodic, program, variables, n_nodes: 0 };
        // Node rows are renumbered; the normalization row keeps its own slot.
        problem.n_nodes = rows - 1;
        Ok(Self { problem, action: solution.objective, reference: solution.measure.clone() })
    }

    pub fn columns(&self) -> usize {
        self.problem.program.cols()
    }

    /// Solver positioned at a vertex of the polytope, for repeated linear objectives.
    pub fn solver(&self, opts: SimplexOptions) -> Result<PolytopeSolver<'_>, MeasureError> {
        let (simplex, _) = Simplex::solve(&self.problem.program, opts)?;
        Ok(PolytopeSolver { polytope: self, simplex })
    }
}

/// Warm-started minimization of linear objectives over a [`MatherPolytope`].
pub struct PolytopeSolver<'a> {
    polytope: &'a MatherPolytope,
    simplex: Simplex<'a>,
}

impl PolytopeSolver<'_> {
    /// Minimizes `Σ μ(i, q) g(i, q)`.
    pub fn minimize(&mut self, g: impl Fn(usize, usize) -> f64) -> Result<LpOutcome, MeasureError> {
        let cost: Vec<f64> = self.polytope.problem.variables.iter().map(|&(i, k)| g(i, k)).collect();
        let sol = self.simplex.reoptimize(&cost)?;
        Ok(outcome(&self.polytope.problem, sol))
    }
}

/// Largest violation of the ergodic closedness rows and of `Σμ = 1`.
pub fn closedness_residual(mu: &DiscreteMeasure, disc: &Discretization) -> f64 {
    let n = disc.grid.len();
    let mut rows = vec![0.0; n];
    for &(i, k, m) in mu.entries() {
        rows[i] += m;
        for &(j, w) in disc.backward(i, k) {
            rows[j] -= w * m;
        }
    }
    let flow = rows.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    flow.max((mu.total_mass() - 1.0).abs())
}

/// Largest violation of the discounted holonomy rows at `(λ, z)`.
pub fn holonomy_residual(mu: &DiscreteMeasure, disc: &Discretization, lambda: f64, z: usize) -> f64 {
    let n = disc.grid.len();
    let lh = lambda * disc.grid.h();
    let mut rows = vec![0.0; n];
    rows[z] = -lh;
    for &(i, k, m) in mu.entries() {
        rows[i] += (1.0 + lh) * m;
        for &(j, w) in disc.backward(i, k) {
            rows[j] -= w * m;
        }
    }
    rows.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// `⟨μ, Dψ·q⟩` by backward differences `[ψ(x_i) - ψ(x_i - h q)] / h`, with `ψ` evaluated at
/// the true foot point.
pub fn test_field_pairing(mu: &DiscreteMeasure, disc: &Discretization, psi: &dyn Fn(&[f64]) -> f64) -> f64 {
    let h = disc.grid.h();
    let dim = disc.grid.dim();
    mu.pair(|i, k| {
        let x = disc.grid.point(i);
        let q = disc.velocities.get(k);
        let foot: Vec<f64> = (0..dim).map(|a| x[a] - h * q[a]).collect();
        (psi(x) - psi(&foot)) / h
    })
}

/// `⟨μ, λψ + Dψ·q⟩ - λψ(z)` with the same differences as [`test_field_pairing`].
pub fn discounted_test_field_pairing(
    mu: &DiscreteMeasure,
    disc: &Discretization,
    lambda: f64,
    z: usize,
    psi: &dyn Fn(&[f64]) -> f64,
) -> f64 {
    let grad = test_field_pairing(mu, disc, psi);
    let level = lambda * mu.pair(|i, _| psi(disc.grid.point(i)));
    grad + level - lambda * psi(disc.grid.point(z))
}

#[derive(Debug, Clone, Serialize)]
pub struct SupportReport {
    pub outside_mass: f64,
    pub mass_tol: f64,
    pub passed: bool,
}

/// Mass outside `(Aubry set dilated by 2h) × {|q| ≤ q_bound}`.
pub fn support_check(
    mu: &DiscreteMeasure,
    critical: &CriticalData,
    disc: &Discretization,
    q_bound: f64,
    mass_tol: f64,
) -> SupportReport {
    let grid = &disc.grid;
    let radius = 2.0 * grid.h() * (1.0 + 1e-9);
    let near = |i: usize| {
        let x = grid.point(i);
        critical.aubry_nodes().iter().any(|&z| {
            let y = grid.point(z);
            x.iter().zip(y).all(|(a, b)| (a - b).abs() <= radius)
        })
    };
    let outside: f64 = mu
        .entries()
        .iter()
        .filter(|&&(i, k, _)| disc.velocities.norm(k) > q_bound + 1e-12 || !near(i))
        .map(|e| e.2)
        .sum();
    let total = mu.total_mass();
    let frac = if total > 0.0 { outside / total } else { 0.0 };
    SupportReport { outside_mass: frac, mass_tol, passed: frac <= mass_tol }
}

/// Wasserstein-1 distance between the normalized measures on `(x, q)` space with ground
/// cost `|x - x'| + |q - q'|`, by a transportation LP.
pub fn transport_distance(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    disc: &Discretization,
) -> Result<f64, MeasureError> {
    let ma = a.total_mass();
    let mb = b.total_mass();
    if a.entries().is_empty() || b.entries().is_empty() || ma <= 0.0 || mb <= 0.0 {
        return Err(MeasureError::NoColumns);
    }
    let na = a.entries().len();
    let nb = b.entries().len();
    let dist = |p: &(usize, usize, f64), r: &(usize, usize, f64)| {
        let d = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(s, t)| (s - t).powi(2)).sum::<f64>().sqrt();
        d(disc.grid.point(p.0), disc.grid.point(r.0)) + d(disc.velocities.get(p.1), disc.velocities.get(r.1))
    };
    let mut program = LinearProgram::new(na + nb);
    for (s, e) in a.entries().iter().enumerate() {
        program.set_rhs(s, e.2 / ma);
    }
    for (t, e) in b.entries().iter().enumerate() {
        program.set_rhs(na + t, e.2 / mb);
    }
    for (s, p) in a.entries().iter().enumerate() {
        for (t, r) in b.entries().iter().enumerate() {
            program.add_column(vec![(s, 1.0), (na + t, 1.0)], dist(p, r));
        }
    }
    let sol = crate::simplex::solve(&program, SimplexOptions::default())?;
    Ok(sol.objective.max(0.0))
}
