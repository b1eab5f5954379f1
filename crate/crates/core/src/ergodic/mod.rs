//! Ergodic structure of `H(x, Du) = a` on the grid: critical value, intrinsic semidistance,
//! Aubry set, Peierls barrier, weak KAM solutions and subsolution utilities.
//!
//! The intrinsic semidistance `S_a` is the shortest-path distance on a [`LevelGraph`] whose
//! edges carry `σ_a` lengths. A level is subcritical exactly when some sublevel set is empty
//! or the graph has a negative cycle, which drives the bisection for `c`.

mod paths;

use rayon::prelude::*;
use thiserror::Error;

use crate::field::ValueField;
use crate::grid::{BoxDomain, Discretization};
use crate::model::{HamiltonianModel, Support};

pub use paths::{LevelGraph, NegativeCycle, Reweighted, SubcriticalCertificate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ErgodicError {
    #[error("level {level} is subcritical: empty sublevel set at node {node}")]
    Subcritical { node: usize, level: f64 },
    #[error("negative cycle at level {level}")]
    NegativeCycle { level: f64 },
    #[error("bisection bracket [{lo}, {hi}] is invalid: {reason}")]
    BracketInvalid { lo: f64, hi: f64, reason: String },
    #[error("trace incompatible between Aubry nodes {from} and {to} (excess {excess:.3e})")]
    IncompatibleTrace { from: usize, to: usize, excess: f64 },
    #[error("trace has {got} values for {expected} Aubry nodes")]
    TraceLength { expected: usize, got: usize },
    #[error("no room for a constant cap: the required region reaches the box boundary")]
    KTooLarge,
    #[error("the detected Aubry set is empty")]
    EmptyAubry,
}

impl From<SubcriticalCertificate> for ErgodicError {
    fn from(c: SubcriticalCertificate) -> Self {
        ErgodicError::Subcritical { node: c.node, level: c.level }
    }
}

/// `h σ_a(x_i, q_k)` for every `(i, k)` (row-major, `None` on clipped transitions).
pub fn edge_costs(
    model: &HamiltonianModel,
    disc: &Discretization,
    a: f64,
) -> Result<Vec<Option<f64>>, SubcriticalCertificate> {
    let grid = &disc.grid;
    let nq = disc.velocities.len();
    let mut out = Vec::with_capacity(grid.len() * nq);
    for i in 0..grid.len() {
        let x = grid.point(i);
        for k in 0..nq {
            if disc.transition.is_clipped(i, k) {
                out.push(None);
                continue;
            }
            match model.support_function(a, x, disc.velocities.get(k)) {
                Support::Value(s) => out.push(Some(grid.h() * s)),
                Support::EmptySublevel => return Err(SubcriticalCertificate { node: i, level: a }),
            }
        }
    }
    Ok(out)
}

/// Subcriticality verdict at one level.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelVerdict {
    EmptySublevel { node: usize },
    NegativeCycle,
    Supercritical,
}

impl LevelVerdict {
    pub fn is_subcritical(&self) -> bool {
        !matches!(self, LevelVerdict::Supercritical)
    }
}

pub fn classify_level(model: &HamiltonianModel, disc: &Discretization, a: f64) -> LevelVerdict {
    match LevelGraph::build(model, disc, a) {
        Err(cert) => LevelVerdict::EmptySublevel { node: cert.node },
        Ok(g) if g.has_negative_cycle() => LevelVerdict::NegativeCycle,
        Ok(_) => LevelVerdict::Supercritical,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionStep {
    pub level: f64,
    pub verdict: LevelVerdict,
}

/// Bisection result: `c ∈ [lo, hi]`, where `hi` is a level without negative cycles.
#[derive(Debug, Clone)]
pub struct CriticalLevel {
    pub c: f64,
    pub lo: f64,
    pub hi: f64,
    pub trace: Vec<BisectionStep>,
}

impl CriticalLevel {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// True when no subcritical verdict lies above a non-subcritical one in the trace.
    pub fn trace_is_monotone(&self) -> bool {
        let highest_sub = self
            .trace
            .iter()
            .filter(|s| s.verdict.is_subcritical())
            .map(|s| s.level)
            .fold(f64::NEG_INFINITY, f64::max);
        let lowest_super = self
            .trace
            .iter()
            .filter(|s| !s.verdict.is_subcritical())
            .map(|s| s.level)
            .fold(f64::INFINITY, f64::min);
        highest_sub < lowest_super
    }
}

/// Bisection for the critical value on `[max_x min_p H, max_x H(x, 0)]`.
pub fn critical_value(
    model: &HamiltonianModel,
    disc: &Discretization,
    tol: f64,
) -> Result<CriticalLevel, ErgodicError> {
    let grid = &disc.grid;
    let mut a_lo = f64::NEG_INFINITY;
    let mut a_hi = f64::NEG_INFINITY;
    for i in 0..grid.len() {
        let x = grid.point(i);
        a_lo = a_lo.max(model.min_over_p(x));
        a_hi = a_hi.max(model.at_zero(x));
    }
    let mut trace = Vec::new();
    let probe = |a: f64, trace: &mut Vec<BisectionStep>| {
        let verdict = classify_level(model, disc, a);
        let sub = verdict.is_subcritical();
        trace.push(BisectionStep { level: a, verdict });
        sub
    };
    if probe(a_hi, &mut trace) {
        return Err(ErgodicError::BracketInvalid {
            lo: a_lo,
            hi: a_hi,
            reason: "constants are not recognized as subsolutions at the upper endpoint".into(),
        });
    }
    let (mut lo, mut hi) = (a_lo, a_hi);
    if hi - lo > 0.0 && !probe(lo, &mut trace) {
        hi = lo;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if probe(mid, &mut trace) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalLevel { c: 0.5 * (lo + hi), lo, hi, trace })
}

/// `S_a(source, ·)`.
pub fn intrinsic_distance(
    model: &HamiltonianModel,
    disc: &Discretization,
    a: f64,
    source: usize,
) -> Result<ValueField, ErgodicError> {
    let g = LevelGraph::build(model, disc, a)?;
    g.distances_from(source)
        .map(ValueField)
        .map_err(|_| ErgodicError::NegativeCycle { level: a })
}

/// Largest difference quotient `|σ_a(x_i, e) - σ_a(x_j, e)| / h` over axis neighbours and
/// unit velocity directions of the set.
pub fn sigma_lipschitz(model: &HamiltonianModel, disc: &Discretization, a: f64) -> f64 {
    let grid = &disc.grid;
    let vs = &disc.velocities;
    let dirs: Vec<Vec<f64>> = (0..vs.len())
        .filter(|&k| vs.norm(k) > 0.0)
        .map(|k| vs.get(k).iter().map(|v| v / vs.norm(k)).collect())
        .collect();
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut best: f64 = 0.0;
            let x = grid.point(i);
            for j in grid.axis_neighbors(i) {
                if j < i {
                    continue;
                }
                let y = grid.point(j);
                for e in &dirs {
                    if let (Support::Value(s), Support::Value(t)) =
                        (model.support_function(a, x, e), model.support_function(a, y, e))
                    {
                        best = best.max((s - t).abs() / grid.h());
                    }
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// Default Aubry threshold `4 h² Lip(σ_a)`: a cycle through a true Aubry point has two
/// edges of length `O(h)` whose cost density is `O(h)`.
pub fn default_eps_aubry(model: &HamiltonianModel, disc: &Discretization, a: f64) -> f64 {
    let h = disc.grid.h();
    4.0 * h * h * sigma_lipschitz(model, disc, a).max(f64::EPSILON)
}

#[derive(Debug, Clone)]
pub struct AubrySet {
    pub level: f64,
    pub eps: f64,
    pub nodes: Vec<usize>,
    /// Minimal cost of a nontrivial cycle through each node (`+∞` when none exists).
    pub cycle_cost: Vec<f64>,
}

/// Cycle costs `min_{y→j} [cost(y, j) + S_a(j, y)]` on a prepared graph.
pub fn cycle_costs(graph: &LevelGraph) -> Result<Vec<f64>, NegativeCycle> {
    let rw = graph.reweighted()?;
    Ok((0..graph.len())
        .into_par_iter()
        .map(|y| {
            let to_y = rw.distances_to(y);
            graph
                .out_edges(y)
                .iter()
                .map(|&(j, c)| c + to_y[j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

pub fn aubry_set(
    model: &HamiltonianModel,
    disc: &Discretization,
    level: f64,
    eps_aubry: Option<f64>,
) -> Result<AubrySet, ErgodicError> {
    let graph = LevelGraph::build(model, disc, level)?;
    let eps = eps_aubry.unwrap_or_else(|| default_eps_aubry(model, disc, level));
    let cycle_cost = cycle_costs(&graph).map_err(|_| ErgodicError::NegativeCycle { level })?;
    let nodes = (0..cycle_cost.len()).filter(|&y| cycle_cost[y] <= eps).collect();
    Ok(AubrySet { level, eps, nodes, cycle_cost })
}

#[derive(Debug, Clone, Copy)]
pub struct CriticalOptions {
    pub tol: f64,
    pub eps_aubry: Option<f64>,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        Self { tol: 1e-4, eps_aubry: None }
    }
}

/// Critical value, Aubry set and the single-source fields `S_c(z, ·)`, `S_c(·, z)` for
/// every Aubry node `z`, all at the level `c_hi` of the bisection bracket.
#[derive(Debug, Clone)]
pub struct CriticalData {
    pub level: CriticalLevel,
    pub aubry: AubrySet,
    n: usize,
    forward: Vec<Vec<f64>>,
    backward: Vec<Vec<f64>>,
}

impl CriticalData {
    pub fn compute(
        model: &HamiltonianModel,
        disc: &Discretization,
        opts: CriticalOptions,
    ) -> Result<Self, ErgodicError> {
        let level = critical_value(model, disc, opts.tol)?;
        Self::at_level(model, disc, level, opts.eps_aubry)
    }

    pub fn at_level(
        model: &HamiltonianModel,
        disc: &Discretization,
        level: CriticalLevel,
        eps_aubry: Option<f64>,
    ) -> Result<Self, ErgodicError> {
        let a = level.hi;
        let graph = LevelGraph::build(model, disc, a)?;
        let neg = |_| ErgodicError::NegativeCycle { level: a };
        let eps = eps_aubry.unwrap_or_else(|| default_eps_aubry(model, disc, a));
        let cycle_cost = cycle_costs(&graph).map_err(neg)?;
        let nodes: Vec<usize> = (0..cycle_cost.len()).filter(|&y| cycle_cost[y] <= eps).collect();
        if nodes.is_empty() {
            return Err(ErgodicError::EmptyAubry);
        }
        let rw = graph.reweighted().map_err(neg)?;
        let forward = nodes.par_iter().map(|&z| rw.distances_from(z)).collect();
        let backward = nodes.par_iter().map(|&z| rw.distances_to(z)).collect();
        Ok(Self {
            level,
            aubry: AubrySet { level: a, eps, nodes, cycle_cost },
            n: disc.grid.len(),
            forward,
            backward,
        })
    }

    pub fn c(&self) -> f64 {
        self.level.c
    }

    /// Level at which the graph quantities are evaluated.
    pub fn graph_level(&self) -> f64 {
        self.aubry.level
    }

    pub fn eps_aubry(&self) -> f64 {
        self.aubry.eps
    }

    pub fn aubry_nodes(&self) -> &[usize] {
        &self.aubry.nodes
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `S(z, ·)` for the `k`-th Aubry node.
    pub fn from_aubry(&self, k: usize) -> &[f64] {
        &self.forward[k]
    }

    /// `S(·, z)` for the `k`-th Aubry node.
    pub fn to_aubry(&self, k: usize) -> &[f64] {
        &self.backward[k]
    }

    /// `P(x, y) = min_{z ∈ A} S(x, z) + S(z, y)`.
    pub fn peierls_barrier(&self, x: usize, y: usize) -> f64 {
        (0..self.forward.len())
            .map(|k| self.backward[k][x] + self.forward[k][y])
            .fold(f64::INFINITY, f64::min)
    }

    /// `P(·, y)` over all nodes.
    pub fn peierls_to(&self, y: usize) -> Vec<f64> {
        (0..self.n).map(|x| self.peierls_barrier(x, y)).collect()
    }

    /// `P(x, ·)` over all nodes.
    pub fn peierls_from(&self, x: usize) -> Vec<f64> {
        (0..self.n).map(|y| self.peierls_barrier(x, y)).collect()
    }

    /// `S(y, y')` between Aubry nodes (by position in [`Self::aubry_nodes`]).
    pub fn aubry_distance(&self, from: usize, to: usize) -> f64 {
        self.forward[from][self.aubry.nodes[to]]
    }

    /// `v(x) = min_{y ∈ A} [t(y) + S(y, x)]` for a trace `t` on the Aubry nodes.
    pub fn weak_kam_solution(&self, trace: &[f64]) -> Result<ValueField, ErgodicError> {
        let k = self.aubry.nodes.len();
        if trace.len() != k {
            return Err(ErgodicError::TraceLength { expected: k, got: trace.len() });
        }
        let scale = 1.0 + trace.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-9 * scale;
        for to in 0..k {
            for from in 0..k {
                let excess = trace[to] - trace[from] - self.aubry_distance(from, to);
                if excess > tol {
                    return Err(ErgodicError::IncompatibleTrace {
                        from: self.aubry.nodes[from],
                        to: self.aubry.nodes[to],
                        excess,
                    });
                }
            }
        }
        Ok(self.min_formula(trace))
    }

    /// `min_{y ∈ A} [t(y) + S(y, x)]` without the compatibility check.
    pub fn min_formula(&self, trace: &[f64]) -> ValueField {
        ValueField(
            (0..self.n)
                .map(|x| {
                    (0..self.forward.len())
                        .map(|z| trace[z] + self.forward[z][x])
                        .fold(f64::INFINITY, f64::min)
                })
                .collect(),
        )
    }

    /// Restriction of a field to the Aubry nodes, in [`Self::aubry_nodes`] order.
    pub fn trace_of(&self, field: &ValueField) -> Vec<f64> {
        self.aubry.nodes.iter().map(|&z| field[z]).collect()
    }
}

/// Outcome of [`is_subsolution`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubsolutionCheck {
    pub holds: bool,
    /// `max [u(foot) - u(i) - h L(x_i, q) - h a]` over unclipped transitions.
    pub worst_residual: f64,
    /// `(node, velocity index)` attaining the worst residual.
    pub witness: Option<(usize, usize)>,
}

/// Checks `u(x_i + h q) - u(x_i) ≤ h L(x_i, q) + h a + slack` on every unclipped transition.
pub fn is_subsolution(
    u: &ValueField,
    model: &HamiltonianModel,
    disc: &Discretization,
    a: f64,
    slack: f64,
) -> SubsolutionCheck {
    is_subsolution_with(u, disc, slack, |i, k| {
        let grid = &disc.grid;
        model.lagrangian(grid.point(i), disc.velocities.get(k)) + a
    })
}

/// Same check against an arbitrary running cost `Φ(i, k)` in place of `L + a`.
pub fn is_subsolution_with(
    u: &ValueField,
    disc: &Discretization,
    slack: f64,
    phi: impl Fn(usize, usize) -> f64 + Sync,
) -> SubsolutionCheck {
    let grid = &disc.grid;
    let h = grid.h();
    let nq = disc.velocities.len();
    let (worst, witness) = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::NEG_INFINITY, None);
            for k in 0..nq {
                if disc.transition.is_clipped(i, k) {
                    continue;
                }
                let cost = phi(i, k);
                if !cost.is_finite() {
                    continue;
                }
                let foot: f64 = disc.transition.entries(i, k).iter().map(|&(j, w)| w * u[j]).sum();
                let r = foot - u[i] - h * cost;
                if r > best.0 {
                    best = (r, Some((i, k)));
                }
            }
            best
        })
        .reduce(|| (f64::NEG_INFINITY, None), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    SubsolutionCheck { holds: worst <= slack, worst_residual: worst, witness }
}

/// Modifies a subsolution `u` outside a neighbourhood of `K` so that it becomes constant
/// near the box boundary: `w₀ = max{min{φ + b, u}, min_C u}` with `φ(x) = -(ε/2)|x - x₀|`,
/// where `C` is a centered sub-box containing `K` and every node at which
/// `max_{|p| ≤ ε} H ≥ a`, and `b` makes `φ + b > u` on `C`.
///
/// `ε` is taken as the largest value of the sweep `{1, 0.99, …, 0.01}` for which `C` fits
/// strictly inside the box.
pub fn compactify_subsolution(
    u: &ValueField,
    k_box: &BoxDomain,
    model: &HamiltonianModel,
    disc: &Discretization,
    a: f64,
) -> Result<ValueField, ErgodicError> {
    let grid = &disc.grid;
    let domain = grid.domain();
    let center = domain.center();
    let half = domain.half_widths();
    let h = grid.h();
    let dim = grid.dim();
    let mut k_reach = vec![0.0f64; dim];
    for ax in 0..dim {
        k_reach[ax] = (k_box.hi[ax] - center[ax]).abs().max((k_box.lo[ax] - center[ax]).abs()) + h;
    }
    for step in (1..=100).rev() {
        let eps = step as f64 * 0.01;
        let mut reach = k_reach.clone();
        for i in 0..grid.len() {
            let x = grid.point(i);
            if model.max_over_ball(x, eps) >= a {
                for ax in 0..dim {
                    reach[ax] = reach[ax].max((x[ax] - center[ax]).abs() + h);
                }
            }
        }
        if (0..dim).any(|ax| reach[ax] >= half[ax] - 0.5 * h) {
            continue;
        }
        let lo: Vec<f64> = (0..dim).map(|ax| center[ax] - reach[ax]).collect();
        let hi: Vec<f64> = (0..dim).map(|ax| center[ax] + reach[ax]).collect();
        let c_box = BoxDomain::new(lo, hi).map_err(|_| ErgodicError::KTooLarge)?;
        let c_nodes = grid.nodes_in(&c_box);
        let phi = |x: &[f64]| {
            let r: f64 = x.iter().zip(&center).map(|(v, c)| (v - c).powi(2)).sum::<f64>().sqrt();
            -0.5 * eps * r
        };
        let max_u = u.max_over(&c_nodes);
        let min_u = u.min_over(&c_nodes);
        let min_phi = c_nodes.iter().map(|&i| phi(grid.point(i))).fold(f64::INFINITY, f64::min);
        let b = max_u - min_phi + 1e-9 * (1.0 + max_u.abs());
        let w = (0..grid.len())
            .map(|i| (phi(grid.point(i)) + b).min(u[i]).max(min_u))
            .collect();
        return Ok(ValueField(w));
    }
    Err(ErgodicError::KTooLarge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoxDomain;
    use crate::model::Potential;

    fn quad(r: f64, h: f64, q_max: f64, count: usize) -> (HamiltonianModel, Discretization) {
        let m = HamiltonianModel::quadratic(Potential::HalfSquare { scale: 1.0 }, 1);
        let d = Discretization::build(BoxDomain::centered(1, r), h, q_max, count).unwrap();
        (m, d)
    }

    #[test]
    fn edge_cost_examples() {
        let (m, d) = quad(4.0, 0.5, 1.0, 3);
        let costs = edge_costs(&m, &d, 0.0).unwrap();
        let i = d.grid.nearest_node(&[1.0]);
        let nq = d.velocities.len();
        assert!((costs[i * nq + 2].unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(costs[i * nq + 1], Some(0.0));
        let cert = edge_costs(&m, &d, -0.1).unwrap_err();
        assert!(cert.level == -0.1);
        let e = HamiltonianModel::eikonal(Potential::Abs { scale: 1.0 }, 1);
        assert!(edge_costs(&e, &d, -0.1).is_err());
    }

    #[test]
    fn quadratic_distance_and_barrier() {
        let (m, d) = quad(4.0, 0.05, 1.0, 3);
        let crit = CriticalData::compute(&m, &d, CriticalOptions { tol: 1e-3, eps_aubry: None }).unwrap();
        assert!(crit.c().abs() <= 1e-3);
        assert!(crit.level.width() <= 1e-3);
        let zero = d.grid.nearest_node(&[0.0]);
        let one = d.grid.nearest_node(&[1.0]);
        let minus = d.grid.nearest_node(&[-1.0]);
        let s = intrinsic_distance(&m, &d, 0.0, zero).unwrap();
        assert!((s[one] - 0.5).abs() < 0.05);
        assert_eq!(s[zero], 0.0);
        assert!((s[one] - s[minus]).abs() < 1e-12);
        assert!(crit.aubry_nodes().contains(&zero));
        assert!(!crit.aubry_nodes().contains(&one));
        assert!((crit.peierls_barrier(zero, one) - 0.5).abs() < 0.05);
        assert!((crit.peierls_barrier(one, one) - 1.0).abs() < 0.1);
        for &z in crit.aubry_nodes() {
            assert!(crit.peierls_barrier(z, z) <= 2.0 * crit.eps_aubry());
        }
    }

    #[test]
    fn weak_kam_examples() {
        let (m, d) = quad(4.0, 0.05, 1.0, 3);
        let crit = CriticalData::compute(&m, &d, CriticalOptions::default()).unwrap();
        let k = crit.aubry_nodes().len();
        let w = crit.weak_kam_solution(&vec![0.0; k]).unwrap();
        for i in d.grid.nodes_in(&BoxDomain::centered(1, 2.0)) {
            let x = d.grid.point(i)[0];
            assert!((w[i] - 0.5 * x * x).abs() < 0.1, "x = {x}");
        }
        let w3 = crit.weak_kam_solution(&vec![3.0; k]).unwrap();
        assert!(w3.values().iter().zip(w.values()).all(|(a, b)| (a - b - 3.0).abs() < 1e-12));
    }

    #[test]
    fn incompatible_trace_on_two_wells() {
        let m = HamiltonianModel::quadratic(Potential::DoubleWell { separation: 1.0 }, 1);
        let d = Discretization::build(BoxDomain::centered(1, 3.0), 0.1, 1.0, 3).unwrap();
        let crit = CriticalData::compute(&m, &d, CriticalOptions::default()).unwrap();
        let nodes = crit.aubry_nodes();
        let left = d.grid.nearest_node(&[-1.0]);
        let right = d.grid.nearest_node(&[1.0]);
        assert!(nodes.contains(&left) && nodes.contains(&right));
        let diameter = crit.from_aubry(0).iter().fold(0.0f64, |a, v| a.max(*v));
        let trace: Vec<f64> = nodes.iter().map(|&z| if d.grid.point(z)[0] > 0.0 { 10.0 * diameter } else { 0.0 }).collect();
        assert!(matches!(crit.weak_kam_solution(&trace), Err(ErgodicError::IncompatibleTrace { .. })));
    }

    #[test]
    fn subsolution_examples() {
        let (m, d) = quad(4.0, 0.05, 1.0, 3);
        let u = ValueField::from_fn(&d.grid, |x| 0.5 * x[0] * x[0]);
        let h = d.grid.h();
        let chk = is_subsolution(&u, &m, &d, 0.0, h * h);
        assert!(chk.holds, "{chk:?}");
        let v = ValueField::from_fn(&d.grid, |x| 2.0 * x[0] * x[0]);
        assert!(!is_subsolution(&v, &m, &d, 0.0, h * h).holds);
        let b = (0..d.grid.len()).map(|i| m.at_zero(d.grid.point(i))).fold(f64::NEG_INFINITY, f64::max);
        assert!(is_subsolution(&ValueField::constant(d.grid.len(), 7.0), &m, &d, b, 0.0).holds);
    }

    #[test]
    fn compactify_examples() {
        let (m, d) = quad(4.0, 0.05, 1.0, 3);
        let u = ValueField::from_fn(&d.grid, |x| 0.5 * x[0] * x[0]);
        let k = BoxDomain::centered(1, 1.0);
        let w = compactify_subsolution(&u, &k, &m, &d, 0.0).unwrap();
        for i in d.grid.nodes_in(&k) {
            assert_eq!(w[i], u[i]);
        }
        let shell: Vec<usize> = (0..d.grid.len()).filter(|&i| d.grid.domain().in_outer_shell(d.grid.point(i), 0.1)).collect();
        let v0 = w[shell[0]];
        assert!(shell.iter().all(|&i| w[i] == v0));
        let h = d.grid.h();
        assert!(is_subsolution(&w, &m, &d, 0.0, h * h).holds);

        let c = ValueField::constant(d.grid.len(), 2.0);
        let wc = compactify_subsolution(&c, &k, &m, &d, 0.0).unwrap();
        assert!(wc.values().iter().all(|&v| v == 2.0));

        let whole = d.grid.domain().clone();
        assert_eq!(compactify_subsolution(&u, &whole, &m, &d, 0.0), Err(ErgodicError::KTooLarge));
    }

    #[test]
    fn shifted_model_critical_value() {
        let m = HamiltonianModel::eikonal(Potential::Abs { scale: 1.0 }, 1).with_shift(0.3);
        let d = Discretization::build(BoxDomain::centered(1, 4.0), 0.05, 1.0, 3).unwrap();
        let lvl = critical_value(&m, &d, 1e-3).unwrap();
        assert!((lvl.c + 0.3).abs() <= 1e-3, "{}", lvl.c);
        assert!(lvl.trace_is_monotone());
    }
}
