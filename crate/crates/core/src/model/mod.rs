//! Hamiltonians, their Fenchel Lagrangians and support functions.
//!
//! Two closed-form families are built in, `H = |p| - f(x)` and `H = |p|²/2 - f(x)`, plus a
//! sampled family where `H(x_j, ·)` is tabulated on a momentum grid for every node `x_j` of a
//! sample grid. Every model carries a normalization shift `c₀` (subtracted from `H`) and,
//! optionally, the superlinear modification `H + (0 ∨ (H - b))²`.

mod sampled;

pub use sampled::{MomentumGrid, SampledError, SampledTable};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BoxDomain, Grid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("Lagrangian is not finite at x = {x:?}, q = {q:?}; superlinearize the Hamiltonian first")]
    NonCoercive { x: Vec<f64>, q: Vec<f64> },
    #[error("(A3) violated: max of H(x, 0) = {b} is attained on the outer shell at {at:?}")]
    A3Violated { b: f64, at: Vec<f64> },
    #[error("model dimension {model} does not match point dimension {point}")]
    DimensionMismatch { model: usize, point: usize },
}

/// Closed-form potentials `f`.
#[derive(Debug, Clone)]
pub enum Potential {
    /// `scale * |x|`
    Abs { scale: f64 },
    /// `scale * |x|² / 2`
    HalfSquare { scale: f64 },
    /// `min(|x - a|², |x + a|²) / 2` with `a = separation * e_1`: zeros at `±a`.
    DoubleWell { separation: f64 },
    /// `1 / (1 + |x|²)`; its infimum is reached only at infinity.
    Lorentzian,
    /// Multilinear interpolation of node values on a grid.
    Tabulated { grid: Grid, values: Vec<f64> },
}

impl Potential {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        match self {
            Potential::Abs { scale } => scale * norm2.sqrt(),
            Potential::HalfSquare { scale } => 0.5 * scale * norm2,
            Potential::DoubleWell { separation } => {
                let d_plus: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(a, v)| if a == 0 { (v - separation).powi(2) } else { v * v })
                    .sum();
                let d_minus: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(a, v)| if a == 0 { (v + separation).powi(2) } else { v * v })
                    .sum();
                0.5 * d_plus.min(d_minus)
            }
            Potential::Lorentzian => 1.0 / (1.0 + norm2),
            Potential::Tabulated { grid, values } => grid.interpolate(values, x),
        }
    }

    /// Registry lookup by name.
    pub fn by_name(name: &str, scale: f64) -> Option<Self> {
        match name {
            "abs" => Some(Potential::Abs { scale }),
            "half_square" => Some(Potential::HalfSquare { scale }),
            "double_well" => Some(Potential::DoubleWell { separation: scale }),
            "lorentzian" => Some(Potential::Lorentzian),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    /// `H = |p| - f(x)`
    EikonalMinusPotential,
    /// `H = |p|²/2 - f(x)`
    QuadraticMinusPotential,
    /// `H` tabulated on a momentum grid per node.
    Sampled(Box<SampledTable>),
}

/// Outcome of a support-function evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Value(f64),
    /// `{H(x, ·) ≤ a}` is empty, which certifies `a < c`.
    EmptySublevel,
}

impl Support {
    pub fn value(self) -> Option<f64> {
        match self {
            Support::Value(v) => Some(v),
            Support::EmptySublevel => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HamiltonianModel {
    family: Family,
    potential: Potential,
    dim: usize,
    normalization_shift: f64,
    superlinear_b: Option<f64>,
}

#[derive(Clone, Copy)]
enum RadialKind {
    Eikonal,
    Quadratic,
}

/// Closed-form families as functions of `s = |p|`: `H(s) = y + ((y - b)⁺)²` with
/// `y = g(s) - k`, `k = f(x) + c₀`.
struct Radial {
    kind: RadialKind,
    k: f64,
    b: Option<f64>,
}

impl Radial {
    fn g(&self, s: f64) -> f64 {
        match self.kind {
            RadialKind::Eikonal => s,
            RadialKind::Quadratic => 0.5 * s * s,
        }
    }

    fn h(&self, s: f64) -> f64 {
        let y = self.g(s) - self.k;
        match self.b {
            Some(b) => y + (y - b).max(0.0).powi(2),
            None => y,
        }
    }

    /// `sup_{s ≥ 0} s r - H(s)`; `None` when unbounded.
    fn lagrangian(&self, r: f64) -> Option<f64> {
        let k = self.k;
        match (self.kind, self.b) {
            (RadialKind::Eikonal, None) => (r <= 1.0 + 1e-12).then_some(k),
            (RadialKind::Quadratic, None) => Some(0.5 * r * r + k),
            (RadialKind::Eikonal, Some(b)) => {
                let s = if r <= 1.0 { 0.0 } else { (k + b + 0.5 * (r - 1.0)).max(0.0) };
                Some(s * r - self.h(s))
            }
            (RadialKind::Quadratic, Some(b)) => {
                let kb = k + b;
                let s = if 0.5 * r * r <= kb {
                    r
                } else {
                    // φ'(s) = r - s - 2s (s²/2 - k - b)⁺ is decreasing with φ'(0) = r ≥ 0.
                    let dphi = |s: f64| r - s - 2.0 * s * (0.5 * s * s - kb).max(0.0);
                    let (mut lo, mut hi) = (0.0, r);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if dphi(mid) > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                        if hi - lo <= 1e-16 * r.max(1.0) {
                            break;
                        }
                    }
                    0.5 * (lo + hi)
                };
                Some(s * r - self.h(s))
            }
        }
    }

    /// `max{s : H(s) ≤ a}`, or `None` for an empty sublevel set.
    fn sublevel_radius(&self, a: f64) -> Option<f64> {
        if self.h(0.0) > a {
            return None;
        }
        let y = match self.b {
            Some(b) if a > b => b + 0.5 * (-1.0 + (1.0 + 4.0 * (a - b)).sqrt()),
            _ => a,
        };
        let t = (y + self.k).max(0.0);
        Some(match self.kind {
            RadialKind::Eikonal => t,
            RadialKind::Quadratic => (2.0 * t).sqrt(),
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl HamiltonianModel {
    pub fn eikonal(potential: Potential, dim: usize) -> Self {
        Self::closed(Family::EikonalMinusPotential, potential, dim)
    }

    pub fn quadratic(potential: Potential, dim: usize) -> Self {
        Self::closed(Family::QuadraticMinusPotential, potential, dim)
    }

    fn closed(family: Family, potential: Potential, dim: usize) -> Self {
        Self { family, potential, dim, normalization_shift: 0.0, superlinear_b: None }
    }

    pub fn sampled(table: SampledTable) -> Self {
        let dim = table.dim();
        Self {
            family: Family::Sampled(Box::new(table)),
            potential: Potential::Abs { scale: 0.0 },
            dim,
            normalization_shift: 0.0,
            superlinear_b: None,
        }
    }

    /// Returns the model with `c₀` replaced by `shift`.
    pub fn with_shift(mut self, shift: f64) -> Self {
        self.normalization_shift = shift;
        self
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normalization_shift(&self) -> f64 {
        self.normalization_shift
    }

    pub fn is_superlinearized(&self) -> bool {
        self.superlinear_b.is_some()
    }

    pub fn superlinear_level(&self) -> Option<f64> {
        self.superlinear_b
    }

    fn radial(&self, x: &[f64]) -> Option<Radial> {
        let kind = match self.family {
            Family::EikonalMinusPotential => RadialKind::Eikonal,
            Family::QuadraticMinusPotential => RadialKind::Quadratic,
            Family::Sampled(_) => return None,
        };
        Some(Radial { kind, k: self.potential.eval(x) + self.normalization_shift, b: self.superlinear_b })
    }

    fn lift(&self, base: f64) -> f64 {
        let y = base - self.normalization_shift;
        match self.superlinear_b {
            Some(b) => y + (y - b).max(0.0).powi(2),
            None => y,
        }
    }

    /// `H(x, p)`, including the normalization shift and the superlinear term when present.
    /// Sampled models return `+∞` outside their momentum box.
    pub fn hamiltonian(&self, x: &[f64], p: &[f64]) -> f64 {
        match &self.family {
            Family::Sampled(t) => self.lift(t.eval(x, p)),
            _ => self.radial(x).map(|r| r.h(norm(p))).unwrap_or(f64::NAN),
        }
    }

    /// `H(x, 0)`.
    pub fn at_zero(&self, x: &[f64]) -> f64 {
        self.hamiltonian(x, &vec![0.0; self.dim])
    }

    /// `min_p H(x, p)`.
    pub fn min_over_p(&self, x: &[f64]) -> f64 {
        match &self.family {
            Family::Sampled(t) => self.lift(t.min_over_p(x)),
            _ => self.at_zero(x),
        }
    }

    /// `max_{|p| ≤ ε} H(x, p)`.
    pub fn max_over_ball(&self, x: &[f64], eps: f64) -> f64 {
        match &self.family {
            Family::Sampled(t) => self.lift(t.max_over_ball(x, eps)),
            _ => self.radial(x).map(|r| r.h(eps)).unwrap_or(f64::NAN),
        }
    }

    /// `L(x, q) = sup_p p·q - H(x, p)`.
    pub fn fenchel_transform(&self, x: &[f64], q: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.dim || q.len() != self.dim {
            return Err(ModelError::DimensionMismatch { model: self.dim, point: x.len() });
        }
        let value = match &self.family {
            Family::Sampled(t) => {
                let b = self.superlinear_b;
                let c0 = self.normalization_shift;
                t.conjugate(x, q, |v| {
                    let y = v - c0;
                    match b {
                        Some(b) => y + (y - b).max(0.0).powi(2),
                        None => y,
                    }
                })
            }
            _ => self.radial(x).and_then(|r| r.lagrangian(norm(q))),
        };
        value.ok_or_else(|| ModelError::NonCoercive { x: x.to_vec(), q: q.to_vec() })
    }

    /// `L(x, q)`, with `+∞` where the transform is not finite.
    pub fn lagrangian(&self, x: &[f64], q: &[f64]) -> f64 {
        self.fenchel_transform(x, q).unwrap_or(f64::INFINITY)
    }

    /// `σ_a(x, q) = max{p·q : H(x, p) ≤ a}`.
    pub fn support_function(&self, a: f64, x: &[f64], q: &[f64]) -> Support {
        match &self.family {
            Family::Sampled(t) => {
                let b = self.superlinear_b;
                let c0 = self.normalization_shift;
                match t.support(x, q, a, |v| {
                    let y = v - c0;
                    match b {
                        Some(b) => y + (y - b).max(0.0).powi(2),
                        None => y,
                    }
                }) {
                    Some(v) => Support::Value(v),
                    None => Support::EmptySublevel,
                }
            }
            _ => match self.radial(x).and_then(|r| r.sublevel_radius(a)) {
                Some(radius) => Support::Value(radius * norm(q)),
                None => Support::EmptySublevel,
            },
        }
    }

    /// `H + (0 ∨ (H - b))²` with `b = max_x H(x, 0)` over the grid nodes.
    ///
    /// Sublevel sets `{H ≤ a}` with `a ≤ b` are unchanged, so subsolutions of the critical
    /// equation and the maximal discounted solutions are the same for both Hamiltonians.
    pub fn superlinearize(&self, grid: &Grid) -> Result<Self, ModelError> {
        let mut base = self.clone();
        base.superlinear_b = None;
        let values: Vec<f64> = (0..grid.len()).map(|i| base.at_zero(grid.point(i))).collect();
        let b = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tie = 1e-12 * (1.0 + b.abs());
        let maximizers: Vec<usize> = (0..grid.len()).filter(|&i| values[i] >= b - tie).collect();
        let interior = maximizers
            .iter()
            .find(|&&i| !grid.domain().in_outer_shell(grid.point(i), 0.1));
        if interior.is_none() {
            return Err(ModelError::A3Violated { b, at: grid.point(maximizers[0]).to_vec() });
        }
        base.superlinear_b = Some(b);
        Ok(base)
    }

    /// Numeric witnesses for (A1)-(A3) on a probe lattice of the box.
    pub fn validate_assumptions(&self, domain: &BoxDomain, probes_per_axis: usize) -> AssumptionReport {
        let probes = domain.lattice(probes_per_axis);
        let dim = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);

        // (A1): finite values on a momentum probe set.
        let p_radius = self.momentum_probe_radius();
        let mut a1 = Verdict::pass("H finite at all probe points");
        'outer: for x in &probes {
            for p in axis_probes(dim, p_radius) {
                let v = self.hamiltonian(x, &p);
                if !v.is_finite() {
                    a1 = Verdict::fail(format!("H({x:?}, {p:?}) = {v}"), x.clone());
                    break 'outer;
                }
            }
        }

        // (A2): midpoint convexity on random triples and a coercivity radius.
        let convex_tol = self.convexity_tolerance();
        let mut worst_midpoint = f64::NEG_INFINITY;
        let mut a2 = Verdict::pass("midpoint convexity and coercivity hold on probes");
        for x in &probes {
            for _ in 0..8 {
                let p1: Vec<f64> = (0..dim).map(|_| rng.gen_range(-p_radius..p_radius)).collect();
                let p2: Vec<f64> = (0..dim).map(|_| rng.gen_range(-p_radius..p_radius)).collect();
                let mid: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| 0.5 * (a + b)).collect();
                let h1 = self.hamiltonian(x, &p1);
                let h2 = self.hamiltonian(x, &p2);
                let hm = self.hamiltonian(x, &mid);
                let excess = hm - 0.5 * (h1 + h2);
                worst_midpoint = worst_midpoint.max(excess);
                if excess > convex_tol * (1.0 + hm.abs()) && a2.passed {
                    a2 = Verdict::fail(format!("midpoint convexity violated by {excess:e}"), x.clone());
                }
            }
        }
        let mut coercivity_radius: f64 = 0.0;
        for x in &probes {
            match self.coercivity_radius(x, p_radius) {
                Some(r) => coercivity_radius = coercivity_radius.max(r),
                None if a2.passed => {
                    a2 = Verdict::fail("H(x, p) < H(x, 0) + 1 on the whole probe radius", x.clone());
                }
                None => {}
            }
        }

        // (A3)
        let mins: Vec<f64> = probes.iter().map(|x| self.min_over_p(x)).collect();
        let rhs = mins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tie = 1e-12 * (1.0 + rhs.abs());
        let maximizers: Vec<&Vec<f64>> =
            probes.iter().zip(&mins).filter(|(_, v)| **v >= rhs - tie).map(|(x, _)| x).collect();
        let rhs_at = maximizers
            .iter()
            .find(|x| !domain.in_outer_shell(x, 0.1))
            .unwrap_or(&maximizers[0])
            .to_vec();
        let shell: Vec<&Vec<f64>> = probes.iter().filter(|x| domain.in_outer_shell(x, 0.1)).collect();
        let margin = 1e-9 * (1.0 + rhs.abs());
        let lhs_at = |eps: f64| -> (f64, Vec<f64>) {
            let mut best = (f64::NEG_INFINITY, Vec::new());
            for x in &shell {
                let v = self.max_over_ball(x, eps);
                if v > best.0 {
                    best = (v, (*x).clone());
                }
            }
            best
        };
        let localized = !domain.in_outer_shell(&rhs_at, 0.1);
        let sweep: Vec<f64> = (1..=100).map(|k| k as f64 * 0.01).collect();
        let best_margin = rhs - lhs_at(sweep[0]).0;
        let mut eps_used = None;
        for &eps in &sweep {
            let (lhs, _) = lhs_at(eps);
            if lhs < rhs - margin {
                eps_used = Some(eps);
            } else {
                break;
            }
        }
        let epsilon_used = eps_used.unwrap_or(sweep[0]);
        let (a3_lhs, lhs_witness) = lhs_at(epsilon_used);
        let a3 = if !localized {
            Verdict::fail(
                format!("max over the box of min_p H = {rhs} is attained on the outer shell"),
                rhs_at.clone(),
            )
        } else if eps_used.is_none() {
            Verdict::fail(
                format!("shell maximum {a3_lhs} is not below {rhs} for any ε in the sweep"),
                lhs_witness,
            )
        } else {
            Verdict::pass(format!("ε = {epsilon_used}, margin {}", rhs - a3_lhs))
        };

        AssumptionReport {
            a1,
            a2,
            a3,
            a3_lhs,
            a3_rhs: rhs,
            a3_rhs_at: rhs_at,
            epsilon_used,
            best_margin,
            coercivity_radius,
            worst_midpoint_excess: worst_midpoint,
        }
    }

    /// Concrete `δ₀`, `M₀` and core box `K` with `L ≥ δ₀|q|` and `L ≥ M₀ > 0` outside `K`.
    pub fn lagrangian_bounds(&self, domain: &BoxDomain, probes_per_axis: usize) -> LagrangianEval {
        let probes = domain.lattice(probes_per_axis);
        let velocity_bound = match (&self.family, self.superlinear_b) {
            (Family::EikonalMinusPotential, None) => Some(1.0),
            _ => None,
        };
        for k in 1..=20 {
            let core = domain.scaled(k as f64 * 0.05);
            let outside: Vec<&Vec<f64>> = probes.iter().filter(|x| !strictly_inside(&core, x)).collect();
            if outside.is_empty() {
                break;
            }
            // inf_q L(x, q) = -H(x, 0)
            let m0 = outside.iter().map(|x| -self.at_zero(x)).fold(f64::INFINITY, f64::min);
            if m0 > 0.0 {
                let mut delta0 = 0.0;
                for j in 1..=100 {
                    let eps = j as f64 * 0.01;
                    if outside.iter().all(|x| self.max_over_ball(x, eps) <= 0.0) {
                        delta0 = eps;
                    } else {
                        break;
                    }
                }
                return LagrangianEval {
                    superlinearized: self.is_superlinearized(),
                    velocity_bound,
                    delta0,
                    m0,
                    core: Some(core),
                };
            }
        }
        LagrangianEval {
            superlinearized: self.is_superlinearized(),
            velocity_bound,
            delta0: 0.0,
            m0: 0.0,
            core: None,
        }
    }

    fn momentum_probe_radius(&self) -> f64 {
        match &self.family {
            Family::Sampled(t) => t.momentum().inner_radius(),
            _ => 4.0,
        }
    }

    fn convexity_tolerance(&self) -> f64 {
        match &self.family {
            Family::Sampled(t) => 1e-9 + t.interpolation_tolerance(),
            _ => 1e-12,
        }
    }

    fn coercivity_radius(&self, x: &[f64], limit: f64) -> Option<f64> {
        let h0 = self.at_zero(x);
        let dirs = axis_probes(self.dim, 1.0);
        let steps = 400;
        let limit = match &self.family {
            Family::Sampled(_) => limit,
            _ => 100.0,
        };
        let mut radius: f64 = 0.0;
        for d in dirs {
            let mut found = None;
            for j in 1..=steps {
                let s = limit * j as f64 / steps as f64;
                let p: Vec<f64> = d.iter().map(|v| v * s).collect();
                if self.hamiltonian(x, &p) >= h0 + 1.0 {
                    found = Some(s);
                    break;
                }
            }
            match found {
                Some(s) => radius = radius.max(s),
                // Sampled models are +∞ beyond their momentum box.
                None if matches!(self.family, Family::Sampled(_)) => radius = radius.max(limit),
                None => return None,
            }
        }
        Some(radius)
    }
}

fn strictly_inside(b: &BoxDomain, x: &[f64]) -> bool {
    x.iter()
        .zip(b.lo.iter().zip(&b.hi))
        .all(|(v, (l, h))| *v > *l && *v < *h)
}

/// `±r e_i` and, in dimension ≥ 2, the normalized diagonals `±r (±1, …)/√N`.
fn axis_probes(dim: usize, r: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for a in 0..dim {
        for s in [-1.0, 1.0] {
            let mut p = vec![0.0; dim];
            p[a] = s * r;
            out.push(p);
        }
    }
    if dim >= 2 {
        let c = r / (dim as f64).sqrt();
        for mask in 0..(1usize << dim) {
            out.push((0..dim).map(|a| if mask >> a & 1 == 1 { c } else { -c }).collect());
        }
    }
    out
}

/// Pass/fail with a witness point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    pub detail: String,
    pub witness: Option<Vec<f64>>,
}

impl Verdict {
    fn pass(detail: impl Into<String>) -> Self {
        Self { passed: true, detail: detail.into(), witness: None }
    }

    fn fail(detail: impl Into<String>, witness: Vec<f64>) -> Self {
        Self { passed: false, detail: detail.into(), witness: Some(witness) }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub a1: Verdict,
    pub a2: Verdict,
    pub a3: Verdict,
    /// Max of `max_{|p| ≤ ε} H` over the outer 10% shell, at `epsilon_used`.
    pub a3_lhs: f64,
    /// Max over the box of `min_p H`.
    pub a3_rhs: f64,
    pub a3_rhs_at: Vec<f64>,
    /// Largest ε of the sweep that passes (the smallest one when none does).
    pub epsilon_used: f64,
    /// `a3_rhs - a3_lhs` at the smallest ε of the sweep.
    pub best_margin: f64,
    pub coercivity_radius: f64,
    pub worst_midpoint_excess: f64,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.a1.passed && self.a2.passed && self.a3.passed
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagrangianEval {
    pub superlinearized: bool,
    /// Radius of the velocity ball where `L` is finite (`None`: everywhere).
    pub velocity_bound: Option<f64>,
    pub delta0: f64,
    pub m0: f64,
    /// Smallest centered sub-box outside which `min_q L > 0`.
    pub core: Option<BoxDomain>,
}

/// `L(x, q) + H(x, p) - p·q`, nonnegative by Fenchel–Young.
pub fn fenchel_young_gap(model: &HamiltonianModel, x: &[f64], p: &[f64], q: &[f64]) -> f64 {
    model.lagrangian(x, q) + model.hamiltonian(x, p) - dot(p, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quad() -> HamiltonianModel {
        HamiltonianModel::quadratic(Potential::HalfSquare { scale: 1.0 }, 1)
    }

    fn eik(p: Potential) -> HamiltonianModel {
        HamiltonianModel::eikonal(p, 1)
    }

    fn line(r: f64, h: f64) -> Grid {
        Grid::new(BoxDomain::centered(1, r), h).unwrap()
    }

    #[test]
    fn quadratic_transform() {
        assert_abs_diff_eq!(quad().fenchel_transform(&[0.5], &[1.0]).unwrap(), 0.625, epsilon = 1e-15);
    }

    #[test]
    fn transform_at_zero_velocity_on_argmin() {
        assert_eq!(quad().fenchel_transform(&[0.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(eik(Potential::Abs { scale: 1.0 }).fenchel_transform(&[0.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn eikonal_needs_superlinearization() {
        let m = eik(Potential::Abs { scale: 1.0 });
        assert!(matches!(m.fenchel_transform(&[0.0], &[1.5]), Err(ModelError::NonCoercive { .. })));
        let s = m.superlinearize(&line(4.0, 0.5)).unwrap();
        assert_eq!(s.superlinear_level(), Some(0.0));
        assert_abs_diff_eq!(s.fenchel_transform(&[0.0], &[1.0]).unwrap(), 0.0, epsilon = 1e-15);
        // H̃(0, p) = |p| + p²
        for p in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let p: f64 = p;
            assert_abs_diff_eq!(s.hamiltonian(&[0.0], &[p]), p.abs() + p * p, epsilon = 1e-14);
        }
    }

    #[test]
    fn superlinear_eikonal_transform_matches_brute_force() {
        let s = eik(Potential::Abs { scale: 1.0 }).superlinearize(&line(4.0, 0.5)).unwrap();
        for &x in &[0.0, 0.7, -2.0] {
            for &q in &[0.0, 0.5, 1.0, 1.3, -1.5, 2.5] {
                let brute = (0..=200_000)
                    .map(|j| -10.0 + 20.0 * j as f64 / 200_000.0)
                    .map(|p: f64| p * q - s.hamiltonian(&[x], &[p]))
                    .fold(f64::NEG_INFINITY, f64::max);
                let l = s.fenchel_transform(&[x], &[q]).unwrap();
                assert!(l >= brute - 1e-12 && l - brute < 1e-6, "x={x} q={q} l={l} brute={brute}");
            }
        }
    }

    #[test]
    fn superlinear_quadratic_transform_matches_brute_force() {
        let s = quad().with_shift(0.2).superlinearize(&line(2.0, 0.5)).unwrap();
        for &x in &[0.0, 0.4, -1.5] {
            for &q in &[0.0, 0.3, 1.0, -2.0, 4.0] {
                let brute = (0..=200_000)
                    .map(|j| -10.0 + 20.0 * j as f64 / 200_000.0)
                    .map(|p: f64| p * q - s.hamiltonian(&[x], &[p]))
                    .fold(f64::NEG_INFINITY, f64::max);
                let l = s.fenchel_transform(&[x], &[q]).unwrap();
                assert!(l >= brute - 1e-12 && l - brute < 1e-6, "x={x} q={q} l={l} brute={brute}");
            }
        }
    }

    #[test]
    fn superlinearize_keeps_zero_sublevel() {
        let m = quad();
        let s = m.superlinearize(&line(2.0, 0.1)).unwrap();
        for i in 0..=40 {
            for j in 0..=80 {
                let x = -2.0 + 0.1 * i as f64;
                let p = -4.0 + 0.1 * j as f64;
                assert_eq!(m.hamiltonian(&[x], &[p]) <= 0.0, s.hamiltonian(&[x], &[p]) <= 0.0);
            }
        }
    }

    #[test]
    fn lorentzian_violates_a3() {
        let m = eik(Potential::Lorentzian);
        assert!(matches!(m.superlinearize(&line(4.0, 0.1)), Err(ModelError::A3Violated { .. })));
        let r = m.validate_assumptions(&BoxDomain::centered(1, 4.0), 81);
        assert!(!r.a3.passed);
    }

    #[test]
    fn support_function_examples() {
        assert_eq!(quad().support_function(0.0, &[1.0], &[1.0]), Support::Value(1.0));
        assert_eq!(quad().support_function(0.0, &[1.0], &[0.0]), Support::Value(0.0));
        assert_eq!(
            eik(Potential::Abs { scale: 1.0 }).support_function(-0.1, &[0.0], &[1.0]),
            Support::EmptySublevel
        );
        assert_eq!(
            eik(Potential::Abs { scale: 1.0 }).support_function(0.5, &[1.0], &[-2.0]),
            Support::Value(3.0)
        );
    }

    #[test]
    fn superlinear_support_above_b() {
        let s = quad().superlinearize(&line(2.0, 0.5)).unwrap();
        for &a in &[0.0, 0.3, 2.0] {
            let Support::Value(sig) = s.support_function(a, &[1.0], &[1.0]) else { panic!() };
            assert_abs_diff_eq!(s.hamiltonian(&[1.0], &[sig]), a, epsilon = 1e-12);
        }
    }

    #[test]
    fn validate_builtins() {
        let b = BoxDomain::centered(1, 4.0);
        let r = eik(Potential::Abs { scale: 1.0 }).validate_assumptions(&b, 81);
        assert!(r.all_passed(), "{r:?}");
        assert_eq!(r.a3_rhs, 0.0);
        assert!(r.a3_lhs <= r.epsilon_used - 3.6 + 1e-12);
        let r = quad().validate_assumptions(&b, 81);
        assert!(r.all_passed(), "{r:?}");
        assert_eq!(r.a3_rhs, 0.0);
    }

    #[test]
    fn lagrangian_bounds_hold_outside_core() {
        let b = BoxDomain::centered(1, 4.0);
        let m = quad();
        let lb = m.lagrangian_bounds(&b, 81);
        let core = lb.core.clone().unwrap();
        assert!(lb.m0 > 0.0 && lb.delta0 > 0.0);
        for x in b.lattice(81) {
            if strictly_inside(&core, &x) {
                continue;
            }
            for q in [-2.0, -0.5, 0.0, 0.3, 1.7] {
                let l = m.lagrangian(&x, &[q]);
                assert!(l >= lb.delta0 * q.abs() - 1e-12);
                assert!(l >= lb.m0 - 1e-12);
            }
        }
    }
}
