//! Vanishing-discount limit: the selected weak KAM solution `w`, the Mather set, the
//! uniqueness-set test and the study driver comparing `u_λ` with `w` along a schedule.
//!
//! `w` is computed two ways. The Peierls formula minimizes `⟨μ, P(·, x)⟩` over the Mather
//! polytope for each node `x`. The maximal-subsolution formula takes the largest Aubry
//! trace `t` whose field `v_t = min_y [t(y) + S(y, ·)]` has `⟨μ, v_t⟩ ≤ 0` for the sampled
//! Mather measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::discounted::{solve_discounted, DiscountedError, DiscountedOptions};
use crate::ergodic::{CriticalData, CriticalOptions, ErgodicError};
use crate::field::ValueField;
use crate::grid::{BoxDomain, Discretization, Grid};
use crate::measures::{
    build_discounted_lp, build_ergodic_lp, closedness_residual, lp_solve, transport_distance,
    DiscreteMeasure, MatherPolytope, MeasureError, MeasureKind,
};
use crate::model::HamiltonianModel;
use crate::simplex::{LinearProgram, LpError, SimplexOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error(transparent)]
    Ergodic(#[from] ErgodicError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Discounted(#[from] DiscountedError),
    #[error("no Mather measures supplied")]
    NoMeasures,
    #[error("trace program unbounded at Aubry node {0}")]
    UnboundedTrace(usize),
    #[error("discount schedule is empty")]
    EmptySchedule,
    #[error("discount schedule must be strictly decreasing and positive")]
    ScheduleNotDecreasing,
    #[error("field is not a weak KAM solution (reconstruction gap {gap:.3e} at node {node})")]
    NotWeakKam { gap: f64, node: usize },
}

impl From<LpError> for LimitError {
    fn from(e: LpError) -> Self {
        LimitError::Measure(e.into())
    }
}

/// `w(x) = min{⟨μ, P(·, x)⟩ : μ Mather}` at each query node.
pub fn selected_solution_enric1(
    critical: &CriticalData,
    polytope: &MatherPolytope,
    queries: &[usize],
    opts: SimplexOptions,
) -> Result<Vec<f64>, LimitError> {
    let mut solver = polytope.solver(opts)?;
    let mut out = Vec::with_capacity(queries.len());
    for &x in queries {
        let sol = solver.minimize(|i, _| critical.peierls_barrier(i, x))?;
        out.push(sol.objective);
    }
    Ok(out)
}

/// [`selected_solution_enric1`] on every node, in parallel chunks with one warm-started
/// solver per chunk.
pub fn enric1_field(
    critical: &CriticalData,
    polytope: &MatherPolytope,
    opts: SimplexOptions,
) -> Result<ValueField, LimitError> {
    let n = critical.len();
    let chunk = n.div_ceil(rayon::current_num_threads().max(1)).max(1);
    let nodes: Vec<usize> = (0..n).collect();
    let parts: Vec<Vec<f64>> = nodes
        .par_chunks(chunk)
        .map(|c| selected_solution_enric1(critical, polytope, c, opts.clone()))
        .collect::<Result<_, _>>()?;
    Ok(ValueField(parts.concat()))
}

/// Aubry trace of the maximal subsolution with `⟨μ, v⟩ ≤ 0` for every supplied measure.
///
/// The trace is computed node by node: `t*(y) = max t(y)` subject to the compatibility
/// constraints `t(a) - t(b) ≤ S(b, a)` and, for each measure, the linear bound
/// `Σ_x μ(x) [t(a(x)) + S(a(x), x)] ≤ 0`, where `a(x)` is the Aubry node nearest to `x`.
/// The bound is exact on Aubry nodes and conservative elsewhere.
pub fn deflim_trace(
    critical: &CriticalData,
    grid: &Grid,
    measures: &[DiscreteMeasure],
) -> Result<Vec<f64>, LimitError> {
    if measures.is_empty() {
        return Err(LimitError::NoMeasures);
    }
    let aubry = critical.aubry_nodes();
    let k = aubry.len();
    let nearest = |x: usize| -> usize {
        let p = grid.point(x);
        (0..k)
            .min_by(|&a, &b| {
                let da: f64 = grid.point(aubry[a]).iter().zip(p).map(|(u, v)| (u - v).powi(2)).sum();
                let db: f64 = grid.point(aubry[b]).iter().zip(p).map(|(u, v)| (u - v).powi(2)).sum();
                da.total_cmp(&db)
            })
            .expect("nonempty Aubry set")
    };
    // Mass rows: Σ_a m(a) t(a) ≤ -Σ_x μ(x) S(a(x), x).
    let mut mass_rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(measures.len());
    for mu in measures {
        let mut coef = vec![0.0; k];
        let mut rhs = 0.0;
        for &(x, _, m) in mu.entries() {
            let a = nearest(x);
            coef[a] += m;
            rhs -= m * critical.from_aubry(a)[x];
        }
        mass_rows.push((coef, rhs));
    }
    let pairs: Vec<(usize, usize)> =
        (0..k).flat_map(|a| (0..k).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    let rows = pairs.len() + mass_rows.len();
    let mut lp = LinearProgram::new(rows);
    // Columns: t⁺ (0..k), t⁻ (k..2k), then one slack per row.
    let mut plus: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    for (r, &(a, b)) in pairs.iter().enumerate() {
        plus[a].push((r, 1.0));
        plus[b].push((r, -1.0));
        lp.set_rhs(r, critical.aubry_distance(b, a));
    }
    for (s, (coef, rhs)) in mass_rows.iter().enumerate() {
        let r = pairs.len() + s;
        for a in 0..k {
            if coef[a] != 0.0 {
                plus[a].push((r, coef[a]));
            }
        }
        lp.set_rhs(r, *rhs);
    }
    for col in &plus {
        lp.add_column(col.clone(), 0.0);
    }
    for col in &plus {
        lp.add_column(col.iter().map(|&(r, v)| (r, -v)).collect(), 0.0);
    }
    for r in 0..rows {
        lp.add_column(vec![(r, 1.0)], 0.0);
    }
    let n_cols = lp.cols();
    let (mut simplex, _) = crate::simplex::Simplex::solve(&lp, SimplexOptions::default())?;
    let mut trace = Vec::with_capacity(k);
    for y in 0..k {
        let mut cost = vec![0.0; n_cols];
        cost[y] = -1.0;
        cost[k + y] = 1.0;
        let sol = match simplex.reoptimize(&cost) {
            Ok(s) => s,
            Err(LpError::Unbounded { .. }) => return Err(LimitError::UnboundedTrace(aubry[y])),
            Err(e) => return Err(e.into()),
        };
        trace.push(-sol.objective);
    }
    Ok(trace)
}

/// `w = v_{t*}` for the trace of [`deflim_trace`].
pub fn selected_solution_deflim(
    critical: &CriticalData,
    grid: &Grid,
    measures: &[DiscreteMeasure],
) -> Result<ValueField, LimitError> {
    let trace = deflim_trace(critical, grid, measures)?;
    Ok(critical.min_formula(&trace))
}

/// Sampled Mather set: node supports of the reference measure and of `n_objectives`
/// vertices of the Mather polytope selected by random linear objectives.
#[derive(Debug, Clone)]
pub struct MatherSample {
    /// Union of the supports, dilated by one cell.
    pub nodes: Vec<usize>,
    /// Undilated union of the supports.
    pub support: Vec<usize>,
    /// Distinct sampled vertex measures, reference first.
    pub measures: Vec<DiscreteMeasure>,
}

/// Nodes within one cell (sup-norm) of `nodes`.
pub fn dilate(grid: &Grid, nodes: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; grid.len()];
    let counts = grid.counts();
    let dim = grid.dim();
    for &i in nodes {
        let m = grid.multi_index(i);
        let total = 3usize.pow(dim as u32);
        for flat in 0..total {
            let mut rem = flat;
            let mut nb = m.clone();
            let mut ok = true;
            for a in 0..dim {
                let off = (rem % 3) as isize - 1;
                rem /= 3;
                let v = m[a] as isize + off;
                if v < 0 || v >= counts[a] as isize {
                    ok = false;
                    break;
                }
                nb[a] = v as usize;
            }
            if ok {
                mark[grid.index(&nb)] = true;
            }
        }
    }
    (0..grid.len()).filter(|&i| mark[i]).collect()
}

pub fn mather_set(
    polytope: &MatherPolytope,
    grid: &Grid,
    n_objectives: usize,
    seed: u64,
    opts: SimplexOptions,
) -> Result<MatherSample, LimitError> {
    let support_tol = 1e-9;
    let mut measures = vec![polytope.reference.clone()];
    if n_objectives > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut solver = polytope.solver(opts)?;
        for _ in 0..n_objectives {
            let weights: Vec<f64> = (0..grid.len()).map(|_| rng.gen::<f64>()).collect();
            let sol = solver.minimize(|i, _| weights[i])?;
            let mu = DiscreteMeasure::new(
                MeasureKind::Ergodic,
                sol.measure.entries().iter().filter(|e| e.2 > support_tol).copied().collect(),
            );
            if !measures.iter().any(|m| m.entries() == mu.entries()) {
                measures.push(mu);
            }
        }
    }
    let mut support: Vec<usize> = measures.iter().flat_map(|m| m.support_nodes(support_tol)).collect();
    support.sort_unstable();
    support.dedup();
    let nodes = dilate(grid, &support);
    Ok(MatherSample { nodes, support, measures })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UniquenessOutcome {
    Pass,
    Fail,
    /// The hypothesis `v ≤ w` on the Mather set does not hold.
    NotApplicable,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessVerdict {
    pub outcome: UniquenessOutcome,
    /// `max (v - w)` over the Mather set.
    pub hypothesis_excess: f64,
    /// `max (v - w)` over the reporting nodes.
    pub worst: f64,
    pub witness: Option<usize>,
}

/// If `v ≤ w + tol` on the Mather set then `v ≤ w + 2 tol` on `report_nodes`.
///
/// Both fields must coincide, within `recon_tol` on `report_nodes`, with the min-formula
/// field of their own Aubry trace.
pub fn uniqueness_test(
    critical: &CriticalData,
    mather_nodes: &[usize],
    v: &ValueField,
    w: &ValueField,
    report_nodes: &[usize],
    tol: f64,
    recon_tol: f64,
) -> Result<UniquenessVerdict, LimitError> {
    for f in [v, w] {
        let rebuilt = critical.min_formula(&critical.trace_of(f));
        let (gap, at) = f.sup_diff(&rebuilt, report_nodes);
        if gap > recon_tol {
            return Err(LimitError::NotWeakKam { gap, node: at.unwrap_or(0) });
        }
    }
    let excess = mather_nodes.iter().map(|&i| v[i] - w[i]).fold(f64::NEG_INFINITY, f64::max);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for &i in report_nodes {
        let d = v[i] - w[i];
        if d > worst {
            worst = d;
            witness = Some(i);
        }
    }
    let outcome = if excess > tol {
        UniquenessOutcome::NotApplicable
    } else if worst <= 2.0 * tol {
        UniquenessOutcome::Pass
    } else {
        UniquenessOutcome::Fail
    };
    Ok(UniquenessVerdict { outcome, hypothesis_excess: excess, worst, witness })
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub schedule: Vec<f64>,
    /// Points at which discounted measures are computed (snapped to nodes).
    pub probes: Vec<Vec<f64>>,
    /// Reporting sub-box; the central half of the box when `None`.
    pub report_box: Option<BoxDomain>,
    pub discounted: DiscountedOptions,
    pub critical: CriticalOptions,
    pub simplex: SimplexOptions,
    pub n_objectives: usize,
    pub seed: u64,
    /// Reduced-cost threshold defining the Mather polytope.
    pub polytope_tol: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            schedule: vec![0.5, 0.25, 0.125],
            probes: Vec::new(),
            report_box: None,
            discounted: DiscountedOptions::default(),
            critical: CriticalOptions::default(),
            simplex: SimplexOptions::default(),
            n_objectives: 8,
            seed: 0,
            polytope_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeRow {
    pub node: usize,
    pub point: Vec<f64>,
    /// `λ u_λ(z)` from value iteration.
    pub lambda_u: f64,
    /// Optimal value of the discounted LP at `(λ, z)`.
    pub lp_objective: Option<f64>,
    pub holonomy_residual: Option<f64>,
    /// Transport distance from the discounted measure to the reference Mather measure.
    pub transport_distance: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub lambda: f64,
    /// `sup |u_λ + c/λ - w|` over the reporting nodes.
    pub sup_gap: Option<f64>,
    pub gap_at: Option<Vec<f64>>,
    pub iterations: Option<usize>,
    pub probes: Vec<ProbeRow>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub lambda_schedule: Vec<f64>,
    pub rows: Vec<StudyRow>,
    pub critical_value: f64,
    pub critical_bracket: (f64, f64),
    pub ergodic_lp_objective: f64,
    pub eps_aubry: f64,
    pub aubry_nodes: Vec<usize>,
    pub mather_nodes: Vec<usize>,
    pub mather_measures: usize,
    pub w_field: ValueField,
    pub w_deflim: ValueField,
    /// `sup |w_enric1 - w_deflim|` over the reporting nodes.
    pub estimator_agreement: f64,
    /// `max ⟨μ, w⟩` over the sampled Mather measures.
    pub max_mather_pairing: f64,
    pub max_closedness_residual: f64,
    pub report_nodes: Vec<usize>,
}

impl StudyReport {
    pub fn sup_gaps(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.sup_gap).collect()
    }

    /// Ratios of successive gaps (empty for a single-row schedule).
    pub fn gap_ratios(&self) -> Vec<Option<f64>> {
        self.rows
            .windows(2)
            .map(|w| match (w[0].sup_gap, w[1].sup_gap) {
                (Some(a), Some(b)) if a > 0.0 => Some(b / a),
                _ => None,
            })
            .collect()
    }
}

/// Full vanishing-discount study. Failures at individual `λ` or probes are recorded in the
/// corresponding rows; only failures of the ergodic side abort.
pub fn vanishing_discount_study(
    model: &HamiltonianModel,
    disc: &Discretization,
    cfg: &StudyConfig,
) -> Result<StudyReport, LimitError> {
    if cfg.schedule.is_empty() {
        return Err(LimitError::EmptySchedule);
    }
    if cfg.schedule.iter().any(|&l| !(l > 0.0 && l.is_finite()))
        || cfg.schedule.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(LimitError::ScheduleNotDecreasing);
    }
    let grid = &disc.grid;
    let critical = CriticalData::compute(model, disc, cfg.critical)?;
    let ergodic = build_ergodic_lp(model, disc);
    let ergodic_sol = lp_solve(&ergodic, cfg.simplex.clone())?;
    let polytope = MatherPolytope::from_ergodic(&ergodic, &ergodic_sol, cfg.polytope_tol)?;
    let w = enric1_field(&critical, &polytope, cfg.simplex.clone())?;
    let sample = mather_set(&polytope, grid, cfg.n_objectives, cfg.seed, cfg.simplex.clone())?;
    let w_deflim = selected_solution_deflim(&critical, grid, &sample.measures)?;
    let report_box = cfg.report_box.clone().unwrap_or_else(|| grid.domain().scaled(0.5));
    let report_nodes = grid.nodes_in(&report_box);
    let (agreement, _) = w.sup_diff(&w_deflim, &report_nodes);
    let max_pairing = sample
        .measures
        .iter()
        .map(|m| m.pair_field(w.values()))
        .fold(f64::NEG_INFINITY, f64::max);
    let max_closed = sample
        .measures
        .iter()
        .map(|m| closedness_residual(m, disc))
        .fold(0.0, f64::max);
    let c = critical.c();
    let reference = &ergodic_sol.measure;
    let rows: Vec<StudyRow> = cfg
        .schedule
        .par_iter()
        .map(|&lambda| study_row(model, disc, cfg, lambda, c, &w, &report_nodes, reference))
        .collect();
    Ok(StudyReport {
        lambda_schedule: cfg.schedule.clone(),
        rows,
        critical_value: c,
        critical_bracket: (critical.level.lo, critical.level.hi),
        ergodic_lp_objective: ergodic_sol.objective,
        eps_aubry: critical.eps_aubry(),
        aubry_nodes: critical.aubry_nodes().to_vec(),
        mather_nodes: sample.nodes,
        mather_measures: sample.measures.len(),
        w_field: w,
        w_deflim,
        estimator_agreement: agreement,
        max_mather_pairing: max_pairing,
        max_closedness_residual: max_closed,
        report_nodes,
    })
}

#[allow(clippy::too_many_arguments)]
fn study_row(
    model: &HamiltonianModel,
    disc: &Discretization,
    cfg: &StudyConfig,
    lambda: f64,
    c: f64,
    w: &ValueField,
    report_nodes: &[usize],
    reference: &DiscreteMeasure,
) -> StudyRow {
    let grid = &disc.grid;
    let solve = match solve_discounted(model, disc, lambda, cfg.discounted) {
        Ok(s) => s,
        Err(e) => {
            return StudyRow {
                lambda,
                sup_gap: None,
                gap_at: None,
                iterations: None,
                probes: Vec::new(),
                error: Some(e.to_string()),
            }
        }
    };
    let shifted = solve.field.shifted(c / lambda);
    let (gap, at) = shifted.sup_diff(w, report_nodes);
    let probes = cfg
        .probes
        .par_iter()
        .map(|p| {
            let z = grid.nearest_node(p);
            let mut row = ProbeRow {
                node: z,
                point: grid.point(z).to_vec(),
                lambda_u: lambda * solve.field[z],
                lp_objective: None,
                holonomy_residual: None,
                transport_distance: None,
                error: None,
            };
            let lp = build_discounted_lp(model, disc, lambda, z)
                .and_then(|p| lp_solve(&p, cfg.simplex.clone()));
            match lp {
                Ok(out) => {
                    row.lp_objective = Some(out.objective);
                    row.holonomy_residual =
                        Some(crate::measures::holonomy_residual(&out.measure, disc, lambda, z));
                    match transport_distance(&out.measure, reference, disc) {
                        Ok(d) => row.transport_distance = Some(d),
                        Err(e) => row.error = Some(e.to_string()),
                    }
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();
    StudyRow {
        lambda,
        sup_gap: Some(gap),
        gap_at: at.map(|i| grid.point(i).to_vec()),
        iterations: Some(solve.iterations),
        probes,
        error: None,
    }
}
