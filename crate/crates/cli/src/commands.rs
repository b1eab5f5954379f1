//! Subcommand pipelines. Each builds the model, runs its stage and writes artifacts; the
//! manifest is written last.

use serde::Serialize;
use serde_json::json;

use weakkam_core::discounted::{solve_discounted, DiscountedOptions};
use weakkam_core::ergodic::{intrinsic_distance, CriticalData, CriticalOptions};
use weakkam_core::limit::{
    enric1_field, mather_set, selected_solution_deflim, uniqueness_test, vanishing_discount_study, StudyConfig,
};
use weakkam_core::measures::{
    build_discounted_lp, build_ergodic_lp, closedness_residual, holonomy_residual, lp_solve, support_check,
    DiscreteMeasure, LpOutcome, MatherPolytope,
};
use weakkam_core::model::{MomentumGrid, SampledTable};
use weakkam_core::{Discretization, HamiltonianModel, Potential};

use crate::config::{ConfigError, FamilyConfig, RunConfig};
use crate::output::{loglog_svg, num, opt_num, Artifacts, Manifest};
use crate::{CliError, Command, RunSummary, EXIT_INVALID, EXIT_OK};

/// A reported number together with the operation and tolerance that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Claim {
    pub name: String,
    pub value: f64,
    pub operation: String,
    pub tolerance: f64,
}

fn claim(name: &str, value: f64, operation: &str, tolerance: f64) -> Claim {
    Claim { name: name.into(), value, operation: operation.into(), tolerance }
}

#[derive(Debug, Serialize)]
struct Report {
    command: String,
    claims: Vec<Claim>,
    warnings: Vec<String>,
    details: serde_json::Value,
}

/// Optimality tolerance of the simplex solver, quoted for LP-derived claims.
const LP_TOL: f64 = 1e-10;

pub fn build_model(cfg: &RunConfig) -> Result<(HamiltonianModel, Discretization), CliError> {
    let disc = Discretization::build(cfg.domain.clone(), cfg.h, cfg.q_max, cfg.velocity_count)
        .map_err(|e| ConfigError::new("grid.h", e.to_string()))?;
    let dim = cfg.domain.dim();
    let m = &cfg.model;
    let potential = |name: &str| {
        Potential::by_name(name, m.scale).ok_or_else(|| ConfigError::new("model.potential", format!("unknown {name:?}")))
    };
    let mut model = match &m.family {
        FamilyConfig::Eikonal => HamiltonianModel::eikonal(potential(m.potential.as_deref().unwrap_or(""))?, dim),
        FamilyConfig::Quadratic => HamiltonianModel::quadratic(potential(m.potential.as_deref().unwrap_or(""))?, dim),
        FamilyConfig::Sampled { path, p_lo, p_hi, p_counts } => {
            let momentum = MomentumGrid::new(p_lo.clone(), p_hi.clone(), p_counts.clone())
                .map_err(|e| ConfigError::new("model.sampled.p_lo", e.to_string()))?;
            let file = std::fs::File::open(path)
                .map_err(|e| ConfigError::new("model.sampled.path", format!("{}: {e}", path.display())))?;
            let table = SampledTable::from_csv(file, disc.grid.clone(), momentum)
                .map_err(|e| ConfigError::new("model.sampled.path", e.to_string()))?;
            HamiltonianModel::sampled(table)
        }
    };
    model = model.with_shift(m.shift);
    if m.normalize {
        let c = weakkam_core::ergodic::critical_value(&model, &disc, cfg.solver.critical_tol)
            .map_err(|e| CliError::solver("E-ERGODIC", e))?;
        model = model.with_shift(m.shift + c.c);
    }
    if m.superlinearize {
        model = model.superlinearize(&disc.grid).map_err(|e| CliError::solver("E-MODEL", e))?;
    }
    Ok((model, disc))
}

fn critical_options(cfg: &RunConfig) -> CriticalOptions {
    CriticalOptions { tol: cfg.solver.critical_tol, eps_aubry: cfg.solver.eps_aubry }
}

fn discounted_options(cfg: &RunConfig) -> DiscountedOptions {
    DiscountedOptions { tol: cfg.solver.tol, max_iter: cfg.solver.max_iter }
}

fn coord_header(dim: usize, prefix: &str) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=dim).map(|a| format!("{prefix}{a}")).collect()
    }
}

fn coords(p: &[f64]) -> Vec<String> {
    p.iter().map(|v| num(*v)).collect()
}

fn measure_rows(mu: &DiscreteMeasure, disc: &Discretization) -> Vec<Vec<String>> {
    mu.entries()
        .iter()
        .map(|&(i, k, m)| {
            let mut row = coords(disc.grid.point(i));
            row.extend(coords(disc.velocities.get(k)));
            row.push(num(m));
            row
        })
        .collect()
}

struct Run<'a> {
    cfg: &'a RunConfig,
    out: Artifacts,
    claims: Vec<Claim>,
    details: serde_json::Value,
    exit_code: i32,
}

impl Run<'_> {
    fn csv(&mut self, name: &str, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<(), CliError> {
        if !self.cfg.outputs.csv {
            return Ok(());
        }
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        self.out.write_csv(name, &h, &rows).map_err(|e| CliError::io(name, e))
    }

    fn svg(&mut self, name: &str, body: String) -> Result<(), CliError> {
        if !self.cfg.outputs.svg {
            return Ok(());
        }
        self.out.write(name, body.as_bytes()).map_err(|e| CliError::io(name, e))
    }

    fn finish(mut self, command: &str, manifest: &Manifest) -> Result<RunSummary, CliError> {
        if self.cfg.outputs.json {
            let report = Report {
                command: command.into(),
                claims: self.claims,
                warnings: self.cfg.warnings.clone(),
                details: self.details,
            };
            self.out.write_json("report.json", &report).map_err(|e| CliError::io("report.json", e))?;
        }
        let dir = self.out.dir().to_path_buf();
        let outputs = self.out.finish(manifest).map_err(|e| CliError::io("manifest.json", e))?;
        Ok(RunSummary { exit_code: self.exit_code, out_dir: dir, outputs })
    }
}

pub fn execute(command: &Command, cfg: &RunConfig, manifest: Manifest) -> Result<RunSummary, CliError> {
    let (model, disc) = build_model(cfg)?;
    let out = Artifacts::create(&cfg.outputs.directory)
        .map_err(|e| CliError::io(cfg.outputs.directory.display().to_string(), e))?;
    let mut run = Run { cfg, out, claims: Vec::new(), details: json!({}), exit_code: EXIT_OK };
    match command {
        Command::Validate(_) => validate(&mut run, &model, &disc)?,
        Command::Critical(_) => critical(&mut run, &model, &disc)?,
        Command::Distance { source, .. } => distance(&mut run, &model, &disc, source)?,
        Command::Aubry(_) => aubry(&mut run, &model, &disc)?,
        Command::Solve { lambda, .. } => solve(&mut run, &model, &disc, *lambda)?,
        Command::Mather { lambda, z, .. } => mather(&mut run, &model, &disc, *lambda, z.as_deref())?,
        Command::Limit(_) => limit(&mut run, &model, &disc)?,
        Command::Study(_) => study(&mut run, &model, &disc)?,
    }
    run.finish(command.name(), &manifest)
}

fn check_point(disc: &Discretization, key: &str, p: &[f64]) -> Result<usize, CliError> {
    if p.len() != disc.grid.dim() || !disc.grid.domain().contains(p) {
        return Err(ConfigError::new(key, format!("point {p:?} is not inside the box")).into());
    }
    Ok(disc.grid.nearest_node(p))
}

fn validate(run: &mut Run, model: &HamiltonianModel, disc: &Discretization) -> Result<(), CliError> {
    let domain = disc.grid.domain();
    let report = model.validate_assumptions(domain, 21);
    let bounds = model.lagrangian_bounds(domain, 21);
    run.claims.push(claim("a3_margin", report.best_margin, "validate_assumptions", 0.0));
    run.claims.push(claim("epsilon_used", report.epsilon_used, "validate_assumptions", 0.01));
    run.claims.push(claim("delta0", bounds.delta0, "lagrangian_bounds", 0.0));
    run.claims.push(claim("m0", bounds.m0, "lagrangian_bounds", 0.0));
    if !report.all_passed() {
        run.exit_code = EXIT_INVALID;
        for (name, v) in [("A1", &report.a1), ("A2", &report.a2), ("A3", &report.a3)] {
            if !v.passed {
                eprintln!("error[E-MODEL] assumption {name} failed: {}", v.detail);
            }
        }
    }
    run.details = json!({ "assumptions": report, "lagrangian": bounds, "all_passed": report.all_passed() });
    Ok(())
}

fn critical_data(run: &Run, model: &HamiltonianModel, disc: &Discretization) -> Result<CriticalData, CliError> {
    CriticalData::compute(model, disc, critical_options(run.cfg)).map_err(|e| CliError::solver("E-ERGODIC", e))
}

fn ergodic_lp(run: &Run, model: &HamiltonianModel, disc: &Discretization) -> Result<(weakkam_core::measures::LpProblem, LpOutcome), CliError> {
    let problem = build_ergodic_lp(model, disc);
    let sol = lp_solve(&problem, run.cfg.solver.simplex()).map_err(|e| CliError::solver("E-MEASURES", e))?;
    Ok((problem, sol))
}

fn critical(run: &mut Run, model: &HamiltonianModel, disc: &Discretization) -> Result<(), CliError> {
    let crit = critical_data(run, model, disc)?;
    let (_, lp) = ergodic_lp(run, model, disc)?;
    let tol = run.cfg.solver.critical_tol;
    let lvl = &crit.level;
    run.claims.push(claim("critical_value", lvl.c, "critical_value (bisection)", tol));
    run.claims.push(claim("bracket_width", lvl.width(), "critical_value (bisection)", tol));
    run.claims.push(claim("ergodic_lp_optimum", lp.objective, "lp_solve (ergodic)", LP_TOL));
    run.claims.push(claim("estimator_gap", (lvl.c + lp.objective).abs(), "critical_value vs lp_solve (ergodic)", tol));
    run.claims.push(claim("aubry_nodes", crit.aubry_nodes().len() as f64, "aubry_set", crit.eps_aubry()));
    let rows = lvl
        .trace
        .iter()
        .enumerate()
        .map(|(k, s)| vec![k.to_string(), num(s.level), format!("{:?}", s.verdict), s.verdict.is_subcritical().to_string()])
        .collect();
    run.csv("bisection.csv", vec!["step".into(), "level".into(), "verdict".into(), "subcritical".into()], rows)?;
    run.details = json!({
        "bracket": [lvl.lo, lvl.hi],
        "trace_monotone": lvl.trace_is_monotone(),
        "eps_aubry": crit.eps_aubry(),
        "lp_pivots": lp.pivots,
    });
    Ok(())
}

fn distance(run: &mut Run, model: &HamiltonianModel, disc: &Discretization, source: &[f64]) -> Result<(), CliError> {
    let node = check_point(disc, "source", source)?;
    let crit = critical_data(run, model, disc)?;
    let level = crit.graph_level();
    let s = intrinsic_distance(model, disc, level, node).map_err(|e| CliError::solver("E-ERGODIC", e))?;
    let dim = disc.grid.dim();
    let mut header = coord_header(dim, "x");
    header.push("distance".into());
    let rows = (0..disc.grid.len())
        .map(|i| {
            let mut r = coords(disc.grid.point(i));
            r.push(num(s[i]));
            r
        })
        .collect();
    run.csv("distance.csv", header, rows)?;
    run.claims.push(claim("level", level, "critical_value (upper bracket)", run.cfg.solver.critical_tol));
    run.claims.push(claim("max_distance", s.max(), "intrinsic_distance", 0.0));
    run.details = json!({ "source_node": node, "source_point": disc.grid.point(node) });
    Ok(())
}

fn aubry(run: &mut Run, model: &HamiltonianModel, disc: &Discretization) -> Result<(), CliError> {
    let crit = critical_data(run, model, disc)?;
    let dim = disc.grid.dim();
    let mut header = coord_header(dim, "x");
    header.extend(["cycle_cost".into(), "in_aubry".into()]);
    let set: std::collections::BTreeSet<usize> = crit.aubry_nodes().iter().copied().collect();
    let rows = (0..disc.grid.len())
        .map(|i| {
            let mut r = coords(disc.grid.point(i));
            r.push(num(crit.aubry.cycle_cost[i]));
            r.push(set.contains(&i).to_string());
            r
        })
        .collect();
    run.csv("aubry.csv", header, rows)?;
    run.claims.push(claim("aubry_nodes", set.len() as f64, "aubry_set", crit.eps_aubry()));
    run.claims.push(claim("critical_value", crit.c(), "critical_value (bisection)", run.cfg.solver.critical_tol));
    run.details = json!({
        "eps_aubry": crit.eps_aubry(),
        "nodes": crit.aubry_nodes(),
        "points": crit.aubry_nodes().iter().map(|&i| disc.grid.point(i).to_vec()).collect::<Vec<_>>(),
    });
    Ok(())
}

fn solve(run: &mut Run, model: &HamiltonianModel, disc: &Discretization, lambda: f64) -> Result<(), CliError> {
    let s = solve_discounted(model, disc, lambda, discounted_options(run.cfg))
        .map_err(|e| CliError::solver("E-DISCOUNTED", e))?;
    let dim = disc.grid.dim();
    let mut header = coord_header(dim, "x");
    header.extend(["u".into(), "lambda_u".into()]);
    let rows = (0..disc.grid.len())
        .map(|i| {
            let mut r = coords(disc.grid.point(i));
            r.push(num(s.field[i]));
            r.push(num(lambda * s.field[i]));
            r
        })
        .collect();
    run.csv("u.csv", header, rows)?;
    let tol = run.cfg.solver.tol;
    run.claims.push(claim("residual", s.residual, "solve_discounted", tol));
    let probes: Vec<serde_json::Value> = run
        .cfg
        .probes
        .iter()
        .map(|p| {
            let v = disc.grid.interpolate(s.field.values(), p);
            run.claims.push(claim(&format!("u_at_{p:?}"), v, "solve_discounted", tol));
            json!({ "point": p, "u": v, "lambda_u": lambda * v })
        })
        .collect();
    run.details = json!({
        "lambda": lambda,
        "iterations": s.iterations,
        "monotone_violations": s.monotone_violations,
        "probes": probes,
    });
    Ok(())
}

fn mather(
    run: &mut Run,
    model: &HamiltonianModel,
    disc: &Discretization,
    lambda: Option<f64>,
    z: Option<&[f64]>,
) -> Result<(), CliError> {
    let dim = disc.grid.dim();
    let mut header = coord_header(dim, "x");
    header.extend(coord_header(dim, "q"));
    header.push("mass".into());
    match (lambda, z) {
        (Some(lambda), Some(z)) => {
            let node = check_point(disc, "z", z)?;
            let problem = build_discounted_lp(model, disc, lambda, node).map_err(|e| CliError::solver("E-MEASURES", e))?;
            let sol = lp_solve(&problem, run.cfg.solver.simplex()).map_err(|e| CliError::solver("E-MEASURES", e))?;
            let u = solve_discounted(model, disc, lambda, discounted_options(run.cfg))
                .map_err(|e| CliError::solver("E-DISCOUNTED", e))?;
            let lu = lambda * u.field[node];
            run.csv("measure.csv", header, measure_rows(&sol.measure, disc))?;
            run.claims.push(claim("lp_optimum", sol.objective, "lp_solve (discounted)", LP_TOL));
            run.claims.push(claim("lambda_u", lu, "solve_discounted", run.cfg.solver.tol));
            run.claims.push(claim("duality_gap", (sol.objective - lu).abs(), "lp_solve vs solve_discounted", run.cfg.solver.tol));
            run.claims.push(claim(
                "holonomy_residual",
                holonomy_residual(&sol.measure, disc, lambda, node),
                "holonomy_residual",
                1e-8,
            ));
            run.details = json!({ "lambda": lambda, "z_node": node, "z_point": disc.grid.point(node), "pivots": sol.pivots });
        }
        _ => {
            let crit = critical_data(run, model, disc)?;
            let (problem, sol) = ergodic_lp(run, model, disc)?;
            let polytope = MatherPolytope::from_ergodic(&problem, &sol, run.cfg.solver.polytope_tol)
                .map_err(|e| CliError::solver("E-MEASURES", e))?;
            let sample = mather_set(&polytope, &disc.grid, run.cfg.n_objectives, run.cfg.seed, run.cfg.solver.simplex())
                .map_err(|e| CliError::solver("E-LIMIT", e))?;
            run.csv("measure.csv", header, measure_rows(&sol.measure, disc))?;
            let mut nh = coord_header(dim, "x");
            nh.push("in_support".into());
            let support: std::collections::BTreeSet<usize> = sample.support.iter().copied().collect();
            let rows = sample
                .nodes
                .iter()
                .map(|&i| {
                    let mut r = coords(disc.grid.point(i));
                    r.push(support.contains(&i).to_string());
                    r
                })
                .collect();
            run.csv("mather_set.csv", nh, rows)?;
            let support_mass = 1e-3 + 2.0 * disc.grid.h();
            let sc = support_check(&sol.measure, &crit, disc, disc.velocities.q_max(), support_mass);
            run.claims.push(claim("ergodic_lp_optimum", sol.objective, "lp_solve (ergodic)", LP_TOL));
            run.claims.push(claim("closedness_residual", closedness_residual(&sol.measure, disc), "closedness_residual", 1e-8));
            run.claims.push(claim("outside_aubry_mass", sc.outside_mass, "support_check", support_mass));
            run.details = json!({
                "mather_nodes": sample.nodes,
                "sampled_measures": sample.measures.len(),
                "polytope_columns": polytope.columns(),
                "seed": run.cfg.seed,
            });
        }
    }
    Ok(())
}

fn limit(run: &mut Run, model: &HamiltonianModel, disc: &Discretization) -> Result<(), CliError> {
    let cfg = run.cfg;
    let crit = critical_data(run, model, disc)?;
    let (problem, sol) = ergodic_lp(run, model, disc)?;
    let polytope = MatherPolytope::from_ergodic(&problem, &sol, cfg.solver.polytope_tol)
        .map_err(|e| CliError::solver("E-MEASURES", e))?;
    let limit_err = |e| CliError::solver("E-LIMIT", e);
    let w = enric1_field(&crit, &polytope, cfg.solver.simplex()).map_err(limit_err)?;
    let sample = mather_set(&polytope, &disc.grid, cfg.n_objectives, cfg.seed, cfg.solver.simplex()).map_err(limit_err)?;
    let wd = selected_solution_deflim(&crit, &disc.grid, &sample.measures).map_err(limit_err)?;
    let report_nodes = disc.grid.nodes_in(&cfg.report_box);
    let (agreement, _) = w.sup_diff(&wd, &report_nodes);
    let h = disc.grid.h();
    let verdict = uniqueness_test(&crit, &sample.nodes, &wd, &w, &report_nodes, 2.0 * h, 1e-9).map_err(limit_err)?;
    write_w(run, disc, &w, &wd)?;
    run.claims.push(claim("estimator_agreement", agreement, "enric1 vs deflim", h));
    let pairing = sample.measures.iter().map(|m| m.pair_field(w.values())).fold(f64::NEG_INFINITY, f64::max);
    run.claims.push(claim("max_mather_pairing", pairing, "selected_solution_enric1", h));
    run.claims.push(claim("uniqueness_worst", verdict.worst, "uniqueness_test", 2.0 * h));
    run.details = json!({
        "uniqueness": verdict,
        "mather_nodes": sample.nodes,
        "aubry_nodes": crit.aubry_nodes(),
    });
    Ok(())
}

fn write_w(run: &mut Run, disc: &Discretization, w: &weakkam_core::ValueField, wd: &weakkam_core::ValueField) -> Result<(), CliError> {
    let mut header = coord_header(disc.grid.dim(), "x");
    header.extend(["w_enric1".into(), "w_deflim".into()]);
    let rows = (0..disc.grid.len())
        .map(|i| {
            let mut r = coords(disc.grid.point(i));
            r.push(num(w[i]));
            r.push(num(wd[i]));
            r
        })
        .collect();
    run.csv("w.csv", header, rows)
}

fn study(run: &mut Run, model: &HamiltonianModel, disc: &Discretization) -> Result<(), CliError> {
    let cfg = run.cfg;
    let sc = StudyConfig {
        schedule: cfg.schedule.clone(),
        probes: cfg.probes.clone(),
        report_box: Some(cfg.report_box.clone()),
        discounted: discounted_options(cfg),
        critical: critical_options(cfg),
        simplex: cfg.solver.simplex(),
        n_objectives: cfg.n_objectives,
        seed: cfg.seed,
        polytope_tol: cfg.solver.polytope_tol,
    };
    let report = vanishing_discount_study(model, disc, &sc).map_err(|e| CliError::solver("E-LIMIT", e))?;
    let dim = disc.grid.dim();
    let mut header: Vec<String> = vec!["lambda".into(), "sup_gap".into()];
    header.extend(coord_header(dim, "z"));
    header.extend(["lp_objective".into(), "lambda_u".into(), "transport_distance".into(), "error".into()]);
    let mut rows = Vec::new();
    for row in &report.rows {
        let base = vec![num(row.lambda), opt_num(row.sup_gap)];
        if row.probes.is_empty() {
            let mut r = base.clone();
            r.extend(std::iter::repeat_n(String::new(), dim + 3));
            r.push(row.error.clone().unwrap_or_default());
            rows.push(r);
        }
        for p in &row.probes {
            let mut r = base.clone();
            r.extend(coords(&p.point));
            r.push(opt_num(p.lp_objective));
            r.push(num(p.lambda_u));
            r.push(opt_num(p.transport_distance));
            r.push(p.error.clone().or_else(|| row.error.clone()).unwrap_or_default());
            rows.push(r);
        }
    }
    run.csv("study.csv", header, rows)?;
    write_w(run, disc, &report.w_field, &report.w_deflim)?;
    let gaps: Vec<(f64, f64)> =
        report.rows.iter().filter_map(|r| r.sup_gap.map(|g| (r.lambda, g))).collect();
    run.svg("gaps.svg", loglog_svg("sup gap vs discount rate", "lambda", "sup |u + c/lambda - w|", &[("sup_gap", gaps)]))?;
    let h = disc.grid.h();
    let tol = cfg.solver.tol;
    run.claims.push(claim("critical_value", report.critical_value, "critical_value (bisection)", cfg.solver.critical_tol));
    run.claims.push(claim("ergodic_lp_optimum", report.ergodic_lp_objective, "lp_solve (ergodic)", LP_TOL));
    run.claims.push(claim("estimator_agreement", report.estimator_agreement, "enric1 vs deflim", h));
    run.claims.push(claim("max_mather_pairing", report.max_mather_pairing, "selected_solution_enric1", h));
    for row in &report.rows {
        if let Some(g) = row.sup_gap {
            run.claims.push(claim(&format!("sup_gap[lambda={}]", row.lambda), g, "solve_discounted vs selected_solution_enric1", tol));
        }
        for p in &row.probes {
            if let Some(o) = p.lp_objective {
                run.claims.push(claim(
                    &format!("duality_gap[lambda={}, z={:?}]", row.lambda, p.point),
                    (o - p.lambda_u).abs(),
                    "lp_solve (discounted) vs solve_discounted",
                    tol,
                ));
            }
        }
    }
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    run.details = json!({
        "schedule": report.lambda_schedule,
        "sup_gaps": report.sup_gaps(),
        "gap_ratios": report.gap_ratios(),
        "critical_bracket": report.critical_bracket,
        "eps_aubry": report.eps_aubry,
        "aubry_nodes": report.aubry_nodes,
        "mather_nodes": report.mather_nodes,
        "mather_measures": report.mather_measures,
        "max_closedness_residual": report.max_closedness_residual,
        "rows": report.rows,
        "failed_rows": failed,
    });
    Ok(())
}
