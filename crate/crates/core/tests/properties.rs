//! Property suite for the structural invariants of the model, grid, ergodic and
//! discounted layers.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weakkam_core::discounted::{solve_discounted, DiscountedOptions};
use weakkam_core::ergodic::LevelGraph;
use weakkam_core::ergodic::{critical_value, intrinsic_distance, CriticalData, CriticalOptions};
use weakkam_core::model::{fenchel_young_gap, Support};
use weakkam_core::{BoxDomain, Discretization, Grid, HamiltonianModel, Potential};

fn models() -> Vec<(&'static str, HamiltonianModel)> {
    vec![
        ("eikonal_abs", HamiltonianModel::eikonal(Potential::Abs { scale: 1.0 }, 1)),
        ("quadratic", HamiltonianModel::quadratic(Potential::HalfSquare { scale: 1.0 }, 1)),
        ("double_well", HamiltonianModel::quadratic(Potential::DoubleWell { separation: 1.0 }, 1)),
        ("eikonal_2d", HamiltonianModel::eikonal(Potential::HalfSquare { scale: 0.5 }, 2)),
        ("quadratic_2d", HamiltonianModel::quadratic(Potential::Abs { scale: 1.0 }, 2)),
    ]
}

#[test]
fn fenchel_young_on_ten_thousand_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (name, m) in models() {
        let d = m.dim();
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p: Vec<f64> = (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let gap = fenchel_young_gap(&m, &x, &p, &q);
            assert!(gap >= -1e-10, "{name}: gap {gap} at x={x:?} p={p:?} q={q:?}");
        }
    }
}

#[test]
fn fenchel_young_is_tight_at_the_gradient() {
    let m = HamiltonianModel::quadratic(Potential::HalfSquare { scale: 1.0 }, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let x = [rng.gen_range(-3.0..3.0)];
        let p = [rng.gen_range(-3.0..3.0)];
        assert!(fenchel_young_gap(&m, &x, &p, &p).abs() < 1e-10);
    }
}

/// Path sums compared along different association orders agree up to rounding.
fn rounded(v: f64) -> f64 {
    v + 1e-12 * (1.0 + v.abs())
}

fn support(m: &HamiltonianModel, a: f64, x: &[f64], q: &[f64]) -> Option<f64> {
    match m.support_function(a, x, q) {
        Support::Value(v) => Some(v),
        Support::EmptySublevel => None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn support_function_is_positively_homogeneous(
        model in 0usize..5, x in -3.0f64..3.0, q in -2.0f64..2.0, a in -0.5f64..2.0, t in 0.0f64..5.0,
    ) {
        let (_, m) = models().swap_remove(model);
        let xs = vec![x; m.dim()];
        let qs = vec![q; m.dim()];
        let tq: Vec<f64> = qs.iter().map(|v| t * v).collect();
        if let (Some(s), Some(st)) = (support(&m, a, &xs, &qs), support(&m, a, &xs, &tq)) {
            prop_assert!((st - t * s).abs() <= 1e-12 * (1.0 + st.abs()));
        }
    }

    #[test]
    fn support_function_is_monotone_in_level(
        model in 0usize..5, x in -3.0f64..3.0, q in -2.0f64..2.0, a in -0.5f64..2.0, da in 0.0f64..1.0,
    ) {
        let (_, m) = models().swap_remove(model);
        let xs = vec![x; m.dim()];
        let qs = vec![q; m.dim()];
        if let Some(lo) = support(&m, a, &xs, &qs) {
            let hi = support(&m, a + da, &xs, &qs);
            prop_assert!(hi.is_some());
            prop_assert!(hi.unwrap() >= lo - 1e-12);
        }
    }

    #[test]
    fn superlinearize_keeps_zero_sublevel(x in -2.9f64..2.9, p in -6.0f64..6.0) {
        let base = HamiltonianModel::eikonal(Potential::Abs { scale: 1.0 }, 1);
        let grid = Grid::new(BoxDomain::centered(1, 3.0), 0.1).unwrap();
        let s = base.superlinearize(&grid).unwrap();
        let h = base.hamiltonian(&[x], &[p]);
        let hs = s.hamiltonian(&[x], &[p]);
        prop_assert_eq!(h.max(0.0) > 0.0, hs.max(0.0) > 0.0);
    }

    #[test]
    fn transition_rows_are_stochastic(
        h in prop::sample::select(vec![0.05, 0.1, 0.125, 0.2, 0.25, 0.5]), q_max in 0.3f64..2.0, count in prop::sample::select(vec![3usize, 5, 7]),
        dim in 1usize..3,
    ) {
        let d = Discretization::build(BoxDomain::centered(dim, 1.0), h, q_max, count).unwrap();
        for i in 0..d.grid.len() {
            for k in 0..d.velocities.len() {
                let row = d.transition.entries(i, k);
                prop_assert!(row.iter().all(|&(_, w)| w >= 0.0));
                let sum: f64 = row.iter().map(|e| e.1).sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_then_backward_returns_to_start(h in prop::sample::select(vec![0.1, 0.125, 0.2, 0.25]), q_max in 0.3f64..1.5) {
        let d = Discretization::build(BoxDomain::centered(1, 2.0), h, q_max, 5).unwrap();
        let nq = d.velocities.len();
        for i in 0..d.grid.len() {
            if d.grid.domain().in_outer_shell(d.grid.point(i), 0.5) {
                continue;
            }
            for k in 0..nq {
                let back = d.velocities.negate(k);
                let mut mass = 0.0;
                for &(j, w) in d.transition.entries(i, k) {
                    for &(l, v) in d.transition.entries(j, back) {
                        if l == i {
                            mass += w * v;
                        }
                    }
                }
                prop_assert!(mass > 0.0);
            }
        }
    }

    #[test]
    fn intrinsic_distance_triangle_inequality(
        level in 0.0f64..1.5, x in 0usize..41, y in 0usize..41, z in 0usize..41,
    ) {
        let m = HamiltonianModel::quadratic(Potential::HalfSquare { scale: 1.0 }, 1);
        let d = Discretization::build(BoxDomain::centered(1, 2.0), 0.1, 1.0, 5).unwrap();
        let sx = intrinsic_distance(&m, &d, level, x).unwrap();
        let sz = intrinsic_distance(&m, &d, level, z).unwrap();
        prop_assert!(sx[y] <= rounded(sx[z] + sz[y]), "{} > {} + {}", sx[y], sx[z], sz[y]);
    }

    #[test]
    fn random_graphs_triangle_inequality(
        edges in prop::collection::vec((0usize..12, 0usize..12, -0.5f64..3.0), 10..60),
        s in 0usize..12, t in 0usize..12,
    ) {
        let edges: Vec<(usize, usize, f64)> = edges.into_iter().filter(|e| e.0 != e.1).collect();
        let g = LevelGraph::from_edges(12, 0.0, edges);
        if let (Ok(ds), Ok(dt)) = (g.distances_from(s), g.distances_from(t)) {
            for y in 0..12 {
                if ds[t].is_finite() && dt[y].is_finite() {
                    prop_assert!(ds[y] <= rounded(ds[t] + dt[y]), "{} > {} + {}", ds[y], ds[t], dt[y]);
                }
            }
            let bf = g.distances_from_bellman_ford(s).unwrap();
            for y in 0..12 {
                prop_assert!(ds[y] == bf[y] || (ds[y] - bf[y]).abs() <= 1e-12 * (1.0 + bf[y].abs()));
            }
        }
    }

    #[test]
    fn bisection_trace_is_monotone(scale in 0.2f64..2.0, shift in -1.0f64..1.0) {
        let m = HamiltonianModel::quadratic(Potential::HalfSquare { scale }, 1).with_shift(shift);
        let d = Discretization::build(BoxDomain::centered(1, 2.0), 0.1, 1.0, 5).unwrap();
        let lvl = critical_value(&m, &d, 1e-4).unwrap();
        prop_assert!(lvl.trace_is_monotone());
        prop_assert!((lvl.c + shift).abs() < 1e-3);
    }
}

#[test]
fn discounted_solution_is_bounded_below() {
    let d = Discretization::build(BoxDomain::centered(1, 2.0), 0.05, 1.5, 7).unwrap();
    for (name, m) in models().into_iter().filter(|(_, m)| m.dim() == 1) {
        let b = (0..d.grid.len()).map(|i| m.at_zero(d.grid.point(i))).fold(f64::NEG_INFINITY, f64::max);
        for lambda in [1.0, 0.5, 0.25] {
            let s = solve_discounted(&m, &d, lambda, DiscountedOptions::default()).unwrap();
            assert_eq!(s.monotone_violations, 0, "{name}");
            assert!(s.field.values().iter().all(|&v| lambda * v >= -b - 1e-9), "{name} λ={lambda}");
        }
    }
}

#[test]
fn weak_kam_solutions_are_bounded_below_by_their_trace() {
    let m = HamiltonianModel::quadratic(Potential::DoubleWell { separation: 1.0 }, 1);
    let d = Discretization::build(BoxDomain::centered(1, 2.5), 0.05, 1.0, 5).unwrap();
    let crit = CriticalData::compute(&m, &d, CriticalOptions::default()).unwrap();
    let k = crit.aubry_nodes().len();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = crit.min_formula(&raw);
        let t = crit.trace_of(&v);
        let u = crit.weak_kam_solution(&t).unwrap();
        let floor = t.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(u.min() >= floor - 1e-12);
    }
}

#[test]
fn distance_is_below_peierls_barrier() {
    let m = HamiltonianModel::quadratic(Potential::DoubleWell { separation: 1.0 }, 1);
    let d = Discretization::build(BoxDomain::centered(1, 2.5), 0.05, 1.0, 5).unwrap();
    let crit = CriticalData::compute(&m, &d, CriticalOptions::default()).unwrap();
    for x in (0..d.grid.len()).step_by(7) {
        let s = intrinsic_distance(&m, &d, crit.graph_level(), x).unwrap();
        for y in (0..d.grid.len()).step_by(5) {
            assert!(s[y] <= crit.peierls_barrier(x, y) + 1e-12);
        }
    }
}
