mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use workload_reduction::effective_cost::{quasiconvex_level_eval, EffectiveCost};
use workload_reduction::lp::{solve_lp, Bound, LpOutcome, LpProblem};
use workload_reduction::pathsim::{simulate_bm, two_sided_regulator, TimeGrid};
use workload_reduction::policy::{barrier_path_cost, mode_reduction, TwoServerModel};
use workload_reduction::reduction::{reduce_network, WorkloadReduction};
use workload_reduction::{NetworkData, TwoServerParams};

/// Minimum of `c'x` over the vertices of `{x : Ax <= b}` in the plane, by
/// intersecting every pair of constraint lines.
fn vertex_min(a: &[[f64; 2]], b: &[f64], c: [f64; 2]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let det = a[i][0] * a[j][1] - a[i][1] * a[j][0];
            if det.abs() < 1e-9 {
                continue;
            }
            let x = [
                (b[i] * a[j][1] - a[i][1] * b[j]) / det,
                (a[i][0] * b[j] - b[i] * a[j][0]) / det,
            ];
            let feasible = a
                .iter()
                .zip(b)
                .all(|(row, bk)| row[0] * x[0] + row[1] * x[1] <= bk + 1e-9);
            if feasible {
                best = best.min(c[0] * x[0] + c[1] * x[1]);
            }
        }
    }
    best
}

fn plane_lp(a: &[[f64; 2]], b: &[f64], c: [f64; 2]) -> LpOutcome {
    let am = DMatrix::from_fn(a.len(), 2, |i, j| a[i][j]);
    let prob = LpProblem::new(DVector::from_column_slice(&c)).with_ub(&am, &DVector::from_column_slice(b));
    solve_lp(&prob).unwrap()
}

fn unit_normal() -> impl Strategy<Value = [f64; 2]> {
    (0.0..std::f64::consts::TAU).prop_map(|t| [t.cos(), t.sin()])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lp_optimum_equals_best_vertex(
        cuts in prop::collection::vec((unit_normal(), 0.5..3.0f64), 0..6),
        c in (-2.0..2.0f64, -2.0..2.0f64),
    ) {
        // The box keeps the region bounded; the origin is strictly interior.
        let mut a: Vec<[f64; 2]> = vec![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let mut b = vec![4.0; 4];
        for (n, off) in cuts {
            a.push(n);
            b.push(off);
        }
        let c = [c.0, c.1];
        let oracle = vertex_min(&a, &b, c);
        match plane_lp(&a, &b, c) {
            LpOutcome::Optimal { value, .. } => prop_assert!((value - oracle).abs() <= 1e-7 * (1.0 + oracle.abs()), "{value} vs {oracle}"),
            other => prop_assert!(false, "unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_vertex_lp_terminates(
        weights in prop::collection::vec((0.0..2.0f64, 0.0..2.0f64), 1..12),
    ) {
        // Every extra constraint is active at (1, 1), the optimum.
        let mut a: Vec<[f64; 2]> = Vec::new();
        let mut b = Vec::new();
        for (w1, w2) in weights {
            a.push([w1, w2]);
            b.push(w1 + w2);
        }
        let am = DMatrix::from_fn(a.len(), 2, |i, j| a[i][j]);
        let prob = LpProblem::new(DVector::from_column_slice(&[-1.0, -1.0]))
            .with_ub(&am, &DVector::from_vec(b))
            .with_bounds(vec![Bound::new(0.0, 1.0); 2]);
        let (x, value) = match solve_lp(&prob).unwrap() {
            LpOutcome::Optimal { x, value } => (x, value),
            other => return Err(TestCaseError::fail(format!("unexpected {other:?}"))),
        };
        prop_assert!((value + 2.0).abs() <= 1e-9);
        prop_assert!((x[0] - 1.0).abs() <= 1e-9 && (x[1] - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn reduction_identities_hold(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let net = common::random_network(&mut rng);
        let red = WorkloadReduction::new(&net.r, &net.k, &net.v, None, None).unwrap();
        prop_assert!((&red.m * &net.r - &red.g * &net.k).amax() <= 1e-8);
        prop_assert!((net.v.transpose() - red.pi.transpose() * &net.r - red.kappa.transpose() * &net.k).amax() <= 1e-8);
        if red.d > 0 {
            prop_assert!((&red.m * &red.rev_basis).amax() <= 1e-8);
        }
    }

    #[test]
    fn regulator_pushes_only_at_the_barriers(
        steps in prop::collection::vec(-1.0..1.0f64, 1..300),
        hi in 0.5..3.0f64,
        start in 0.0..1.0f64,
    ) {
        let mut chi = vec![0.0];
        for s in &steps {
            chi.push(chi.last().unwrap() + s);
        }
        let w0 = start * hi;
        let reg = two_sided_regulator(&chi, 0.0, hi, w0).unwrap();
        for k in 1..chi.len() {
            let dl1 = reg.l1[k] - reg.l1[k - 1];
            let dl2 = reg.l2[k] - reg.l2[k - 1];
            prop_assert!(dl1 >= 0.0 && dl2 >= 0.0);
            prop_assert!(reg.w[k] >= -1e-12 && reg.w[k] <= hi + 1e-12);
            prop_assert!((reg.w[k] - (w0 + chi[k] - chi[0] + reg.l1[k] - reg.l2[k])).abs() <= 1e-9);
            if dl1 > 0.0 {
                prop_assert!(reg.w[k] <= 1e-12);
            }
            if dl2 > 0.0 {
                prop_assert!(reg.w[k] >= hi - 1e-12);
            }
        }
    }

    #[test]
    fn level_function_solves_the_slant_quadratic(z1 in -2.0..2.0f64, z2 in -2.0..2.0f64) {
        let floor = z2.abs().max(-z1).max(0.0);
        // r² + (1 - z2) r + z2 - 2 z1 = 0 on the slant
        let disc = (1.0 - z2).powi(2) - 4.0 * (z2 - 2.0 * z1);
        let root = if disc >= 0.0 { (-(1.0 - z2) + disc.sqrt()) / 2.0 } else { f64::NEG_INFINITY };
        let oracle = floor.max(root);
        prop_assert!((quasiconvex_level_eval([z1, z2]) - oracle).abs() <= 1e-9);
    }

    #[test]
    fn level_function_is_quasiconvex(
        a in (-2.0..2.0f64, -2.0..2.0f64),
        b in (-2.0..2.0f64, -2.0..2.0f64),
        t in 0.0..1.0f64,
    ) {
        let mid = [t * a.0 + (1.0 - t) * b.0, t * a.1 + (1.0 - t) * b.1];
        let g = quasiconvex_level_eval;
        prop_assert!(g(mid) <= g([a.0, a.1]).max(g([b.0, b.1])) + 1e-9);
    }

    #[test]
    fn effective_cost_is_convex(
        a1 in 0.2..3.0f64,
        a2 in 0.2..3.0f64,
        w1 in 0.0..30.0f64,
        w2 in 0.0..30.0f64,
    ) {
        let params = TwoServerParams { a1, a2, ..TwoServerParams::default() };
        let data = NetworkData::two_server(&params).unwrap();
        let m = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
        let pi = DVector::from_column_slice(&[1.0, 0.5]);
        let (red, _) = reduce_network(&data, Some(&m), Some(&pi)).unwrap();
        let ec = EffectiveCost::new(&data, &red);
        let g = |w: f64| ec.minimize_on_fiber(&[w]).unwrap().gcheck;
        prop_assert!(g(0.5 * (w1 + w2)) <= 0.5 * (g(w1) + g(w2)) + 1e-8);
    }

    #[test]
    fn mode_maps_reproduce_the_pushes(v4 in 0.05..1.45f64, l1 in 0.0..10.0f64, l2 in 0.0..10.0f64) {
        let data = NetworkData::two_server(&TwoServerParams { v4, ..TwoServerParams::default() }).unwrap();
        let m = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
        let pi = DVector::from_column_slice(&[1.0, 0.5]);
        let (red, _) = reduce_network(&data, Some(&m), Some(&pi)).unwrap();
        let modes = mode_reduction(&red.g, &red.kappa).unwrap();
        let u = modes.control(l1, l2);
        prop_assert!(u.iter().all(|x| *x >= 0.0));
        prop_assert!(((&red.g * &u)[0] - (l1 - l2)).abs() <= 1e-10 * (1.0 + l1 + l2));
        prop_assert!((red.kappa.dot(&u) - (modes.l1 * l1 + modes.l2 * l2)).abs() <= 1e-10 * (1.0 + l1 + l2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn paths_depend_only_on_seed_and_index(seed in any::<u64>(), idx in 0u64..1000) {
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        let gamma = DMatrix::from_element(1, 1, 10.4);
        let a = simulate_bm(&[0.0], &[0.0], &gamma, &grid, seed, idx).unwrap();
        let b = simulate_bm(&[0.0], &[0.0], &gamma, &grid, seed, idx).unwrap();
        let c = simulate_bm(&[0.0], &[0.0], &gamma, &grid, seed, idx + 1).unwrap();
        prop_assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert!(a.data != c.data);
    }

    #[test]
    fn raising_the_down_price_never_lowers_cost(seed in any::<u64>(), b_star in 0.5..10.0f64, extra in 0.0..1.0f64) {
        let model = TwoServerModel::new(TwoServerParams::default()).unwrap();
        let grid = TimeGrid::new(0.01, 20.0).unwrap();
        let cost = barrier_path_cost(&model.reduced, &model.ec, 0.1, 0.0, b_star, &grid, seed, 0).unwrap();
        let (l1, l2) = (model.modes.l1, model.modes.l2);
        prop_assert!(cost.total(l1, l2 + extra) >= cost.total(l1, l2));
    }
}
