mod common;

use cmdp_core::model::compute_occupancy;
use cmdp_core::oracle::solve_cmdp_exact;
use cmdp_core::{Cmdp, CostNoise, Kernel, SaTable, Shape};
use rand::Rng;

use common::*;

#[test]
fn unconstrained_lp_matches_value_iteration() {
    let mut r = rng(21);
    for _ in 0..30 {
        let shape = random_shape(&mut r, 4, 3, 4);
        let cmdp = random_cmdp(&mut r, shape, 1).with_thresholds(vec![shape.horizon as f64]).unwrap();
        let exact = solve_cmdp_exact(&cmdp).unwrap();
        let v = value_iteration(cmdp.kernel(), cmdp.objective());
        assert!((exact.value - v[0]).abs() < 1e-9, "{} vs {}", exact.value, v[0]);
        assert!(exact.duals.iter().all(|l| l.abs() < 1e-9));
    }
}

#[test]
fn lp_beats_random_feasible_policies() {
    let mut r = rng(22);
    for _ in 0..10 {
        let shape = random_shape(&mut r, 4, 3, 4);
        let ni = r.random_range(1..=2);
        let cmdp = random_cmdp(&mut r, shape, ni);
        let exact = solve_cmdp_exact(&cmdp).unwrap();
        assert!(exact.primal_residual <= 1e-9);
        assert!(exact.complementary_slackness < 1e-8);
        let values = cmdp.constraint_values(&exact.policy).unwrap();
        for (v, a) in values.iter().zip(cmdp.thresholds()) {
            assert!(*v <= a + 1e-8);
        }
        assert!((cmdp.objective_value(&exact.policy).unwrap() - exact.value).abs() < 1e-8);
        let mut checked = 0;
        for _ in 0..1000 {
            let policy = random_policy(&mut r, shape);
            let feasible = cmdp
                .constraint_values(&policy)
                .unwrap()
                .iter()
                .zip(cmdp.thresholds())
                .all(|(v, a)| *v <= *a);
            if feasible {
                checked += 1;
                assert!(exact.value <= cmdp.objective_value(&policy).unwrap() + 1e-9);
            }
        }
        assert!(checked > 0);
    }
}

#[test]
fn one_step_grid_search() {
    // two actions, one state, one step: minimise c.x subject to d.x <= alpha
    let shape = Shape::new(1, 2, 1).unwrap();
    let kernel = Kernel::from_vec(shape, vec![1.0, 1.0]).unwrap();
    let c = SaTable::from_vec(shape, vec![0.2, 0.9]).unwrap();
    let d = SaTable::from_vec(shape, vec![0.8, 0.1]).unwrap();
    let cmdp = Cmdp::new(kernel.clone(), c, vec![d], vec![0.45], 0, CostNoise::Deterministic).unwrap();
    let exact = solve_cmdp_exact(&cmdp).unwrap();
    let n = 1_000_000;
    let mut best = f64::INFINITY;
    for i in 0..=n {
        let x = i as f64 / n as f64;
        if 0.8 * x + 0.1 * (1.0 - x) <= 0.45 {
            best = best.min(0.2 * x + 0.9 * (1.0 - x));
        }
    }
    assert!((exact.value - best).abs() < 1e-5, "{} vs {}", exact.value, best);
    // x* = 0.5, value 0.55, multiplier 0.7 / 0.7 = 1
    assert!((exact.value - 0.55).abs() < 1e-12);
    assert!((exact.duals[0] - 1.0).abs() < 1e-12);
    let q = compute_occupancy(&exact.policy, &kernel, 0).unwrap();
    assert!((q.get(0, 0, 0) - 0.5).abs() < 1e-12);
}
