mod common;

use cmdp_core::optaug::{run_optaug, SafeBaseline, Schedule};
use cmdp_core::optdual::{run_optdual, OptDualConfig};
use cmdp_core::{EpisodeRecord, Phase, Shape, TabularPolicy};

use common::*;

fn loose_instance(seed: u64) -> cmdp_core::Cmdp {
    let mut r = rng(seed);
    let shape = Shape::new(3, 2, 3).unwrap();
    let cmdp = random_cmdp(&mut r, shape, 2);
    cmdp.with_thresholds(vec![shape.horizon as f64; 2]).unwrap()
}

fn baseline(cmdp: &cmdp_core::Cmdp) -> SafeBaseline {
    SafeBaseline::new(TabularPolicy::uniform(cmdp.shape()), 0.1).unwrap()
}

fn collect_optaug(cmdp: &cmdp_core::Cmdp, schedule: &Schedule, seed: u64) -> Vec<EpisodeRecord> {
    let mut out = Vec::new();
    run_optaug(cmdp, &baseline(cmdp), schedule, 0.1, &mut rng(seed), |r| out.push(r.clone())).unwrap();
    out
}

#[test]
fn slack_thresholds_keep_multipliers_at_zero() {
    let cmdp = loose_instance(1);
    let schedule = Schedule::with_sigma(40, 5, 0.5, 2.0).unwrap();
    for record in collect_optaug(&cmdp, &schedule, 3) {
        assert!(record.lambda_next.iter().all(|l| *l == 0.0), "k={} {:?}", record.k, record.lambda_next);
    }
    let config = OptDualConfig::new(1.0, 3, 2, 40).unwrap();
    let mut records = Vec::new();
    run_optdual(&cmdp, &config, 0.1, 40, &mut rng(3), |r| records.push(r.clone())).unwrap();
    assert!(records.iter().all(|r| r.lambda_next.iter().all(|l| *l == 0.0)));
}

#[test]
fn pretraining_plays_baseline_without_dual_updates() {
    let cmdp = random_cmdp(&mut rng(4), Shape::new(3, 2, 3).unwrap(), 1);
    let schedule = Schedule::with_sigma(20, 8, 0.5, 1.5).unwrap();
    let records = collect_optaug(&cmdp, &schedule, 5);
    assert_eq!(records.len(), 20);
    for r in &records[..8] {
        assert_eq!(r.phase, Phase::Pretrain);
        assert_eq!(r.policy, baseline(&cmdp).policy);
        assert_eq!(r.lambda_next, vec![0.0]);
        assert_eq!(r.fw_iters, 0);
        assert!(r.eta.is_none());
    }
    assert!(records[8..].iter().all(|r| r.phase == Phase::Explore));
    assert_eq!(records.iter().map(|r| r.k).collect::<Vec<_>>(), (1..=20).collect::<Vec<_>>());
}

#[test]
fn records_follow_schedule_and_dual_step() {
    let cmdp = random_cmdp(&mut rng(6), Shape::new(3, 2, 3).unwrap(), 2);
    let schedule = Schedule::with_sigma(25, 4, 0.5, 0.3).unwrap();
    let records = collect_optaug(&cmdp, &schedule, 7);
    for r in records.iter().filter(|r| r.phase == Phase::Explore) {
        let j = r.k - 4;
        let eta = ((2.0 + 3.0 * j as f64) * 0.3f64).powf(2.5);
        assert!((r.eta.unwrap() - eta).abs() <= 1e-12 * eta);
        assert!((r.eps.unwrap() - 1.0 / (2.0 * eta)).abs() <= 1e-12 / eta);
        for i in 0..2 {
            let expected = (r.lambda[i] + eta * (r.optimistic_constraint_values[i] - cmdp.thresholds()[i])).max(0.0);
            assert_eq!(r.lambda_next[i], expected);
        }
    }
    for pair in records.windows(2) {
        assert_eq!(pair[0].lambda_next, pair[1].lambda);
    }
}

#[test]
fn optdual_dual_step_and_step_size() {
    let cmdp = random_cmdp(&mut rng(8), Shape::new(3, 2, 2).unwrap(), 1);
    let config = OptDualConfig::new(2.0, 2, 1, 30).unwrap();
    assert!((config.eta - (4.0f64 / (4.0 * 30.0)).sqrt()).abs() < 1e-15);
    let mut records = Vec::new();
    let report = run_optdual(&cmdp, &config, 0.1, 30, &mut rng(9), |r| records.push(r.clone())).unwrap();
    assert_eq!(report.pretraining_episodes, 0);
    for r in &records {
        let expected = (r.lambda[0] + config.eta * (r.optimistic_constraint_values[0] - cmdp.thresholds()[0])).max(0.0);
        assert_eq!(r.lambda_next[0], expected);
        assert!(r.policy.is_deterministic());
    }
    assert_eq!(report.final_lambda, records.last().unwrap().lambda_next);
}

#[test]
fn runs_are_reproducible() {
    let cmdp = random_cmdp(&mut rng(10), Shape::new(3, 2, 3).unwrap(), 1);
    let schedule = Schedule::with_sigma(20, 3, 0.5, 1.0).unwrap();
    assert_eq!(collect_optaug(&cmdp, &schedule, 11), collect_optaug(&cmdp, &schedule, 11));
    assert_ne!(collect_optaug(&cmdp, &schedule, 11), collect_optaug(&cmdp, &schedule, 12));
}

#[test]
fn bad_inputs_are_rejected() {
    let cmdp = random_cmdp(&mut rng(12), Shape::new(2, 2, 2).unwrap(), 1);
    let wrong = SafeBaseline::new(TabularPolicy::uniform(Shape::new(3, 2, 2).unwrap()), 0.5).unwrap();
    let schedule = Schedule::with_sigma(5, 1, 0.5, 1.0).unwrap();
    assert!(run_optaug(&cmdp, &wrong, &schedule, 0.1, &mut rng(0), |_| {}).is_err());
    assert!(run_optaug(&cmdp, &baseline(&cmdp), &schedule, 0.0, &mut rng(0), |_| {}).is_err());
    assert!(SafeBaseline::new(TabularPolicy::uniform(cmdp.shape()), 0.0).is_err());
}
