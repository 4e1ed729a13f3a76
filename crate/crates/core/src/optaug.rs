//! Augmented-Lagrangian learner with a pre-training phase.
//!
//! The first `K'` episodes play the known strictly feasible policy so that the
//! optimistic models are feasible with margin afterwards. Every later episode
//! approximately minimises the augmented-Lagrangian primal objective over the
//! optimistic occupancy polytope with [`solve_inner`] and then takes the dual
//! step `lambda <- [lambda + eta (V^pi(d~, p~) - alpha)]_+`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::ConfidenceModel;
use crate::episode::{EpisodeRecord, Phase, RunReport};
use crate::error::{CmdpError, Result};
use crate::frank_wolfe::{solve_inner, AugLagObjective, InnerOptions, OccupancyZ, StepRule};
use crate::model::{evaluate_value, sample_episode, Cmdp, Kernel, TabularPolicy};

/// Known policy with constraint slack at least `gamma` on the true model.
#[derive(Clone, Debug, PartialEq)]
pub struct SafeBaseline {
    pub policy: TabularPolicy,
    pub gamma: f64,
}

impl SafeBaseline {
    pub fn new(policy: TabularPolicy, gamma: f64) -> Result<Self> {
        let horizon = policy.shape().horizon as f64;
        if !(gamma > 0.0 && gamma <= horizon) {
            return Err(CmdpError::Config(format!("baseline slack must lie in (0, {horizon}], got {gamma}")));
        }
        Ok(Self { policy, gamma })
    }

    /// `min_i (alpha_i - V^pi(d_i, p))` on the true model.
    pub fn slack_on(&self, cmdp: &Cmdp) -> Result<f64> {
        let values = cmdp.constraint_values(&self.policy)?;
        Ok(values
            .iter()
            .zip(cmdp.thresholds())
            .map(|(v, a)| a - v)
            .fold(f64::INFINITY, f64::min))
    }
}

/// `ceil(multiplier * max{2 S^2 A H^3 / ((1-nu) gamma), 4 N S A H^4 / ((1-nu)^2 gamma^2)})`
/// where `N` bounds the number of successors.
pub fn pretraining_length(
    states: usize,
    actions: usize,
    horizon: usize,
    successors: usize,
    gamma: f64,
    nu: f64,
    multiplier: f64,
) -> Result<usize> {
    if !(gamma > 0.0) {
        return Err(CmdpError::Config(format!("slack gamma must be positive, got {gamma}")));
    }
    if !(nu > 0.0 && nu < 1.0) {
        return Err(CmdpError::Config(format!("nu must lie in (0, 1), got {nu}")));
    }
    if !(multiplier > 0.0) || !multiplier.is_finite() {
        return Err(CmdpError::Config(format!("multiplier must be positive, got {multiplier}")));
    }
    let (s, a, h, n) = (states as f64, actions as f64, horizon as f64, successors as f64);
    let first = 2.0 * s * s * a * h.powi(3) / ((1.0 - nu) * gamma);
    let second = 4.0 * n * s * a * h.powi(4) / ((1.0 - nu).powi(2) * gamma * gamma);
    let length = (multiplier * first.max(second)).ceil();
    if length >= usize::MAX as f64 {
        return Err(CmdpError::Config("pre-training length overflows".into()));
    }
    Ok(length as usize)
}

/// Episode counts, step sizes and inner accuracies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub episodes: usize,
    pub pretraining: usize,
    pub nu: f64,
    pub sigma: f64,
    pub step_rule: StepRule,
    /// Per-episode limit on Frank-Wolfe iterations on top of the smoothness cap.
    pub inner_budget: Option<u64>,
}

impl Schedule {
    /// `sigma = H / (nu gamma)`.
    pub fn new(episodes: usize, pretraining: usize, nu: f64, gamma: f64, horizon: usize) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(CmdpError::Config(format!("slack gamma must be positive, got {gamma}")));
        }
        Self::with_sigma(episodes, pretraining, nu, horizon as f64 / (nu * gamma))
    }

    pub fn with_sigma(episodes: usize, pretraining: usize, nu: f64, sigma: f64) -> Result<Self> {
        let schedule = Self {
            episodes,
            pretraining,
            nu,
            sigma,
            step_rule: StepRule::FullyCorrective,
            inner_budget: Some(2_000),
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(CmdpError::Config("at least one episode is required".into()));
        }
        if self.pretraining > self.episodes {
            return Err(CmdpError::Config(format!(
                "pre-training length {} exceeds the {} planned episodes",
                self.pretraining, self.episodes
            )));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(CmdpError::Config(format!("nu must lie in (0, 1), got {}", self.nu)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(CmdpError::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Step size of the `j`-th exploration episode (`j >= 1`): `((2 + 3j) sigma)^2.5`.
    pub fn eta(&self, j: usize) -> f64 {
        ((2.0 + 3.0 * j as f64) * self.sigma).powf(2.5)
    }

    /// `1 / (2 eta_j)`.
    pub fn eps(&self, j: usize) -> f64 {
        1.0 / (2.0 * self.eta(j))
    }

    /// `(2 + 3j) sigma`, the bound on `||lambda||` after the `j`-th exploration episode.
    pub fn dual_bound(&self, j: usize) -> f64 {
        (2.0 + 3.0 * j as f64) * self.sigma
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    lambda: Vec<f64>,
}

impl DualState {
    pub fn zeros(num_constraints: usize) -> Self {
        Self {
            lambda: vec![0.0; num_constraints],
        }
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn norm(&self) -> f64 {
        self.lambda.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    /// `lambda <- [lambda + eta (values - alpha)]_+`.
    pub fn step(&mut self, eta: f64, values: &[f64], alpha: &[f64]) {
        for ((l, v), a) in self.lambda.iter_mut().zip(values).zip(alpha) {
            *l = (*l + eta * (v - a)).max(0.0);
        }
    }
}

pub(crate) fn check_run_inputs(cmdp: &Cmdp, policy: &TabularPolicy) -> Result<()> {
    if policy.shape() != cmdp.shape() {
        return Err(CmdpError::Dimension("policy and model shapes differ".into()));
    }
    Ok(())
}

/// Runs the learner for `schedule.episodes` episodes, handing every episode
/// record to `sink` as soon as it is complete.
pub fn run_optaug<R, F>(
    cmdp: &Cmdp,
    baseline: &SafeBaseline,
    schedule: &Schedule,
    delta: f64,
    rng: &mut R,
    mut sink: F,
) -> Result<RunReport>
where
    R: Rng + ?Sized,
    F: FnMut(&EpisodeRecord),
{
    schedule.validate()?;
    check_run_inputs(cmdp, &baseline.policy)?;
    let shape = cmdp.shape();
    let ni = cmdp.num_constraints();
    let alpha = cmdp.thresholds().to_vec();
    let s1 = cmdp.initial_state();
    let mut model = ConfidenceModel::new(shape, ni, schedule.episodes, delta)?;
    let mut success = true;
    let mut total_fw = 0u64;
    let zeros = vec![0.0; ni];

    for k in 1..=schedule.pretraining {
        let covers = model.covers(cmdp);
        success &= covers;
        let trajectory = sample_episode(cmdp, &baseline.policy, rng)?;
        model.update(&trajectory)?;
        sink(&EpisodeRecord {
            k,
            phase: Phase::Pretrain,
            policy: baseline.policy.clone(),
            lambda: zeros.clone(),
            lambda_next: zeros.clone(),
            eta: None,
            eps: None,
            fw_iters: 0,
            fw_gap: None,
            inner_stop: None,
            optimistic_constraint_values: Vec::new(),
            model_covers_truth: covers,
        });
    }

    let options = InnerOptions {
        step_rule: schedule.step_rule,
        max_iterations: schedule.inner_budget,
    };
    let mut dual = DualState::zeros(ni);
    let mut previous: Option<(TabularPolicy, Kernel)> = None;
    let mut last_policy = baseline.policy.clone();
    for k in schedule.pretraining + 1..=schedule.episodes {
        let j = k - schedule.pretraining;
        let covers = model.covers(cmdp);
        success &= covers;
        let optimistic = model.snapshot();
        let boxes = &optimistic.boxes;
        boxes.validate()?;
        let (eta, eps) = (schedule.eta(j), schedule.eps(j));
        let f = AugLagObjective::new(
            optimistic.costs.objective.clone(),
            optimistic.costs.constraints.clone(),
            alpha.clone(),
            dual.lambda().to_vec(),
            eta,
        )?;
        let warm = match &previous {
            Some((policy, kernel)) => OccupancyZ::from_policy_kernel(policy, &boxes.clip_kernel(kernel), s1)?,
            None => OccupancyZ::from_policy_kernel(&baseline.policy, &boxes.center_kernel(), s1)?,
        };
        let solution = solve_inner(&f, boxes, s1, eps, Some(&warm), &options).map_err(|e| CmdpError::InnerSolver {
            episode: k,
            reason: e.to_string(),
        })?;
        total_fw += solution.iterations;
        let values = optimistic
            .costs
            .constraints
            .iter()
            .map(|d| evaluate_value(&solution.transitions, d, &solution.policy, s1))
            .collect::<Result<Vec<f64>>>()?;
        let lambda = dual.lambda().to_vec();
        dual.step(eta, &values, &alpha);

        let trajectory = sample_episode(cmdp, &solution.policy, rng)?;
        model.update(&trajectory)?;
        sink(&EpisodeRecord {
            k,
            phase: Phase::Explore,
            policy: solution.policy.clone(),
            lambda,
            lambda_next: dual.lambda().to_vec(),
            eta: Some(eta),
            eps: Some(eps),
            fw_iters: solution.iterations,
            fw_gap: Some(solution.fw_gap),
            inner_stop: Some(solution.stop),
            optimistic_constraint_values: values,
            model_covers_truth: covers,
        });
        last_policy = solution.policy.clone();
        previous = Some((solution.policy, solution.transitions));
    }

    Ok(RunReport {
        episodes: schedule.episodes,
        pretraining_episodes: schedule.pretraining,
        final_lambda: dual.lambda().to_vec(),
        total_fw_iterations: total_fw,
        success_event: success,
        final_policy: last_policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pretraining_length_arithmetic() {
        // max{2*4*2*8/0.5, 4*2*2*2*16/0.25} = max{256, 2048}
        assert_eq!(pretraining_length(2, 2, 2, 2, 1.0, 0.5, 1.0).unwrap(), 2048);
        assert_eq!(pretraining_length(2, 2, 2, 2, 2.0, 0.5, 1.0).unwrap(), 512);
        assert_eq!(pretraining_length(2, 2, 2, 2, 1.0, 0.5, 3.0).unwrap(), 6144);
        assert!(pretraining_length(2, 2, 2, 2, 1.0, 1.0, 1.0).is_err());
        assert!(pretraining_length(2, 2, 2, 2, 0.0, 0.5, 1.0).is_err());
        assert!(pretraining_length(2, 2, 2, 2, -1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn schedule_formulas() {
        let sch = Schedule::new(10, 3, 0.5, 2.0, 4).unwrap();
        assert_eq!(sch.sigma, 4.0);
        assert!((sch.eta(1) - 20f64.powf(2.5)).abs() < 1e-9);
        assert_eq!(sch.eps(2), 1.0 / (2.0 * sch.eta(2)));
        assert!(Schedule::new(3, 4, 0.5, 1.0, 2).is_err());
    }

    #[test]
    fn dual_step_clamps() {
        let mut dual = DualState::zeros(1);
        dual.step(1.0, &[3.0], &[1.0]);
        assert_eq!(dual.lambda(), &[2.0]);
        let mut dual = DualState::zeros(1);
        dual.step(1.0, &[-4.0], &[1.0]);
        assert_eq!(dual.lambda(), &[0.0]);
    }
}
