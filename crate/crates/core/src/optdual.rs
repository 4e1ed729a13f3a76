//! Projected dual-gradient learner. The policy step is linear in the
//! occupancy, so each episode needs a single extended-DP solve with reward
//! `c~ + sum_i lambda_i d~_i`.

use rand::Rng;

use crate::confidence::ConfidenceModel;
use crate::episode::{EpisodeRecord, Phase, RunReport};
use crate::error::{CmdpError, Result};
use crate::extended_dp::solve_extended_mdp;
use crate::model::{evaluate_value, sample_episode, Cmdp, TabularPolicy};
use crate::optaug::DualState;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptDualConfig {
    /// Ratio `(V^baseline(c) - V*(c)) / gamma`.
    pub rho: f64,
    pub eta: f64,
}

impl OptDualConfig {
    /// `eta = sqrt(rho^2 / (H^2 I K))`.
    pub fn new(rho: f64, horizon: usize, num_constraints: usize, episodes: usize) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(CmdpError::Config(format!("rho must be positive, got {rho}")));
        }
        if episodes == 0 || num_constraints == 0 {
            return Err(CmdpError::Config("need at least one episode and one constraint".into()));
        }
        let eta = (rho * rho / ((horizon * horizon * num_constraints * episodes) as f64)).sqrt();
        Ok(Self { rho, eta })
    }
}

pub fn run_optdual<R, F>(
    cmdp: &Cmdp,
    config: &OptDualConfig,
    delta: f64,
    episodes: usize,
    rng: &mut R,
    mut sink: F,
) -> Result<RunReport>
where
    R: Rng + ?Sized,
    F: FnMut(&EpisodeRecord),
{
    if !(config.eta > 0.0) || !config.eta.is_finite() {
        return Err(CmdpError::Config(format!("eta must be positive, got {}", config.eta)));
    }
    if episodes == 0 {
        return Err(CmdpError::Config("at least one episode is required".into()));
    }
    let shape = cmdp.shape();
    let alpha = cmdp.thresholds();
    let s1 = cmdp.initial_state();
    let mut model = ConfidenceModel::new(shape, cmdp.num_constraints(), episodes, delta)?;
    let mut dual = DualState::zeros(cmdp.num_constraints());
    let mut success = true;
    let mut last_policy = TabularPolicy::uniform(shape);
    for k in 1..=episodes {
        let covers = model.covers(cmdp);
        success &= covers;
        let optimistic = model.snapshot();
        let mut reward = optimistic.costs.objective.clone();
        for (d, l) in optimistic.costs.constraints.iter().zip(dual.lambda()) {
            if *l != 0.0 {
                reward = reward.add_scaled(*l, d);
            }
        }
        let plan = solve_extended_mdp(&reward, &optimistic.boxes, s1)?;
        let values = optimistic
            .costs
            .constraints
            .iter()
            .map(|d| evaluate_value(&plan.transitions, d, &plan.policy, s1))
            .collect::<Result<Vec<f64>>>()?;
        let lambda = dual.lambda().to_vec();
        dual.step(config.eta, &values, alpha);
        let trajectory = sample_episode(cmdp, &plan.policy, rng)?;
        model.update(&trajectory)?;
        sink(&EpisodeRecord {
            k,
            phase: Phase::Explore,
            policy: plan.policy.clone(),
            lambda,
            lambda_next: dual.lambda().to_vec(),
            eta: Some(config.eta),
            eps: None,
            fw_iters: 0,
            fw_gap: None,
            inner_stop: None,
            optimistic_constraint_values: values,
            model_covers_truth: covers,
        });
        last_policy = plan.policy;
    }
    Ok(RunReport {
        episodes,
        pretraining_episodes: 0,
        final_lambda: dual.lambda().to_vec(),
        total_fw_iterations: 0,
        success_event: success,
        final_policy: last_policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_size_formula() {
        let cfg = OptDualConfig::new(3.0, 2, 1, 9).unwrap();
        assert!((cfg.eta - 0.5).abs() < 1e-15);
        assert!(OptDualConfig::new(0.0, 2, 1, 9).is_err());
    }
}
