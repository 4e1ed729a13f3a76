//! Instance generators. Every generator also returns a strictly feasible
//! baseline whose slack is checked on the generated model.

use std::path::PathBuf;

use cmdp_core::optaug::SafeBaseline;
use cmdp_core::{Cmdp, CostNoise, Kernel, SaTable, Shape, TabularPolicy};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// Dirichlet kernels and uniform costs, with one action per `(h, s)` that
    /// has zero constraint cost.
    RandomCmdp {
        states: usize,
        actions: usize,
        horizon: usize,
        constraints: usize,
        /// Thresholds are `threshold_fraction * H`.
        #[serde(default = "default_threshold_fraction")]
        threshold_fraction: f64,
        #[serde(default = "default_concentration")]
        concentration: f64,
        #[serde(default)]
        cost_noise: CostNoise,
    },
    /// Line of states starting at the left end. Action 0 stays put at no
    /// constraint cost; action 1 moves right with probability
    /// `success_probability`, halves the objective cost and pays
    /// `move_cost` in the constraint.
    ChainWalk {
        states: usize,
        horizon: usize,
        threshold: f64,
        #[serde(default = "default_success_probability")]
        success_probability: f64,
        #[serde(default = "default_move_cost")]
        move_cost: f64,
        #[serde(default)]
        cost_noise: CostNoise,
    },
    /// CMDP document on disk. The baseline is the given per-step state
    /// action table (`h * S + s`) with the stated slack.
    File {
        path: PathBuf,
        baseline_actions: Vec<usize>,
        gamma: f64,
    },
}

fn default_threshold_fraction() -> f64 {
    0.3
}

fn default_concentration() -> f64 {
    1.0
}

fn default_success_probability() -> f64 {
    0.8
}

fn default_move_cost() -> f64 {
    1.0
}

impl InstanceSpec {
    pub fn chain_walk(states: usize, horizon: usize, threshold: f64) -> Self {
        InstanceSpec::ChainWalk {
            states,
            horizon,
            threshold,
            success_probability: default_success_probability(),
            move_cost: default_move_cost(),
            cost_noise: CostNoise::default(),
        }
    }

    pub fn random(states: usize, actions: usize, horizon: usize, constraints: usize) -> Self {
        InstanceSpec::RandomCmdp {
            states,
            actions,
            horizon,
            constraints,
            threshold_fraction: default_threshold_fraction(),
            concentration: default_concentration(),
            cost_noise: CostNoise::default(),
        }
    }
}

/// Builds the instance and certifies the baseline's slack on it.
pub fn generate_instance<R: Rng + ?Sized>(spec: &InstanceSpec, rng: &mut R) -> Result<(Cmdp, SafeBaseline), BenchError> {
    let (cmdp, baseline) = match spec {
        InstanceSpec::RandomCmdp {
            states,
            actions,
            horizon,
            constraints,
            threshold_fraction,
            concentration,
            cost_noise,
        } => random_cmdp(
            *states,
            *actions,
            *horizon,
            *constraints,
            *threshold_fraction,
            *concentration,
            *cost_noise,
            rng,
        )?,
        InstanceSpec::ChainWalk {
            states,
            horizon,
            threshold,
            success_probability,
            move_cost,
            cost_noise,
        } => chain_walk(*states, *horizon, *threshold, *success_probability, *move_cost, *cost_noise)?,
        InstanceSpec::File {
            path,
            baseline_actions,
            gamma,
        } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| BenchError::Config(format!("cannot read instance {}: {e}", path.display())))?;
            let cmdp = Cmdp::from_json_str(&text)
                .map_err(|e| BenchError::Config(format!("instance {}: {e}", path.display())))?;
            let policy = TabularPolicy::deterministic(cmdp.shape(), baseline_actions)
                .map_err(|e| BenchError::Config(format!("baseline_actions: {e}")))?;
            let baseline = SafeBaseline::new(policy, *gamma)?;
            (cmdp, baseline)
        }
    };
    let slack = baseline.slack_on(&cmdp)?;
    if slack < baseline.gamma - 1e-12 {
        return Err(BenchError::Config(format!(
            "baseline slack {slack} is below the declared gamma {}",
            baseline.gamma
        )));
    }
    Ok((cmdp, baseline))
}

fn check_positive(name: &str, value: usize) -> Result<(), BenchError> {
    if value == 0 {
        return Err(BenchError::Config(format!("{name} must be positive")));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn random_cmdp<R: Rng + ?Sized>(
    states: usize,
    actions: usize,
    horizon: usize,
    constraints: usize,
    threshold_fraction: f64,
    concentration: f64,
    cost_noise: CostNoise,
    rng: &mut R,
) -> Result<(Cmdp, SafeBaseline), BenchError> {
    check_positive("states", states)?;
    check_positive("actions", actions)?;
    check_positive("horizon", horizon)?;
    check_positive("constraints", constraints)?;
    if !(threshold_fraction > 0.0 && threshold_fraction <= 1.0) {
        return Err(BenchError::Config(format!(
            "threshold_fraction must lie in (0, 1], got {threshold_fraction}"
        )));
    }
    let shape = Shape::new(states, actions, horizon)?;
    let mut probs = Vec::with_capacity(shape.sas_len());
    if states == 1 {
        probs.resize(shape.sas_len(), 1.0);
    } else {
        // normalised Gamma(concentration) draws are Dirichlet distributed
        let gamma = Gamma::new(concentration, 1.0)
            .map_err(|e| BenchError::Config(format!("concentration {concentration}: {e}")))?;
        for _ in 0..shape.sa_len() {
            let mut row: Vec<f64> = (0..states).map(|_| gamma.sample(rng)).collect();
            let mut total: f64 = row.iter().sum();
            if !(total > 0.0) {
                row.fill(1.0);
                total = states as f64;
            }
            probs.extend(row.iter().map(|p| p / total));
        }
    }
    let kernel = Kernel::from_vec(shape, probs)?;
    let objective = SaTable::from_fn(shape, |_, _, _| rng.random::<f64>());
    let safe: Vec<usize> = (0..horizon * states).map(|_| rng.random_range(0..actions)).collect();
    let constraint_tables = (0..constraints)
        .map(|_| {
            SaTable::from_fn(shape, |h, s, a| {
                let draw = rng.random::<f64>();
                if safe[h * states + s] == a {
                    0.0
                } else {
                    draw
                }
            })
        })
        .collect();
    let alpha = threshold_fraction * horizon as f64;
    let cmdp = Cmdp::new(kernel, objective, constraint_tables, vec![alpha; constraints], 0, cost_noise)?;
    let baseline = SafeBaseline::new(TabularPolicy::deterministic(shape, &safe)?, alpha)?;
    Ok((cmdp, baseline))
}

fn chain_walk(
    states: usize,
    horizon: usize,
    threshold: f64,
    success_probability: f64,
    move_cost: f64,
    cost_noise: CostNoise,
) -> Result<(Cmdp, SafeBaseline), BenchError> {
    if states < 2 {
        return Err(BenchError::Config("chain-walk needs at least two states".into()));
    }
    check_positive("horizon", horizon)?;
    if !(0.0..=1.0).contains(&success_probability) || !(0.0..=1.0).contains(&move_cost) {
        return Err(BenchError::Config(
            "success_probability and move_cost must lie in [0, 1]".into(),
        ));
    }
    let shape = Shape::new(states, 2, horizon)?;
    let last = states - 1;
    let kernel = Kernel::from_fn(shape, |_, s, a, next| {
        let right = (s + 1).min(last);
        match a {
            0 => f64::from(u8::from(next == s)),
            _ if right == s => f64::from(u8::from(next == s)),
            _ if next == right => success_probability,
            _ if next == s => 1.0 - success_probability,
            _ => 0.0,
        }
    })?;
    let objective = SaTable::from_fn(shape, |_, s, a| {
        let base = (last - s) as f64 / last as f64;
        if a == 0 {
            base
        } else {
            0.5 * base
        }
    });
    let constraint = SaTable::from_fn(shape, |_, _, a| if a == 0 { 0.0 } else { move_cost });
    let cmdp = Cmdp::new(kernel, objective, vec![constraint], vec![threshold], 0, cost_noise)?;
    let baseline = SafeBaseline::new(TabularPolicy::deterministic(shape, &vec![0; horizon * states])?, threshold)?;
    Ok((cmdp, baseline))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_baseline_has_exact_slack() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = InstanceSpec::random(4, 3, 4, 2);
        let (cmdp, baseline) = generate_instance(&spec, &mut rng).unwrap();
        assert_eq!(baseline.slack_on(&cmdp).unwrap(), 0.3 * 4.0);
        assert_eq!(baseline.gamma, 0.3 * 4.0);
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = InstanceSpec::random(3, 2, 3, 1);
        let a = generate_instance(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap().0;
        let b = generate_instance(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap().0;
        assert_eq!(a.to_json_string().unwrap(), b.to_json_string().unwrap());
    }

    #[test]
    fn chain_walk_shape() {
        let (cmdp, baseline) = generate_instance(&InstanceSpec::chain_walk(5, 6, 2.0), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(cmdp.objective_value(&baseline.policy).unwrap(), 6.0);
        assert_eq!(cmdp.kernel().get(0, 4, 1, 4), 1.0);
        assert_eq!(cmdp.kernel().get(0, 1, 1, 2), 0.8);
    }

    #[test]
    fn spec_json_is_tagged() {
        let spec: InstanceSpec = serde_json::from_str(r#"{"generator":"chain-walk","states":5,"horizon":6,"threshold":2.0}"#).unwrap();
        assert_eq!(spec, InstanceSpec::chain_walk(5, 6, 2.0));
        assert!(serde_json::from_str::<InstanceSpec>(r#"{"generator":"chain-walk","states":5}"#).is_err());
    }
}
