use std::path::{Path, PathBuf};

use cmdp_core::frank_wolfe::StepRule;
use serde::{Deserialize, Serialize};

use crate::instance::InstanceSpec;
use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Optaug,
    Optdual,
    Both,
}

impl Algorithm {
    pub fn expand(self) -> Vec<&'static str> {
        match self {
            Algorithm::Optaug => vec!["optaug"],
            Algorithm::Optdual => vec!["optdual"],
            Algorithm::Both => vec!["optaug", "optdual"],
        }
    }
}

/// One experiment. Precedence when building it from the CLI: flags, then the
/// config file, then these defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    /// Seed for the instance generator, separate from the run seeds.
    pub instance_seed: u64,
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub delta: f64,
    pub nu: f64,
    pub seeds: Vec<u64>,
    /// Exact pre-training length; computed from the bound when absent.
    pub kprime: Option<usize>,
    pub kprime_multiplier: f64,
    pub sigma: Option<f64>,
    /// Computed from the LP oracle and the baseline when absent.
    pub rho: Option<f64>,
    pub step_rule: StepRule,
    pub inner_budget: Option<u64>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            instance: InstanceSpec::chain_walk(5, 6, 2.0),
            instance_seed: 0,
            algorithm: Algorithm::Both,
            episodes: 10_000,
            delta: 0.1,
            nu: 0.5,
            seeds: vec![0],
            kprime: None,
            kprime_multiplier: 1.0,
            sigma: None,
            rho: None,
            step_rule: StepRule::FullyCorrective,
            inner_budget: Some(2_000),
            out: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            BenchError::Config(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |msg: String| Err(BenchError::Config(msg));
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        if self.episodes == 0 {
            return fail("episodes must be positive".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return fail(format!("nu must lie in (0, 1), got {}", self.nu));
        }
        if !(self.kprime_multiplier > 0.0) {
            return fail(format!("kprime_multiplier must be positive, got {}", self.kprime_multiplier));
        }
        if matches!(self.kprime, Some(k) if k > self.episodes) {
            return fail(format!("kprime exceeds the {} episodes", self.episodes));
        }
        if matches!(self.sigma, Some(s) if !(s > 0.0)) {
            return fail("sigma must be positive".into());
        }
        if matches!(self.rho, Some(r) if !(r > 0.0)) {
            return fail("rho must be positive".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return fail("seeds must be distinct".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"episodes": 50, "seeds": [1, 2]}"#).unwrap();
        assert_eq!(cfg.episodes, 50);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.delta, 0.1);
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            delta: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            seeds: vec![3, 3],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"episods": 5}"#).is_err());
    }
}
