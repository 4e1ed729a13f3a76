use serde::Serialize;

use crate::frank_wolfe::StopReason;
use crate::model::TabularPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Explore,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Explore => "explore",
        }
    }
}

/// What a learner did in one episode. `k` is 1-based and counts pre-training
/// episodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub k: usize,
    pub phase: Phase,
    /// Policy played on the true model.
    pub policy: TabularPolicy,
    /// Multipliers the policy was planned with.
    pub lambda: Vec<f64>,
    /// Multipliers after the dual step.
    pub lambda_next: Vec<f64>,
    pub eta: Option<f64>,
    pub eps: Option<f64>,
    pub fw_iters: u64,
    pub fw_gap: Option<f64>,
    pub inner_stop: Option<StopReason>,
    /// `V^pi(d~_i, p~)` on the optimistic model; empty during pre-training.
    pub optimistic_constraint_values: Vec<f64>,
    /// Whether the optimistic model used this episode was optimistic for the
    /// true model.
    pub model_covers_truth: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub episodes: usize,
    pub pretraining_episodes: usize,
    pub final_lambda: Vec<f64>,
    pub total_fw_iterations: u64,
    /// Optimism held in every episode.
    pub success_event: bool,
    pub final_policy: TabularPolicy,
}
