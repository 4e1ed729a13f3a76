//! Tabular constrained Markov decision processes with optimistic exploration.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the ground-truth finite-horizon CMDP, tabular policies,
//!   exact backward-induction evaluation, occupancy measures and episode
//!   simulation.
//! * [`confidence`] maintains visit counters and empirical estimates and turns
//!   them into optimistic costs and per-entry transition confidence boxes.
//! * [`extended_dp`] plans in the extended MDP where transitions are picked
//!   inside the confidence boxes during backward induction.
//! * [`frank_wolfe`] minimises the augmented-Lagrangian primal objective over
//!   the state-action-state occupancy polytope, using extended DP as the
//!   linear minimisation oracle.
//! * [`optaug`] and [`optdual`] are the two learners: the augmented-Lagrangian
//!   learner with a pre-training phase, and the projected dual-gradient
//!   baseline.
//! * [`oracle`] solves the true CMDP exactly through its occupancy LP (with the
//!   dense simplex in [`simplex`]) and keeps strong/weak regret ledgers.

pub mod confidence;
pub mod error;
pub mod extended_dp;
pub mod frank_wolfe;
pub mod model;
pub mod optaug;
pub mod optdual;
pub mod oracle;
pub mod simplex;

mod episode;

pub use error::{CmdpError, Result};
pub use episode::{EpisodeRecord, Phase, RunReport};
pub use model::{Cmdp, CostNoise, Kernel, OccupancyQ, SaTable, Shape, TabularPolicy, Trajectory};
