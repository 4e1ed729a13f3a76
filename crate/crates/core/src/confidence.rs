//! Visit counters, empirical estimates and the optimistic model built from
//! them.
//!
//! Costs use a Hoeffding bonus `sqrt(L / (n v 1))`, transitions an empirical
//! Bernstein radius per successor. Both log terms depend on the planned number
//! of episodes `K`, which therefore has to be fixed at construction.

use serde::Serialize;

use crate::error::{CmdpError, Result};
use crate::model::{Cmdp, Kernel, SaTable, Shape, Trajectory};

/// Slack used when checking that a box row intersects the simplex.
pub const BOX_FEASIBILITY_TOL: f64 = 1e-12;

/// `sqrt(log_term / max(n, 1))`.
#[inline]
pub fn hoeffding_bonus(log_term: f64, n: u64) -> f64 {
    (log_term / n.max(1) as f64).sqrt()
}

/// `2 sqrt(p (1 - p) L / (n v 1)) + (14/3) L / (n v 1)`.
#[inline]
pub fn bernstein_bonus(p_bar: f64, log_term: f64, n: u64) -> f64 {
    let n = n.max(1) as f64;
    let variance = (p_bar * (1.0 - p_bar)).max(0.0);
    2.0 * (variance * log_term / n).sqrt() + 14.0 / 3.0 * log_term / n
}

#[derive(Clone, Debug, Serialize)]
pub struct ConfidenceModel {
    shape: Shape,
    num_constraints: usize,
    planned_episodes: usize,
    delta: f64,
    log_term: f64,
    log_term_p: f64,
    episodes_seen: usize,
    counts: Vec<u64>,
    cost_mean: Vec<f64>,
    constraint_mean: Vec<Vec<f64>>,
    transition_counts: Vec<u64>,
}

impl ConfidenceModel {
    pub fn new(shape: Shape, num_constraints: usize, planned_episodes: usize, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(CmdpError::Config(format!("delta must lie in (0,1), got {delta}")));
        }
        if planned_episodes == 0 {
            return Err(CmdpError::Config("planned number of episodes K must be positive".into()));
        }
        let sah = (shape.states * shape.actions * shape.horizon) as f64;
        let k = planned_episodes as f64;
        let log_term = (6.0 * sah * (num_constraints as f64 + 1.0) * k / delta).ln();
        let log_term_p = (6.0 * sah * k / delta).ln();
        Ok(Self {
            shape,
            num_constraints,
            planned_episodes,
            delta,
            log_term,
            log_term_p,
            episodes_seen: 0,
            counts: vec![0; shape.sa_len()],
            cost_mean: vec![0.0; shape.sa_len()],
            constraint_mean: vec![vec![0.0; shape.sa_len()]; num_constraints],
            transition_counts: vec![0; shape.sas_len()],
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn num_constraints(&self) -> usize {
        self.num_constraints
    }

    pub fn planned_episodes(&self) -> usize {
        self.planned_episodes
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `L_delta = log(6 S A H (I + 1) K / delta)`.
    pub fn log_term(&self) -> f64 {
        self.log_term
    }

    /// `L_delta^p = log(6 S A H K / delta)`.
    pub fn log_term_p(&self) -> f64 {
        self.log_term_p
    }

    pub fn episodes_seen(&self) -> usize {
        self.episodes_seen
    }

    #[inline]
    pub fn count(&self, h: usize, s: usize, a: usize) -> u64 {
        self.counts[self.shape.sa(h, s, a)]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    #[inline]
    pub fn cost_mean(&self, h: usize, s: usize, a: usize) -> f64 {
        self.cost_mean[self.shape.sa(h, s, a)]
    }

    #[inline]
    pub fn constraint_mean(&self, i: usize, h: usize, s: usize, a: usize) -> f64 {
        self.constraint_mean[i][self.shape.sa(h, s, a)]
    }

    /// Empirical transition frequency; all-zero rows where `n = 0`.
    #[inline]
    pub fn p_bar(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        let n = self.count(h, s, a);
        if n == 0 {
            0.0
        } else {
            self.transition_counts[self.shape.sas(h, s, a, next)] as f64 / n as f64
        }
    }

    pub fn update(&mut self, trajectory: &Trajectory) -> Result<()> {
        let shape = self.shape;
        if trajectory.steps.len() != shape.horizon {
            return Err(CmdpError::Dimension(format!(
                "trajectory has {} steps, model horizon is {}",
                trajectory.steps.len(),
                shape.horizon
            )));
        }
        for (h, step) in trajectory.steps.iter().enumerate() {
            if step.state >= shape.states || step.next_state >= shape.states || step.action >= shape.actions {
                return Err(CmdpError::Dimension(format!("step {h} indexes outside the model")));
            }
            if step.constraint_costs.len() != self.num_constraints {
                return Err(CmdpError::Dimension(format!(
                    "step {h} carries {} constraint costs, expected {}",
                    step.constraint_costs.len(),
                    self.num_constraints
                )));
            }
        }
        for (h, step) in trajectory.steps.iter().enumerate() {
            let idx = shape.sa(h, step.state, step.action);
            self.counts[idx] += 1;
            let n = self.counts[idx] as f64;
            self.cost_mean[idx] += (step.cost - self.cost_mean[idx]) / n;
            for (means, x) in self.constraint_mean.iter_mut().zip(&step.constraint_costs) {
                means[idx] += (x - means[idx]) / n;
            }
            self.transition_counts[shape.sas(h, step.state, step.action, step.next_state)] += 1;
        }
        self.episodes_seen += 1;
        Ok(())
    }

    pub fn cost_bonus(&self, h: usize, s: usize, a: usize) -> f64 {
        hoeffding_bonus(self.log_term, self.count(h, s, a))
    }

    pub fn transition_bonus(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        bernstein_bonus(self.p_bar(h, s, a, next), self.log_term_p, self.count(h, s, a))
    }

    /// `c~ = c_bar - beta`, `d~_i = d_bar_i - beta`; left unclipped.
    pub fn optimistic_costs(&self) -> OptimisticCosts {
        let shape = self.shape;
        let bonus = SaTable::from_fn(shape, |h, s, a| self.cost_bonus(h, s, a));
        let objective = SaTable::from_fn(shape, |h, s, a| self.cost_mean(h, s, a) - bonus.get(h, s, a));
        let constraints = (0..self.num_constraints)
            .map(|i| SaTable::from_fn(shape, |h, s, a| self.constraint_mean(i, h, s, a) - bonus.get(h, s, a)))
            .collect();
        OptimisticCosts { objective, constraints }
    }

    pub fn transition_box(&self) -> TransitionBox {
        let shape = self.shape;
        let len = shape.sas_len();
        let mut lower = Vec::with_capacity(len);
        let mut upper = Vec::with_capacity(len);
        let mut center = Vec::with_capacity(len);
        for h in 0..shape.horizon {
            for s in 0..shape.states {
                for a in 0..shape.actions {
                    for next in 0..shape.states {
                        let p = self.p_bar(h, s, a, next);
                        let beta = self.transition_bonus(h, s, a, next);
                        lower.push((p - beta).max(0.0));
                        upper.push((p + beta).min(1.0));
                        center.push(p);
                    }
                }
            }
        }
        TransitionBox {
            shape,
            lower,
            upper,
            center,
        }
    }

    pub fn snapshot(&self) -> OptimisticModel {
        OptimisticModel {
            costs: self.optimistic_costs(),
            boxes: self.transition_box(),
        }
    }

    /// Whether the current optimistic model is optimistic for `cmdp`:
    /// `c~ <= c`, `d~_i <= d_i` and every true row inside its box.
    pub fn covers(&self, cmdp: &Cmdp) -> bool {
        let shape = self.shape;
        for h in 0..shape.horizon {
            for s in 0..shape.states {
                for a in 0..shape.actions {
                    let beta = self.cost_bonus(h, s, a);
                    if self.cost_mean(h, s, a) - beta > cmdp.objective().get(h, s, a) {
                        return false;
                    }
                    for (i, d) in cmdp.constraints().iter().enumerate() {
                        if self.constraint_mean(i, h, s, a) - beta > d.get(h, s, a) {
                            return false;
                        }
                    }
                    for next in 0..shape.states {
                        let p = cmdp.kernel().get(h, s, a, next);
                        if (p - self.p_bar(h, s, a, next)).abs() > self.transition_bonus(h, s, a, next) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimisticCosts {
    pub objective: SaTable,
    pub constraints: Vec<SaTable>,
}

/// Everything a planner needs for one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimisticModel {
    pub costs: OptimisticCosts,
    pub boxes: TransitionBox,
}

/// Per-entry bounds `[lower, upper]` on `p_h(s' | s, a)`, with the empirical
/// frequencies they were built around.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionBox {
    shape: Shape,
    lower: Vec<f64>,
    upper: Vec<f64>,
    center: Vec<f64>,
}

impl TransitionBox {
    pub fn new(shape: Shape, lower: Vec<f64>, upper: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        let len = shape.sas_len();
        if lower.len() != len || upper.len() != len || center.len() != len {
            return Err(CmdpError::Dimension(format!("transition box needs {len} entries per bound")));
        }
        let b = Self {
            shape,
            lower,
            upper,
            center,
        };
        b.validate()?;
        Ok(b)
    }

    /// Degenerate box pinned to a known kernel.
    pub fn singleton(kernel: &Kernel) -> Self {
        let probs = kernel.probs().to_vec();
        Self {
            shape: kernel.shape(),
            lower: probs.clone(),
            upper: probs.clone(),
            center: probs,
        }
    }

    /// Box of half-width `radius` around `kernel`, clipped to `[0, 1]`.
    pub fn around(kernel: &Kernel, radius: f64) -> Self {
        let center = kernel.probs().to_vec();
        let lower = center.iter().map(|p| (p - radius).max(0.0)).collect();
        let upper = center.iter().map(|p| (p + radius).min(1.0)).collect();
        Self {
            shape: kernel.shape(),
            lower,
            upper,
            center,
        }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    fn range(&self, h: usize, s: usize, a: usize) -> std::ops::Range<usize> {
        let start = self.shape.sas(h, s, a, 0);
        start..start + self.shape.states
    }

    #[inline]
    pub fn lower(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.lower[self.range(h, s, a)]
    }

    #[inline]
    pub fn upper(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.upper[self.range(h, s, a)]
    }

    #[inline]
    pub fn center(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.center[self.range(h, s, a)]
    }

    /// Every row satisfies `lower <= upper` and `sum(lower) <= 1 <= sum(upper)`.
    pub fn validate(&self) -> Result<()> {
        let shape = self.shape;
        for h in 0..shape.horizon {
            for s in 0..shape.states {
                for a in 0..shape.actions {
                    let (lo, up) = (self.lower(h, s, a), self.upper(h, s, a));
                    let lower_sum: f64 = lo.iter().sum();
                    let upper_sum: f64 = up.iter().sum();
                    let ordered = lo.iter().zip(up).all(|(l, u)| *l >= 0.0 && l <= u && *u <= 1.0);
                    if !ordered
                        || lower_sum > 1.0 + BOX_FEASIBILITY_TOL
                        || upper_sum < 1.0 - BOX_FEASIBILITY_TOL
                    {
                        return Err(CmdpError::InfeasibleBox {
                            h,
                            s,
                            a,
                            lower_sum,
                            upper_sum,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, kernel: &Kernel, tol: f64) -> bool {
        kernel.shape() == self.shape
            && kernel
                .probs()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(p, (l, u))| *p >= l - tol && *p <= u + tol)
    }

    /// Moves `anchor` into the box and then shifts mass in proportion to the
    /// remaining room until the row sums to one.
    pub fn feasible_row(&self, h: usize, s: usize, a: usize, anchor: &[f64]) -> Vec<f64> {
        let (lo, up) = (self.lower(h, s, a), self.upper(h, s, a));
        let mut row: Vec<f64> = anchor
            .iter()
            .zip(lo.iter().zip(up))
            .map(|(x, (l, u))| x.clamp(*l, *u))
            .collect();
        let deficit = 1.0 - row.iter().sum::<f64>();
        if deficit > 0.0 {
            let room: f64 = row.iter().zip(up).map(|(x, u)| u - x).sum();
            if room > 0.0 {
                for (x, u) in row.iter_mut().zip(up) {
                    *x += deficit * (u - *x) / room;
                }
            }
        } else if deficit < 0.0 {
            let room: f64 = row.iter().zip(lo).map(|(x, l)| x - l).sum();
            if room > 0.0 {
                for (x, l) in row.iter_mut().zip(lo) {
                    *x -= -deficit * (*x - l) / room;
                }
            }
        }
        for (x, (l, u)) in row.iter_mut().zip(lo.iter().zip(up)) {
            *x = x.clamp(*l, *u);
        }
        row
    }

    /// Kernel whose rows are the in-box adjustment of the empirical rows.
    pub fn center_kernel(&self) -> Kernel {
        self.kernel_from_anchor(|h, s, a| self.center(h, s, a).to_vec())
    }

    /// Kernel whose rows are the in-box adjustment of the box midpoints.
    pub fn midpoint_kernel(&self) -> Kernel {
        self.kernel_from_anchor(|h, s, a| {
            self.lower(h, s, a)
                .iter()
                .zip(self.upper(h, s, a))
                .map(|(l, u)| 0.5 * (l + u))
                .collect()
        })
    }

    /// Kernel whose rows are the in-box adjustment of `anchor`'s rows.
    pub fn clip_kernel(&self, anchor: &Kernel) -> Kernel {
        self.kernel_from_anchor(|h, s, a| anchor.row(h, s, a).to_vec())
    }

    fn kernel_from_anchor(&self, anchor: impl Fn(usize, usize, usize) -> Vec<f64>) -> Kernel {
        let shape = self.shape;
        let mut probs = Vec::with_capacity(shape.sas_len());
        for h in 0..shape.horizon {
            for s in 0..shape.states {
                for a in 0..shape.actions {
                    probs.extend(self.feasible_row(h, s, a, &anchor(h, s, a)));
                }
            }
        }
        Kernel::from_vec_unchecked(shape, probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostNoise, Step};

    fn step(state: usize, action: usize, cost: f64, d: f64, next: usize) -> Step {
        Step {
            state,
            action,
            cost,
            constraint_costs: vec![d],
            next_state: next,
        }
    }

    fn model() -> ConfidenceModel {
        ConfidenceModel::new(Shape::new(2, 2, 2).unwrap(), 1, 100, 0.1).unwrap()
    }

    #[test]
    fn log_terms_follow_the_formulas() {
        let m = model();
        assert!((m.log_term() - (6.0 * 8.0 * 2.0 * 100.0 / 0.1f64).ln()).abs() < 1e-12);
        assert!((m.log_term_p() - (6.0 * 8.0 * 100.0 / 0.1f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn single_visit_updates_counts_and_means() {
        let mut m = model();
        m.update(&Trajectory {
            steps: vec![step(0, 1, 1.0, 0.0, 1), step(1, 0, 0.0, 1.0, 0)],
        })
        .unwrap();
        assert_eq!(m.count(0, 0, 1), 1);
        assert_eq!(m.cost_mean(0, 0, 1), 1.0);
        assert_eq!(m.constraint_mean(0, 1, 1, 0), 1.0);
        assert_eq!(m.p_bar(0, 0, 1, 1), 1.0);
        assert_eq!(m.count(0, 0, 0), 0);

        m.update(&Trajectory {
            steps: vec![step(0, 1, 0.0, 0.0, 0), step(0, 0, 0.0, 0.0, 0)],
        })
        .unwrap();
        assert_eq!(m.cost_mean(0, 0, 1), 0.5);
        assert_eq!(m.p_bar(0, 0, 1, 0), 0.5);
        assert_eq!(m.episodes_seen(), 2);
    }

    #[test]
    fn malformed_trajectory_is_rejected() {
        let mut m = model();
        let short = Trajectory {
            steps: vec![step(0, 0, 0.0, 0.0, 0)],
        };
        assert!(m.update(&short).is_err());
        assert_eq!(m.count(0, 0, 0), 0);
    }

    #[test]
    fn cost_bonus_arithmetic() {
        assert_eq!(hoeffding_bonus(1.0, 4), 0.5);
        assert_eq!(hoeffding_bonus(9.0, 0), 3.0);
        let mut last = f64::INFINITY;
        for n in 0..200 {
            let b = hoeffding_bonus(2.5, n);
            assert!(b <= last);
            last = b;
        }
    }

    #[test]
    fn transition_bonus_arithmetic() {
        assert!((bernstein_bonus(0.0, 3.0, 0) - 14.0).abs() < 1e-12);
        let b = bernstein_bonus(0.5, 1.0, 100);
        assert!((b - (0.1 + 14.0 / 300.0)).abs() < 1e-15);
        assert!((bernstein_bonus(1.0, 2.0, 10) - 14.0 / 3.0 * 0.2).abs() < 1e-15);
        assert!((bernstein_bonus(0.0, 2.0, 10) - 14.0 / 3.0 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn unvisited_model_is_maximally_optimistic() {
        let m = model();
        let costs = m.optimistic_costs();
        let expect = -m.log_term().sqrt();
        assert!(costs.objective.values().iter().all(|c| *c == expect));
        assert!(costs.constraints[0].values().iter().all(|c| *c == expect));
        let b = m.transition_box();
        b.validate().unwrap();
        assert!(b.lower(0, 0, 0).iter().all(|l| *l == 0.0));
        assert!(b.upper(0, 0, 0).iter().all(|u| *u == 1.0));
    }

    #[test]
    fn feasible_row_stays_in_box_and_sums_to_one() {
        let shape = Shape::new(3, 1, 1).unwrap();
        let b = TransitionBox::new(
            shape,
            [0.1, 0.0, 0.2].repeat(3),
            [0.5, 0.3, 0.9].repeat(3),
            [0.3, 0.1, 0.6].repeat(3),
        )
        .unwrap();
        for anchor in [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [0.3, 0.1, 0.6], [0.9, 0.0, 0.0]] {
            let row = b.feasible_row(0, 0, 0, &anchor);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14, "{row:?}");
            for ((x, l), u) in row.iter().zip(b.lower(0, 0, 0)).zip(b.upper(0, 0, 0)) {
                assert!(x >= l && x <= u);
            }
        }
        assert_eq!(b.feasible_row(0, 0, 0, &[0.3, 0.1, 0.6]), vec![0.3, 0.1, 0.6]);
    }

    #[test]
    fn infeasible_box_is_reported() {
        let shape = Shape::new(2, 1, 1).unwrap();
        let err = TransitionBox::new(shape, vec![0.6; 4], vec![0.7; 4], vec![0.5; 4]).unwrap_err();
        assert!(matches!(err, CmdpError::InfeasibleBox { .. }));
    }

    #[test]
    fn coverage_on_fresh_model() {
        let shape = Shape::new(2, 2, 2).unwrap();
        let kernel = Kernel::from_fn(shape, |_, _, _, n| if n == 0 { 0.25 } else { 0.75 }).unwrap();
        let c = SaTable::filled(shape, 0.5);
        let cmdp = Cmdp::new(kernel, c.clone(), vec![c], vec![1.0], 0, CostNoise::Bernoulli).unwrap();
        let m = model();
        assert!(m.covers(&cmdp));
    }
}
