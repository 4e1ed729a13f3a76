//! Exact CMDP solutions through the occupancy-measure LP, and regret
//! bookkeeping against them.
//!
//! LP variables are `q_h(s,a)` followed by one slack per constraint:
//!
//! ```text
//! min  c . q
//! s.t. sum_a q_0(s,a)                                   = 1[s = s_1]
//!      sum_a q_h(s,a) - sum_{s',a'} p(s|s',a') q_{h-1}(s',a') = 0      (h >= 1)
//!      d_i . q + slack_i                                = alpha_i
//!      q, slack >= 0
//! ```

use serde::Serialize;

use crate::error::{CmdpError, Result};
use crate::model::{policy_from_occupancy, Cmdp, OccupancyQ, SaTable, TabularPolicy};
use crate::simplex::{self, StandardLp};

/// The CMDP occupancy LP in equality form.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub lp: StandardLp,
    pub num_occupancy: usize,
    pub num_flow_rows: usize,
    pub num_constraints: usize,
}

impl LpProblem {
    pub fn from_cmdp(cmdp: &Cmdp) -> Self {
        let shape = cmdp.shape();
        let (ns, na, nh) = (shape.states, shape.actions, shape.horizon);
        let nq = shape.sa_len();
        let ni = cmdp.num_constraints();
        let n = nq + ni;
        let flow_rows = nh * ns;
        let m = flow_rows + ni;
        let mut matrix = vec![0.0; m * n];
        let mut rhs = vec![0.0; m];
        for h in 0..nh {
            for s in 0..ns {
                let row = h * ns + s;
                for a in 0..na {
                    matrix[row * n + shape.sa(h, s, a)] = 1.0;
                }
                if h == 0 {
                    rhs[row] = if s == cmdp.initial_state() { 1.0 } else { 0.0 };
                } else {
                    for prev in 0..ns {
                        for a in 0..na {
                            matrix[row * n + shape.sa(h - 1, prev, a)] -= cmdp.kernel().get(h - 1, prev, a, s);
                        }
                    }
                }
            }
        }
        for (i, d) in cmdp.constraints().iter().enumerate() {
            let row = flow_rows + i;
            matrix[row * n..row * n + nq].copy_from_slice(d.values());
            matrix[row * n + nq + i] = 1.0;
            rhs[row] = cmdp.thresholds()[i];
        }
        let mut costs = cmdp.objective().values().to_vec();
        costs.extend(std::iter::repeat_n(0.0, ni));
        Self {
            lp: StandardLp { costs, matrix, rhs },
            num_occupancy: nq,
            num_flow_rows: flow_rows,
            num_constraints: ni,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactSolution {
    pub value: f64,
    pub policy: TabularPolicy,
    pub occupancy: OccupancyQ,
    /// Optimal multipliers `lambda_i >= 0` of the `I` constraints.
    pub duals: Vec<f64>,
    /// `alpha_i - d_i . q` at the optimum.
    pub slacks: Vec<f64>,
    /// Largest violation of the LP constraints by the returned occupancy.
    pub primal_residual: f64,
    /// Largest `|lambda_i slack_i|` and `|reduced cost_j q_j|`.
    pub complementary_slackness: f64,
}

/// Solves the true CMDP to optimality.
pub fn solve_cmdp_exact(cmdp: &Cmdp) -> Result<ExactSolution> {
    let problem = LpProblem::from_cmdp(cmdp);
    let lp = &problem.lp;
    let sol = simplex::solve(lp)?;
    let shape = cmdp.shape();
    let nq = problem.num_occupancy;
    let table = SaTable::from_vec(shape, sol.x[..nq].to_vec())?;
    let occupancy = OccupancyQ::from_table(table);
    let policy = policy_from_occupancy(&occupancy);
    let slacks: Vec<f64> = sol.x[nq..].to_vec();
    let duals: Vec<f64> = sol.duals[problem.num_flow_rows..].iter().map(|y| (-y).max(0.0)).collect();

    let n = lp.num_cols();
    let mut cs = duals
        .iter()
        .zip(&slacks)
        .map(|(l, s)| (l * s).abs())
        .fold(0.0, f64::max);
    for j in 0..n {
        let mut reduced = lp.costs[j];
        for (r, y) in sol.duals.iter().enumerate() {
            reduced -= y * lp.matrix[r * n + j];
        }
        cs = cs.max((reduced * sol.x[j]).abs());
        if reduced < -1e-8 {
            return Err(CmdpError::Internal(format!(
                "simplex stopped with negative reduced cost {reduced} on column {j}"
            )));
        }
    }
    Ok(ExactSolution {
        value: sol.objective,
        policy,
        occupancy,
        duals,
        slacks,
        primal_residual: lp.residual(&sol.x),
        complementary_slackness: cs,
    })
}

/// True values of one played policy and the running regret totals after it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerRow {
    pub k: usize,
    pub value_objective: f64,
    pub value_constraints: Vec<f64>,
    pub strong_objective: f64,
    pub strong_constraint: f64,
    pub weak_objective: f64,
    pub weak_constraint: f64,
}

/// Strong (positive-part) and weak (signed) cumulative regrets.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretLedger {
    optimal_value: f64,
    thresholds: Vec<f64>,
    strong_objective: f64,
    weak_objective: f64,
    strong_per_constraint: Vec<f64>,
    weak_per_constraint: Vec<f64>,
    episodes: usize,
}

impl RegretLedger {
    pub fn new(optimal_value: f64, thresholds: Vec<f64>) -> Self {
        let ni = thresholds.len();
        Self {
            optimal_value,
            thresholds,
            strong_objective: 0.0,
            weak_objective: 0.0,
            strong_per_constraint: vec![0.0; ni],
            weak_per_constraint: vec![0.0; ni],
            episodes: 0,
        }
    }

    pub fn optimal_value(&self) -> f64 {
        self.optimal_value
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    /// Evaluates `policy` exactly on the true model and accumulates.
    pub fn record_episode(&mut self, policy: &TabularPolicy, cmdp: &Cmdp) -> Result<LedgerRow> {
        if cmdp.num_constraints() != self.thresholds.len() {
            return Err(CmdpError::Dimension("ledger and model disagree on the constraint count".into()));
        }
        let value_objective = cmdp.objective_value(policy)?;
        let value_constraints = cmdp.constraint_values(policy)?;
        Ok(self.record_values(value_objective, value_constraints))
    }

    /// Accumulates already-computed true values.
    pub fn record_values(&mut self, value_objective: f64, value_constraints: Vec<f64>) -> LedgerRow {
        let gap = value_objective - self.optimal_value;
        self.strong_objective += gap.max(0.0);
        self.weak_objective += gap;
        for (i, v) in value_constraints.iter().enumerate() {
            let violation = v - self.thresholds[i];
            self.strong_per_constraint[i] += violation.max(0.0);
            self.weak_per_constraint[i] += violation;
        }
        self.episodes += 1;
        LedgerRow {
            k: self.episodes,
            value_objective,
            value_constraints,
            strong_objective: self.strong_objective,
            strong_constraint: self.strong_constraint(),
            weak_objective: self.weak_objective,
            weak_constraint: self.weak_constraint(),
        }
    }

    pub fn strong_objective(&self) -> f64 {
        self.strong_objective
    }

    pub fn weak_objective(&self) -> f64 {
        self.weak_objective
    }

    /// `max_i sum_k [V_i - alpha_i]_+`; zero without constraints.
    pub fn strong_constraint(&self) -> f64 {
        self.strong_per_constraint.iter().copied().fold(0.0, f64::max)
    }

    /// `max_i sum_k (V_i - alpha_i)`.
    pub fn weak_constraint(&self) -> f64 {
        self.weak_per_constraint
            .iter()
            .copied()
            .reduce(f64::max)
            .unwrap_or(0.0)
    }

    pub fn strong_per_constraint(&self) -> &[f64] {
        &self.strong_per_constraint
    }

    pub fn weak_per_constraint(&self) -> &[f64] {
        &self.weak_per_constraint
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostNoise, Kernel, Shape};

    fn one_step(alpha: f64) -> Cmdp {
        let shape = Shape::new(2, 2, 1).unwrap();
        let kernel = Kernel::from_fn(shape, |_, _, _, n| if n == 0 { 1.0 } else { 0.0 }).unwrap();
        let c = SaTable::from_fn(shape, |_, _, a| if a == 0 { 1.0 } else { 0.0 });
        let d = SaTable::from_fn(shape, |_, _, a| if a == 0 { 0.0 } else { 1.0 });
        Cmdp::new(kernel, c, vec![d], vec![alpha], 0, CostNoise::Deterministic).unwrap()
    }

    #[test]
    fn binding_constraint_mixes_actions() {
        let sol = solve_cmdp_exact(&one_step(0.25)).unwrap();
        assert!((sol.value - 0.75).abs() < 1e-12);
        assert!((sol.policy.prob(0, 0, 1) - 0.25).abs() < 1e-12);
        assert!((sol.duals[0] - 1.0).abs() < 1e-12);
        assert!(sol.complementary_slackness < 1e-12);
        assert!(sol.primal_residual < 1e-12);
    }

    #[test]
    fn slack_constraint_has_zero_multiplier() {
        let sol = solve_cmdp_exact(&one_step(1.0)).unwrap();
        assert!(sol.value.abs() < 1e-12);
        assert_eq!(sol.duals[0], 0.0);
    }

    #[test]
    fn infeasible_thresholds_are_reported() {
        let shape = Shape::new(1, 1, 1).unwrap();
        let kernel = Kernel::from_vec(shape, vec![1.0]).unwrap();
        let cmdp = Cmdp::new(
            kernel,
            SaTable::zeros(shape),
            vec![SaTable::filled(shape, 1.0)],
            vec![0.5],
            0,
            CostNoise::Deterministic,
        )
        .unwrap();
        assert!(matches!(solve_cmdp_exact(&cmdp), Err(CmdpError::Infeasible { .. })));
    }

    #[test]
    fn cancellation_example() {
        let mut ledger = RegretLedger::new(0.0, vec![1.0]);
        ledger.record_values(0.0, vec![3.0]);
        let row = ledger.record_values(0.0, vec![-1.0]);
        assert_eq!(row.weak_constraint, 0.0);
        assert_eq!(row.strong_constraint, 2.0);
    }

    #[test]
    fn optimal_policy_accumulates_nothing() {
        let cmdp = one_step(0.25);
        let sol = solve_cmdp_exact(&cmdp).unwrap();
        let mut ledger = RegretLedger::new(sol.value, cmdp.thresholds().to_vec());
        for _ in 0..100 {
            ledger.record_episode(&sol.policy, &cmdp).unwrap();
        }
        assert!(ledger.strong_objective() < 1e-9);
        assert!(ledger.strong_constraint() < 1e-9);
        assert!(ledger.weak_objective().abs() < 1e-9);
        assert!(ledger.weak_constraint().abs() < 1e-9);
    }
}
