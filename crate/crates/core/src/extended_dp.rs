//! Backward induction in the extended MDP: at every `(h, s, a)` the planner
//! also picks the successor distribution inside its confidence box.
//!
//! Ties are broken by the lowest action index, and when pouring mass into
//! successors by the lowest state index, so results are reproducible.

use crate::confidence::{TransitionBox, BOX_FEASIBILITY_TOL};
use crate::error::{CmdpError, Result};
use crate::model::{Kernel, SaTable, TabularPolicy};

#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedMdpSolution {
    /// Deterministic greedy policy.
    pub policy: TabularPolicy,
    /// Chosen action per `(h, s)`, laid out `h * S + s`.
    pub actions: Vec<usize>,
    /// Minimising successor distribution for every `(h, s, a)`.
    pub transitions: Kernel,
    pub q_values: SaTable,
    /// `V_h(s)` for `h = 0..=H`, laid out `h * S + s`; the last layer is zero.
    pub state_values: Vec<f64>,
    pub optimal_value: f64,
}

/// Minimises `sum_s' p(s') values(s')` over `{lower <= p <= upper, sum p = 1}`.
///
/// Greedy: start from the lower bounds, then pour the remaining mass into
/// successors in ascending order of `values` up to their upper bounds.
pub fn min_linear_over_box(values: &[f64], lower: &[f64], upper: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let mut row = vec![0.0; values.len()];
    let objective = pour(values, lower, upper, &order, &mut row)?;
    Ok((row, objective))
}

fn pour(values: &[f64], lower: &[f64], upper: &[f64], order: &[usize], row: &mut [f64]) -> Result<f64> {
    debug_assert!(values.len() == lower.len() && lower.len() == upper.len());
    let lower_sum: f64 = lower.iter().sum();
    let upper_sum: f64 = upper.iter().sum();
    if lower_sum > 1.0 + BOX_FEASIBILITY_TOL || upper_sum < 1.0 - BOX_FEASIBILITY_TOL {
        return Err(CmdpError::InfeasibleRow { lower_sum, upper_sum });
    }
    row.copy_from_slice(lower);
    let mut remaining = 1.0 - lower_sum;
    for &i in order {
        if remaining <= 0.0 {
            break;
        }
        let add = (upper[i] - lower[i]).min(remaining);
        row[i] += add;
        remaining -= add;
    }
    if remaining > 0.0 {
        // only reachable within the feasibility tolerance
        row[order[0]] += remaining;
    }
    Ok(row.iter().zip(values).map(|(p, v)| p * v).sum())
}

/// Optimistic planning: `Q_h(s,a) = r_h(s,a) + min_{p in B_h(s,a)} sum p V_{h+1}`,
/// `V_h(s) = min_a Q_h(s,a)`, `V_H = 0`.
pub fn solve_extended_mdp(
    reward: &SaTable,
    boxes: &TransitionBox,
    initial_state: usize,
) -> Result<ExtendedMdpSolution> {
    let shape = reward.shape();
    if boxes.shape() != shape {
        return Err(CmdpError::Dimension("reward and transition box shapes differ".into()));
    }
    if initial_state >= shape.states {
        return Err(CmdpError::Dimension(format!("initial state {initial_state} out of range")));
    }
    let (ns, na, nh) = (shape.states, shape.actions, shape.horizon);
    let mut v = vec![0.0; (nh + 1) * ns];
    let mut q = SaTable::zeros(shape);
    let mut probs = vec![0.0; shape.sas_len()];
    let mut actions = vec![0usize; nh * ns];
    let mut order: Vec<usize> = (0..ns).collect();
    for h in (0..nh).rev() {
        let next: Vec<f64> = v[(h + 1) * ns..(h + 2) * ns].to_vec();
        order.sort_by(|&i, &j| next[i].total_cmp(&next[j]).then(i.cmp(&j)));
        for s in 0..ns {
            let mut best = f64::INFINITY;
            let mut best_a = 0;
            for a in 0..na {
                let start = shape.sas(h, s, a, 0);
                let row = &mut probs[start..start + ns];
                let cont = pour(&next, boxes.lower(h, s, a), boxes.upper(h, s, a), &order, row).map_err(
                    |e| match e {
                        CmdpError::InfeasibleRow { lower_sum, upper_sum } => CmdpError::InfeasibleBox {
                            h,
                            s,
                            a,
                            lower_sum,
                            upper_sum,
                        },
                        other => other,
                    },
                )?;
                let value = reward.get(h, s, a) + cont;
                q.set(h, s, a, value);
                if value < best {
                    best = value;
                    best_a = a;
                }
            }
            v[h * ns + s] = best;
            actions[h * ns + s] = best_a;
        }
    }
    let policy = TabularPolicy::deterministic(shape, &actions)?;
    Ok(ExtendedMdpSolution {
        policy,
        actions,
        transitions: Kernel::from_vec_unchecked(shape, probs),
        q_values: q,
        optimal_value: v[initial_state],
        state_values: v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate_value, Shape};

    #[test]
    fn greedy_row_example() {
        let lo = [2.0 / 15.0; 3];
        let up = [8.0 / 15.0; 3];
        let (p, obj) = min_linear_over_box(&[1.0, 2.0, 3.0], &lo, &up).unwrap();
        assert!((p[0] - 8.0 / 15.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[2] - 2.0 / 15.0).abs() < 1e-15);
        assert!((obj - 1.6).abs() < 1e-14);
    }

    #[test]
    fn singleton_box_returns_center() {
        let p = [0.2, 0.5, 0.3];
        let (row, obj) = min_linear_over_box(&[3.0, 1.0, 2.0], &p, &p).unwrap();
        assert_eq!(row, p.to_vec());
        assert!((obj - (0.6 + 0.5 + 0.6)).abs() < 1e-15);
    }

    #[test]
    fn equal_values_give_common_value() {
        let (row, obj) = min_linear_over_box(&[0.7; 4], &[0.0; 4], &[0.6; 4]).unwrap();
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((obj - 0.7).abs() < 1e-15);
        assert_eq!(row, vec![0.6, 0.4, 0.0, 0.0]);
    }

    #[test]
    fn infeasible_rows_are_errors() {
        assert!(matches!(
            min_linear_over_box(&[0.0, 0.0], &[0.6, 0.6], &[1.0, 1.0]),
            Err(CmdpError::InfeasibleRow { .. })
        ));
        assert!(matches!(
            min_linear_over_box(&[0.0, 0.0], &[0.0, 0.0], &[0.3, 0.3]),
            Err(CmdpError::InfeasibleRow { .. })
        ));
    }

    #[test]
    fn zero_reward_has_zero_value() {
        let shape = Shape::new(3, 2, 4).unwrap();
        let kernel = Kernel::from_fn(shape, |_, _, _, _| 1.0 / 3.0).unwrap();
        let sol = solve_extended_mdp(&SaTable::zeros(shape), &TransitionBox::around(&kernel, 0.2), 0).unwrap();
        assert_eq!(sol.optimal_value, 0.0);
    }

    #[test]
    fn value_is_consistent_with_returned_model() {
        let shape = Shape::new(3, 2, 3).unwrap();
        let kernel = Kernel::from_fn(shape, |h, s, a, n| [[0.2, 0.3, 0.5], [0.6, 0.1, 0.3]][(h + s + a) % 2][n]).unwrap();
        let reward = SaTable::from_fn(shape, |h, s, a| ((h * 7 + s * 3 + a * 5) % 11) as f64 / 10.0);
        let sol = solve_extended_mdp(&reward, &TransitionBox::around(&kernel, 0.15), 1).unwrap();
        let v = evaluate_value(&sol.transitions, &reward, &sol.policy, 1).unwrap();
        assert!((v - sol.optimal_value).abs() < 1e-12);
        for h in 0..3 {
            for s in 0..3 {
                let row = sol.q_values.row(h, s);
                let min = row.iter().copied().fold(f64::INFINITY, f64::min);
                assert_eq!(sol.state_values[h * 3 + s], min);
                assert_eq!(row[sol.actions[h * 3 + s]], min);
            }
        }
    }
}
