//! Dense two-phase tableau simplex with Bland's anti-cycling rule.
//!
//! Solves `min c^T x` subject to `A x = b`, `x >= 0`.

use crate::error::{CmdpError, Result};

/// Pivot and reduced-cost tolerance.
pub const PIVOT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct StandardLp {
    pub costs: Vec<f64>,
    /// Row-major `rows x costs.len()`.
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl StandardLp {
    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_cols(&self) -> usize {
        self.costs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.matrix.len() != self.num_rows() * self.num_cols() {
            return Err(CmdpError::Dimension(format!(
                "constraint matrix has {} entries, expected {} x {}",
                self.matrix.len(),
                self.num_rows(),
                self.num_cols()
            )));
        }
        if self.costs.iter().chain(&self.matrix).chain(&self.rhs).any(|x| !x.is_finite()) {
            return Err(CmdpError::InvalidModel("LP data must be finite".into()));
        }
        Ok(())
    }

    /// Largest violation of `A x = b` and `x >= 0`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let n = self.num_cols();
        let eq = (0..self.num_rows())
            .map(|r| {
                let lhs: f64 = self.matrix[r * n..(r + 1) * n].iter().zip(x).map(|(a, v)| a * v).sum();
                (lhs - self.rhs[r]).abs()
            })
            .fold(0.0, f64::max);
        let neg = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        eq.max(neg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Equality-row duals `y` with `c - A^T y >= 0` at optimality.
    pub duals: Vec<f64>,
    pub basis: Vec<usize>,
    /// Rows found linearly dependent during phase one.
    pub redundant_rows: Vec<usize>,
    pub pivots: usize,
}

struct Tableau {
    /// `rows x width` with the right-hand side in the last column.
    data: Vec<f64>,
    rows: usize,
    width: usize,
    basis: Vec<usize>,
    active: Vec<bool>,
    pivots: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.data[row * w + col];
        for c in 0..w {
            self.data[row * w + c] /= p;
        }
        self.data[row * w + col] = 1.0;
        for r in 0..self.rows {
            if r == row || !self.active[r] {
                continue;
            }
            let factor = self.data[r * w + col];
            if factor == 0.0 {
                continue;
            }
            for c in 0..w {
                let delta = factor * self.data[row * w + c];
                self.data[r * w + c] -= delta;
            }
            self.data[r * w + col] = 0.0;
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Minimises `costs . x` over the columns flagged in `allowed`.
    fn optimise(&mut self, costs: &[f64], allowed: &[bool]) -> Result<()> {
        let ncols = self.width - 1;
        let max_pivots = 50_000 + 100 * ncols * self.rows;
        loop {
            // y = c_B rows; reduced cost d_j = c_j - sum_r c_B[r] T[r][j]
            let entering = (0..ncols).filter(|&j| allowed[j]).find(|&j| {
                let mut d = costs[j];
                for r in 0..self.rows {
                    if self.active[r] {
                        d -= costs[self.basis[r]] * self.at(r, j);
                    }
                }
                d < -PIVOT_TOL
            });
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                if !self.active[r] {
                    continue;
                }
                let a = self.at(r, col);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    leaving = match leaving {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - PIVOT_TOL
                                || (ratio <= lratio + PIVOT_TOL && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leaving else {
                return Err(CmdpError::Internal(format!("LP is unbounded along column {col}")));
            };
            self.pivot(row, col);
            if self.pivots > max_pivots {
                return Err(CmdpError::Internal("simplex exceeded its pivot limit".into()));
            }
        }
    }
}

/// Two-phase simplex. Phase one starts from one artificial per row; their
/// final columns hold the basis inverse, from which the duals are read.
pub fn solve(lp: &StandardLp) -> Result<LpSolution> {
    lp.validate()?;
    let m = lp.num_rows();
    let n = lp.num_cols();
    let width = n + m + 1;
    let mut data = vec![0.0; m * width];
    let mut signs = vec![1.0; m];
    for r in 0..m {
        let sign = if lp.rhs[r] < 0.0 { -1.0 } else { 1.0 };
        signs[r] = sign;
        for c in 0..n {
            data[r * width + c] = sign * lp.matrix[r * n + c];
        }
        data[r * width + n + r] = 1.0;
        data[r * width + width - 1] = sign * lp.rhs[r];
    }
    let mut tab = Tableau {
        data,
        rows: m,
        width,
        basis: (n..n + m).collect(),
        active: vec![true; m],
        pivots: 0,
    };

    let mut phase1_costs = vec![0.0; n + m];
    phase1_costs[n..].iter_mut().for_each(|c| *c = 1.0);
    tab.optimise(&phase1_costs, &vec![true; n + m])?;
    let infeasibility: f64 = (0..m).filter(|&r| tab.basis[r] >= n).map(|r| tab.rhs(r)).sum();
    let scale = lp.rhs.iter().fold(1.0f64, |s, b| s.max(b.abs()));
    if infeasibility > 1e-9 * scale {
        return Err(CmdpError::Infeasible {
            residual: infeasibility,
        });
    }

    // Drive the remaining artificials out; rows where that fails are redundant.
    let mut redundant_rows = Vec::new();
    for r in 0..m {
        if tab.basis[r] < n {
            continue;
        }
        match (0..n).find(|&c| tab.at(r, c).abs() > PIVOT_TOL) {
            Some(c) => tab.pivot(r, c),
            None => {
                tab.active[r] = false;
                redundant_rows.push(r);
            }
        }
    }

    let mut phase2_costs = lp.costs.clone();
    phase2_costs.extend(std::iter::repeat_n(0.0, m));
    let mut allowed = vec![true; n];
    allowed.extend(std::iter::repeat_n(false, m));
    tab.optimise(&phase2_costs, &allowed)?;

    let mut x = vec![0.0; n];
    for r in 0..m {
        if tab.active[r] && tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    let objective = lp.costs.iter().zip(&x).map(|(c, v)| c * v).sum();
    let duals = (0..m)
        .map(|row| {
            let y: f64 = (0..m)
                .filter(|&r| tab.active[r])
                .map(|r| phase2_costs[tab.basis[r]] * tab.at(r, n + row))
                .sum();
            y * signs[row]
        })
        .collect();
    Ok(LpSolution {
        x,
        objective,
        duals,
        basis: tab.basis,
        redundant_rows,
        pivots: tab.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(costs: Vec<f64>, matrix: Vec<f64>, rhs: Vec<f64>) -> StandardLp {
        StandardLp { costs, matrix, rhs }
    }

    #[test]
    fn small_problem_with_duals() {
        // min -x1 - 2 x2  s.t. x1 + x2 + s1 = 4, x2 + s2 = 3
        let p = lp(
            vec![-1.0, -2.0, 0.0, 0.0],
            vec![1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            vec![4.0, 3.0],
        );
        let sol = solve(&p).unwrap();
        assert!((sol.objective + 7.0).abs() < 1e-12);
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 3.0).abs() < 1e-12);
        assert!((sol.duals[0] + 1.0).abs() < 1e-12);
        assert!((sol.duals[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let p = lp(vec![1.0], vec![1.0, 1.0], vec![1.0, 2.0]);
        assert!(matches!(solve(&p), Err(CmdpError::Infeasible { .. })));
        let p = lp(vec![-1.0, 0.0], vec![1.0, -1.0], vec![0.0]);
        assert!(matches!(solve(&p), Err(CmdpError::Internal(_))));
    }

    #[test]
    fn redundant_row_is_detected() {
        let p = lp(vec![1.0, 2.0], vec![1.0, 1.0, 2.0, 2.0], vec![1.0, 2.0]);
        let sol = solve(&p).unwrap();
        assert_eq!(sol.redundant_rows.len(), 1);
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!(p.residual(&sol.x) < 1e-12);
    }

    #[test]
    fn negative_rhs_rows() {
        // -x1 - x2 = -2, min x1 + 3 x2
        let p = lp(vec![1.0, 3.0], vec![-1.0, -1.0], vec![-2.0]);
        let sol = solve(&p).unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-12);
        // c - A^T y >= 0 with equality on x1: 1 + y = 0
        assert!((sol.duals[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example in equality form
        let p = lp(
            vec![-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0],
            vec![
                0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0, //
                0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
            ],
            vec![0.0, 0.0, 1.0],
        );
        let sol = solve(&p).unwrap();
        assert!((sol.objective + 0.05).abs() < 1e-12, "{}", sol.objective);
    }
}
