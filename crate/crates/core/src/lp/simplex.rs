//! Dense two-phase tableau simplex with Bland's anti-cycling rule.
//!
//! Problems are `max c·x` subject to rows `a·x (<=|>=|=) b` and `x >= 0`.
//! The instances this crate builds have at most a few hundred variables,
//! so a dense tableau is plenty.

use super::Sense;

const COST_EPS: f64 = 1e-10;
const PIVOT_EPS: f64 = 1e-10;
const FEASIBILITY_EPS: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct DenseRow {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Clone, Debug)]
pub struct DenseLp {
    pub objective: Vec<f64>,
    pub rows: Vec<DenseRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimplexError {
    Infeasible,
    Unbounded,
    /// `best` is the last basic feasible point of phase 2, if phase 2 was
    /// reached.
    IterationLimit {
        iterations: usize,
        best: Option<Vec<f64>>,
    },
}

struct Tableau {
    /// `rows x (cols + 1)`; the last column is the right-hand side.
    cells: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.cells[r][self.cols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.cells[row][col];
        for v in self.cells[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.cells[row].clone();
        for (r, cells) in self.cells.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let factor = cells[col];
            if factor != 0.0 {
                for (v, &pv) in cells.iter_mut().zip(&pivot_row) {
                    *v -= factor * pv;
                }
                cells[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Maximizes `cost · x` over the current tableau. Columns for which
    /// `allowed` is false never enter the basis.
    fn optimize(
        &mut self,
        cost: &[f64],
        allowed: &dyn Fn(usize) -> bool,
        iterations: &mut usize,
        max_iterations: usize,
    ) -> Outcome {
        // reduced[j] = c_j - c_B · column_j
        let mut reduced: Vec<f64> = cost.to_vec();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (d, &a) in reduced.iter_mut().zip(&self.cells[r][..self.cols]) {
                    *d -= cb * a;
                }
            }
        }
        loop {
            let Some(enter) = (0..self.cols).find(|&j| allowed(j) && reduced[j] > COST_EPS) else {
                return Outcome::Optimal;
            };
            if *iterations >= max_iterations {
                return Outcome::IterationLimit;
            }
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.cells.len() {
                let a = self.cells[r][enter];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Outcome::Unbounded;
            };
            self.pivot(row, enter);
            *iterations += 1;
            let factor = reduced[enter];
            for (d, &a) in reduced.iter_mut().zip(&self.cells[row][..self.cols]) {
                *d -= factor * a;
            }
            reduced[enter] = 0.0;
        }
    }

    fn primal(&self, num_vars: usize) -> Vec<f64> {
        let mut x = vec![0.0; num_vars];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < num_vars {
                x[b] = self.rhs(r);
            }
        }
        x
    }
}

/// Solves `lp` and returns an optimal primal vector.
pub fn maximize(lp: &DenseLp, max_iterations: usize) -> Result<Vec<f64>, SimplexError> {
    let n = lp.objective.len();
    let m = lp.rows.len();

    // Normalize to non-negative right-hand sides.
    let rows: Vec<DenseRow> = lp
        .rows
        .iter()
        .map(|row| {
            debug_assert_eq!(row.coeffs.len(), n);
            if row.rhs < 0.0 {
                DenseRow {
                    coeffs: row.coeffs.iter().map(|a| -a).collect(),
                    sense: match row.sense {
                        Sense::Le => Sense::Ge,
                        Sense::Ge => Sense::Le,
                        Sense::Eq => Sense::Eq,
                    },
                    rhs: -row.rhs,
                }
            } else {
                row.clone()
            }
        })
        .collect();

    let num_slack = rows.iter().filter(|r| r.sense != Sense::Eq).count();
    let num_artificial = rows.iter().filter(|r| r.sense != Sense::Le).count();
    let cols = n + num_slack + num_artificial;
    let artificial_start = n + num_slack;

    let mut cells = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    let (mut next_slack, mut next_art) = (n, artificial_start);
    for (r, row) in rows.iter().enumerate() {
        cells[r][..n].copy_from_slice(&row.coeffs);
        cells[r][cols] = row.rhs;
        match row.sense {
            Sense::Le => {
                cells[r][next_slack] = 1.0;
                basis[r] = next_slack;
                next_slack += 1;
            }
            Sense::Ge => {
                cells[r][next_slack] = -1.0;
                next_slack += 1;
                cells[r][next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
            Sense::Eq => {
                cells[r][next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
        }
    }
    let mut tab = Tableau { cells, basis, cols };
    let mut iterations = 0;

    if num_artificial > 0 {
        let mut cost = vec![0.0; cols];
        for c in cost.iter_mut().skip(artificial_start) {
            *c = -1.0;
        }
        match tab.optimize(&cost, &|_| true, &mut iterations, max_iterations) {
            Outcome::Optimal => {}
            Outcome::Unbounded => unreachable!("phase 1 objective is bounded by 0"),
            Outcome::IterationLimit => {
                return Err(SimplexError::IterationLimit {
                    iterations,
                    best: None,
                })
            }
        }
        let infeasibility: f64 = (0..m)
            .filter(|&r| tab.basis[r] >= artificial_start)
            .map(|r| tab.rhs(r))
            .sum();
        if infeasibility > FEASIBILITY_EPS {
            return Err(SimplexError::Infeasible);
        }
        // Drive zero-valued artificials out of the basis where possible;
        // rows where that fails are redundant and stay inert.
        for r in 0..m {
            if tab.basis[r] >= artificial_start {
                if let Some(j) = (0..artificial_start).find(|&j| tab.cells[r][j].abs() > 1e-9) {
                    tab.pivot(r, j);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    match tab.optimize(&cost, &|j| j < artificial_start, &mut iterations, max_iterations) {
        Outcome::Optimal => Ok(tab.primal(n)),
        Outcome::Unbounded => Err(SimplexError::Unbounded),
        Outcome::IterationLimit => Err(SimplexError::IterationLimit {
            iterations,
            best: Some(tab.primal(n)),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(coeffs: &[f64], sense: Sense, rhs: f64) -> DenseRow {
        DenseRow {
            coeffs: coeffs.to_vec(),
            sense,
            rhs,
        }
    }

    fn value(lp: &DenseLp, x: &[f64]) -> f64 {
        lp.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let lp = DenseLp {
            objective: vec![3.0, 5.0],
            rows: vec![
                row(&[1.0, 0.0], Sense::Le, 4.0),
                row(&[0.0, 2.0], Sense::Le, 12.0),
                row(&[3.0, 2.0], Sense::Le, 18.0),
            ],
        };
        let x = maximize(&lp, 1000).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
        assert!((value(&lp, &x) - 36.0).abs() < 1e-9);
    }

    #[test]
    fn phase_one_with_equality_and_ge() {
        // max x + y s.t. x + y = 3, x >= 1, y <= 1.5 -> 3
        let lp = DenseLp {
            objective: vec![1.0, 1.0],
            rows: vec![
                row(&[1.0, 1.0], Sense::Eq, 3.0),
                row(&[1.0, 0.0], Sense::Ge, 1.0),
                row(&[0.0, 1.0], Sense::Le, 1.5),
            ],
        };
        let x = maximize(&lp, 1000).unwrap();
        assert!((value(&lp, &x) - 3.0).abs() < 1e-9);
        assert!(x[0] >= 1.0 - 1e-9 && x[1] <= 1.5 + 1e-9);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // max -x s.t. -x <= -2  (x >= 2) -> x = 2
        let lp = DenseLp {
            objective: vec![-1.0],
            rows: vec![row(&[-1.0], Sense::Le, -2.0)],
        };
        let x = maximize(&lp, 1000).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let infeasible = DenseLp {
            objective: vec![1.0],
            rows: vec![row(&[1.0], Sense::Le, 1.0), row(&[1.0], Sense::Ge, 2.0)],
        };
        assert_eq!(maximize(&infeasible, 1000), Err(SimplexError::Infeasible));
        let unbounded = DenseLp {
            objective: vec![1.0, 0.0],
            rows: vec![row(&[0.0, 1.0], Sense::Le, 1.0)],
        };
        assert_eq!(maximize(&unbounded, 1000), Err(SimplexError::Unbounded));
    }

    #[test]
    fn redundant_equalities() {
        let lp = DenseLp {
            objective: vec![1.0, 2.0],
            rows: vec![
                row(&[1.0, 1.0], Sense::Eq, 1.0),
                row(&[2.0, 2.0], Sense::Eq, 2.0),
            ],
        };
        let x = maximize(&lp, 1000).unwrap();
        assert!((value(&lp, &x) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn iteration_cap_reports_best_point() {
        let lp = DenseLp {
            objective: vec![1.0, 1.0, 1.0],
            rows: vec![
                row(&[1.0, 0.0, 0.0], Sense::Le, 1.0),
                row(&[0.0, 1.0, 0.0], Sense::Le, 1.0),
                row(&[0.0, 0.0, 1.0], Sense::Le, 1.0),
            ],
        };
        match maximize(&lp, 1) {
            Err(SimplexError::IterationLimit { best: Some(x), .. }) => {
                assert!((value(&lp, &x) - 1.0).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example, which cycles under the largest-coefficient rule.
        let lp = DenseLp {
            objective: vec![0.75, -150.0, 0.02, -6.0],
            rows: vec![
                row(&[0.25, -60.0, -0.04, 9.0], Sense::Le, 0.0),
                row(&[0.5, -90.0, -0.02, 3.0], Sense::Le, 0.0),
                row(&[0.0, 0.0, 1.0, 0.0], Sense::Le, 1.0),
            ],
        };
        let x = maximize(&lp, 1000).unwrap();
        assert!((value(&lp, &x) - 0.05).abs() < 1e-9);
    }
}
