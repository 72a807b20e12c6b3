//! The online matching LP and its general-weight extension.
//!
//! Variables `y[i,t,j]` stand for the probability that bin `i` is matched to
//! ball `t` while the ball shows weight vector `j`. The constraint families
//! are:
//!
//! 1. bin capacity — `Σ_t Σ_j y[i,t,j] <= 1`
//! 2. ball arrival — `Σ_i y[i,t,j] <= p[t,j]`
//! 3. online availability — `y[i,t,j] <= p[t,j] · (1 - Σ_{t'<t} Σ_j' y[i,t',j'])`
//! 4. non-negativity, carried as variable bounds.
//!
//! The availability family holds for any online algorithm (arrival of `t` is
//! independent of whether `i` is still free), which makes the optimum an
//! upper bound on the best online policy. For a basic instance there is one
//! realization per ball and `j` is always 0.

mod lp_format;
pub mod simplex;

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{lift_to_general, GeneralInstance, Instance};

pub use lp_format::write_lp_format;
use simplex::{DenseLp, DenseRow, SimplexError};

/// Slack allowed when checking LP values against the constraint system.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// Which constraint family a row belongs to, with its 0-based indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    BinCapacity { bin: usize },
    BallArrival { ball: usize, realization: usize },
    OnlineAvailability { bin: usize, ball: usize, realization: usize },
}

impl Family {
    /// Short label with 1-based indices, as used in reports and LP files.
    pub fn label(&self) -> String {
        match *self {
            Family::BinCapacity { bin } => format!("bin_{}", bin + 1),
            Family::BallArrival { ball, realization } => {
                format!("ball_{}_{}", ball + 1, realization + 1)
            }
            Family::OnlineAvailability {
                bin,
                ball,
                realization,
            } => format!("avail_{}_{}_{}", bin + 1, ball + 1, realization + 1),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearConstraint {
    pub family: Family,
    /// Sparse `(variable, coefficient)` pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarKey {
    pub bin: usize,
    pub ball: usize,
    pub realization: usize,
}

impl VarKey {
    pub fn name(&self) -> String {
        format!("y_{}_{}_{}", self.bin + 1, self.ball + 1, self.realization + 1)
    }
}

/// A maximization LP over non-negative variables, tagged with the instance
/// shape it was built from.
#[derive(Clone, Debug)]
pub struct LpProblem {
    pub vars: Vec<VarKey>,
    pub objective: Vec<f64>,
    pub constraints: Vec<LinearConstraint>,
    shape: Shape,
}

#[derive(Clone, Debug, PartialEq)]
struct Shape {
    num_bins: usize,
    realizations: Vec<usize>,
}

impl LpProblem {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Non-negativity bounds, one per variable (the fourth family).
    pub fn num_nonnegativity_bounds(&self) -> usize {
        self.vars.len()
    }

    pub fn count(&self, pred: impl Fn(&Family) -> bool) -> usize {
        self.constraints.iter().filter(|c| pred(&c.family)).count()
    }

    fn to_dense(&self) -> DenseLp {
        let n = self.vars.len();
        DenseLp {
            objective: self.objective.clone(),
            rows: self
                .constraints
                .iter()
                .map(|c| {
                    let mut coeffs = vec![0.0; n];
                    for &(v, a) in &c.coeffs {
                        coeffs[v] += a;
                    }
                    DenseRow {
                        coeffs,
                        sense: c.sense,
                        rhs: c.rhs,
                    }
                })
                .collect(),
        }
    }

    fn values_from_primal(&self, x: &[f64]) -> EdgeValues {
        let mut values = EdgeValues::zeros(self.shape.num_bins, &self.shape.realizations);
        for (key, &v) in self.vars.iter().zip(x) {
            values.set(key.bin, key.ball, key.realization, v);
        }
        values
    }
}

/// Per-edge values `[ball][realization][bin]`, used for LP solutions and
/// for exact or estimated match probabilities alike.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeValues {
    num_bins: usize,
    rows: Vec<Vec<Vec<f64>>>,
}

impl EdgeValues {
    pub fn zeros(num_bins: usize, realizations_per_ball: &[usize]) -> Self {
        EdgeValues {
            num_bins,
            rows: realizations_per_ball
                .iter()
                .map(|&k| vec![vec![0.0; num_bins]; k])
                .collect(),
        }
    }

    pub fn zeros_for(instance: &GeneralInstance) -> Self {
        let shape: Vec<usize> = instance.balls.iter().map(|b| b.realizations.len()).collect();
        Self::zeros(instance.num_bins, &shape)
    }

    /// From a basic-model table `x[ball][bin]`.
    pub fn from_basic(num_bins: usize, x: &[Vec<f64>]) -> Self {
        EdgeValues {
            num_bins,
            rows: x.iter().map(|row| vec![row.clone()]).collect(),
        }
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn num_balls(&self) -> usize {
        self.rows.len()
    }

    pub fn num_realizations(&self, ball: usize) -> usize {
        self.rows[ball].len()
    }

    pub fn get(&self, bin: usize, ball: usize, realization: usize) -> f64 {
        self.rows[ball][realization][bin]
    }

    pub fn set(&mut self, bin: usize, ball: usize, realization: usize, v: f64) {
        self.rows[ball][realization][bin] = v;
    }

    pub fn add(&mut self, bin: usize, ball: usize, realization: usize, v: f64) {
        self.rows[ball][realization][bin] += v;
    }

    /// The weights a ball's realization puts on each bin.
    pub fn row(&self, ball: usize, realization: usize) -> &[f64] {
        &self.rows[ball][realization]
    }

    pub fn row_mut(&mut self, ball: usize, realization: usize) -> &mut [f64] {
        &mut self.rows[ball][realization]
    }

    /// `Σ_j y[bin, ball, j]`.
    pub fn edge_total(&self, bin: usize, ball: usize) -> f64 {
        self.rows[ball].iter().map(|r| r[bin]).sum()
    }

    /// Iterates `(bin, ball, realization, value)` in ball-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(t, rs)| {
            rs.iter()
                .enumerate()
                .flat_map(move |(j, r)| r.iter().enumerate().map(move |(i, &v)| (i, t, j, v)))
        })
    }

    /// `Σ w·y` against the instance's weights.
    pub fn weighted_sum(&self, instance: &GeneralInstance) -> f64 {
        self.iter()
            .map(|(i, t, j, v)| instance.balls[t].realizations[j].weights[i] * v)
            .sum()
    }

    fn same_shape(&self, instance: &GeneralInstance) -> bool {
        self.num_bins == instance.num_bins
            && self.rows.len() == instance.balls.len()
            && self
                .rows
                .iter()
                .zip(&instance.balls)
                .all(|(rs, b)| rs.len() == b.realizations.len() && rs.iter().all(|r| r.len() == self.num_bins))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpSolution {
    pub values: EdgeValues,
    pub objective: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct BuildOptions {
    /// Emit the online-availability family. Dropping it gives the plain
    /// fractional matching relaxation.
    pub availability: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { availability: true }
    }
}

/// LP for a basic instance (one variable per bin/ball pair).
pub fn build_lp_match(instance: &Instance) -> Result<LpProblem> {
    build_lp_match_gen(&lift_to_general(instance)?)
}

/// LP for a general instance (one variable per bin/ball/realization).
pub fn build_lp_match_gen(instance: &GeneralInstance) -> Result<LpProblem> {
    build_with(instance, BuildOptions::default())
}

pub fn build_with(instance: &GeneralInstance, options: BuildOptions) -> Result<LpProblem> {
    instance.ensure_valid()?;
    let m = instance.num_bins;
    let mut vars = Vec::new();
    let mut objective = Vec::new();
    // index[t][j] = first variable of (t, j); bins are contiguous after it.
    let mut index = Vec::with_capacity(instance.balls.len());
    for (t, ball) in instance.balls.iter().enumerate() {
        let mut per_ball = Vec::with_capacity(ball.realizations.len());
        for (j, r) in ball.realizations.iter().enumerate() {
            per_ball.push(vars.len());
            for i in 0..m {
                vars.push(VarKey {
                    bin: i,
                    ball: t,
                    realization: j,
                });
                objective.push(r.weights[i]);
            }
        }
        index.push(per_ball);
    }
    let var = |i: usize, t: usize, j: usize| index[t][j] + i;

    let mut constraints = Vec::new();
    for i in 0..m {
        let coeffs = instance
            .balls
            .iter()
            .enumerate()
            .flat_map(|(t, b)| (0..b.realizations.len()).map(move |j| (t, j)))
            .map(|(t, j)| (var(i, t, j), 1.0))
            .collect();
        constraints.push(LinearConstraint {
            family: Family::BinCapacity { bin: i },
            coeffs,
            sense: Sense::Le,
            rhs: 1.0,
        });
    }
    for (t, ball) in instance.balls.iter().enumerate() {
        for (j, r) in ball.realizations.iter().enumerate() {
            constraints.push(LinearConstraint {
                family: Family::BallArrival {
                    ball: t,
                    realization: j,
                },
                coeffs: (0..m).map(|i| (var(i, t, j), 1.0)).collect(),
                sense: Sense::Le,
                rhs: r.prob,
            });
        }
    }
    if options.availability {
        // y[i,t,j] + p[t,j] Σ_{t'<t} Σ_j' y[i,t',j'] <= p[t,j]
        for (t, ball) in instance.balls.iter().enumerate() {
            for (j, r) in ball.realizations.iter().enumerate() {
                for i in 0..m {
                    let mut coeffs = vec![(var(i, t, j), 1.0)];
                    if r.prob != 0.0 {
                        for (tp, earlier) in instance.balls[..t].iter().enumerate() {
                            for jp in 0..earlier.realizations.len() {
                                coeffs.push((var(i, tp, jp), r.prob));
                            }
                        }
                    }
                    constraints.push(LinearConstraint {
                        family: Family::OnlineAvailability {
                            bin: i,
                            ball: t,
                            realization: j,
                        },
                        coeffs,
                        sense: Sense::Le,
                        rhs: r.prob,
                    });
                }
            }
        }
    }

    Ok(LpProblem {
        vars,
        objective,
        constraints,
        shape: Shape {
            num_bins: m,
            realizations: instance.balls.iter().map(|b| b.realizations.len()).collect(),
        },
    })
}

/// Anything that can produce an optimal primal vector for an [`LpProblem`].
pub trait LpSolver {
    fn solve_primal(&self, lp: &LpProblem) -> Result<Vec<f64>>;
}

/// The in-repo dense simplex.
#[derive(Clone, Copy, Debug)]
pub struct DenseSimplex {
    pub max_iterations: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        DenseSimplex {
            max_iterations: 200_000,
        }
    }
}

impl LpSolver for DenseSimplex {
    fn solve_primal(&self, lp: &LpProblem) -> Result<Vec<f64>> {
        simplex::maximize(&lp.to_dense(), self.max_iterations).map_err(|e| match e {
            SimplexError::Infeasible => Error::LpInfeasible,
            SimplexError::Unbounded => Error::LpUnbounded,
            SimplexError::IterationLimit { iterations, best } => {
                let x = best.unwrap_or_else(|| vec![0.0; lp.num_vars()]);
                Error::IterationLimit {
                    iterations,
                    best: Box::new(finish(lp, &x)),
                }
            }
        })
    }
}

/// Solves with the default dense simplex.
pub fn solve(lp: &LpProblem) -> Result<LpSolution> {
    solve_with(&DenseSimplex::default(), lp)
}

pub fn solve_with(solver: &dyn LpSolver, lp: &LpProblem) -> Result<LpSolution> {
    let x = solver.solve_primal(lp)?;
    Ok(finish(lp, &x))
}

fn finish(lp: &LpProblem, x: &[f64]) -> LpSolution {
    let clamped: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
    let objective = lp.objective.iter().zip(&clamped).map(|(c, v)| c * v).sum();
    LpSolution {
        values: lp.values_from_primal(&clamped),
        objective,
    }
}

/// Builds and solves the LP for a general instance.
pub fn solve_instance(instance: &GeneralInstance) -> Result<LpSolution> {
    solve(&build_lp_match_gen(instance)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintViolation {
    /// Constraint label with 1-based indices, e.g. `avail_2_3_1`.
    pub constraint: String,
    pub lhs: f64,
    pub rhs: f64,
    pub excess: f64,
}

/// Constraint violations of a candidate value table; empty means feasible.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<ConstraintViolation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "feasible");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{}: {} > {} by {:.3e}", v.constraint, v.lhs, v.rhs, v.excess)?;
        }
        Ok(())
    }
}

/// Checks `values` against all four constraint families at
/// [`FEASIBILITY_TOLERANCE`].
pub fn check_online_feasible(values: &EdgeValues, instance: &GeneralInstance) -> FeasibilityReport {
    let mut report = FeasibilityReport::default();
    if !values.same_shape(instance) {
        report.violations.push(ConstraintViolation {
            constraint: "shape".into(),
            lhs: f64::NAN,
            rhs: f64::NAN,
            excess: f64::INFINITY,
        });
        return report;
    }
    let mut check = |constraint: String, lhs: f64, rhs: f64| {
        if lhs > rhs + FEASIBILITY_TOLERANCE {
            report.violations.push(ConstraintViolation {
                constraint,
                lhs,
                rhs,
                excess: lhs - rhs,
            });
        }
    };
    let m = instance.num_bins;
    for (i, t, j, v) in values.iter() {
        check(format!("nonneg_{}_{}_{}", i + 1, t + 1, j + 1), -v, 0.0);
    }
    for i in 0..m {
        let total: f64 = (0..instance.num_balls()).map(|t| values.edge_total(i, t)).sum();
        check(Family::BinCapacity { bin: i }.label(), total, 1.0);
    }
    for (t, ball) in instance.balls.iter().enumerate() {
        for (j, r) in ball.realizations.iter().enumerate() {
            let total: f64 = values.row(t, j).iter().sum();
            check(
                Family::BallArrival {
                    ball: t,
                    realization: j,
                }
                .label(),
                total,
                r.prob,
            );
        }
    }
    let mut prefix = vec![0.0; m];
    for (t, ball) in instance.balls.iter().enumerate() {
        for (j, r) in ball.realizations.iter().enumerate() {
            for i in 0..m {
                check(
                    Family::OnlineAvailability {
                        bin: i,
                        ball: t,
                        realization: j,
                    }
                    .label(),
                    values.get(i, t, j),
                    r.prob * (1.0 - prefix[i]),
                );
            }
        }
        for (i, p) in prefix.iter_mut().enumerate() {
            *p += values.edge_total(i, t);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{gap_instance, random_instance, Ball, GeneralBall, Realization};

    fn basic(num_bins: usize, balls: &[(f64, &[f64])]) -> Instance {
        Instance {
            num_bins,
            balls: balls
                .iter()
                .map(|&(p, w)| Ball {
                    arrival_prob: p,
                    weights: w.to_vec(),
                })
                .collect(),
        }
    }

    #[test]
    fn single_edge() {
        let inst = basic(1, &[(1.0, &[1.0])]);
        let sol = solve(&build_lp_match(&inst).unwrap()).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!((sol.values.get(0, 0, 0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn one_bin_two_balls() {
        // x1 = a, x2 <= (1 - a)/2, objective a + 2 x2 <= 1.
        let inst = basic(1, &[(1.0, &[1.0]), (0.5, &[2.0])]);
        let sol = solve(&build_lp_match(&inst).unwrap()).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn family_counts() {
        let inst = random_instance(3, 4, 1, 1.0);
        let lp = build_lp_match(&inst).unwrap();
        assert_eq!(lp.num_vars(), 12);
        assert_eq!(lp.count(|f| matches!(f, Family::BinCapacity { .. })), 3);
        assert_eq!(lp.count(|f| matches!(f, Family::BallArrival { .. })), 4);
        assert_eq!(lp.count(|f| matches!(f, Family::OnlineAvailability { .. })), 12);
        assert_eq!(lp.num_nonnegativity_bounds(), 12);
        // First ball's availability rows read y <= p.
        let first = lp
            .constraints
            .iter()
            .find(|c| c.family == Family::OnlineAvailability { bin: 0, ball: 0, realization: 0 })
            .unwrap();
        assert_eq!(first.coeffs.len(), 1);
        assert_eq!(first.rhs, inst.balls[0].arrival_prob);
    }

    #[test]
    fn gap_instance_optimum_is_two() {
        let sol = solve_instance(&gap_instance()).unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-7);
        assert!(check_online_feasible(&sol.values, &gap_instance()).is_feasible());
    }

    #[test]
    fn gap_instance_reference_point_is_feasible() {
        let g = gap_instance();
        let mut y = EdgeValues::zeros_for(&g);
        y.set(0, 0, 0, 0.5);
        y.set(1, 1, 0, 0.5);
        y.set(0, 2, 0, 0.5);
        y.set(1, 2, 0, 0.5);
        assert!(check_online_feasible(&y, &g).is_feasible());
        assert_eq!(y.weighted_sum(&g), 2.0);
    }

    #[test]
    fn single_deterministic_realization() {
        let g = GeneralInstance {
            num_bins: 1,
            balls: vec![GeneralBall {
                realizations: vec![Realization {
                    prob: 1.0,
                    weights: vec![5.0],
                }],
            }],
        };
        assert!((solve_instance(&g).unwrap().objective - 5.0).abs() < 1e-9);
    }

    #[test]
    fn zero_weights_give_zero() {
        let inst = basic(2, &[(0.7, &[0.0, 0.0]), (0.2, &[0.0, 0.0])]);
        assert_eq!(solve(&build_lp_match(&inst).unwrap()).unwrap().objective, 0.0);
    }

    #[test]
    fn feasibility_checker_flags_arrival_excess() {
        let inst = basic(2, &[(0.5, &[1.0, 1.0])]);
        let g = lift_to_general(&inst).unwrap();
        let y = EdgeValues::from_basic(2, &[vec![0.6, 0.0]]);
        let report = check_online_feasible(&y, &g);
        let names: Vec<_> = report.violations.iter().map(|v| v.constraint.as_str()).collect();
        assert!(names.contains(&"ball_1_1"));
        assert!(names.contains(&"avail_1_1_1"));
        assert!(check_online_feasible(&EdgeValues::zeros_for(&g), &g).is_feasible());
    }

    #[test]
    fn feasibility_checker_rejects_shape_mismatch() {
        let g = gap_instance();
        let y = EdgeValues::zeros(3, &[1, 1, 1]);
        assert!(!check_online_feasible(&y, &g).is_feasible());
    }

    #[test]
    fn dropping_availability_never_lowers_optimum() {
        for seed in 0..10 {
            let g = lift_to_general(&random_instance(3, 5, seed, 1.0)).unwrap();
            let with = solve(&build_with(&g, BuildOptions { availability: true }).unwrap()).unwrap();
            let without = solve(&build_with(&g, BuildOptions { availability: false }).unwrap()).unwrap();
            assert!(without.objective >= with.objective - 1e-9);
        }
    }
}
