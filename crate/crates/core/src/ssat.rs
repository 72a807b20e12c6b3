//! Stochastic MAX-SAT and its reduction to online matching.
//!
//! Variables are set in order `x_1, x_2, ..., x_n`. Odd variables are chosen
//! by the player, even variables by a fair coin. The value of a formula is
//! the expected number of satisfied clauses under the best strategy.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::{Ball, Instance};

pub const DEFAULT_MAX_VARS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Literal {
    /// 1-based variable index.
    pub var: usize,
    pub negated: bool,
}

impl Literal {
    pub fn pos(var: usize) -> Self {
        Literal { var, negated: false }
    }

    pub fn neg(var: usize) -> Self {
        Literal { var, negated: true }
    }

    /// Whether `var` is set by nature.
    pub fn is_random(&self) -> bool {
        self.var % 2 == 0
    }

    fn dimacs(&self) -> i64 {
        if self.negated {
            -(self.var as i64)
        } else {
            self.var as i64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SsatInstance {
    pub num_vars: usize,
    pub clauses: Vec<Vec<Literal>>,
}

impl SsatInstance {
    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    /// Checks variable ranges and clause sizes (1 to 3 literals).
    pub fn validate(&self) -> Result<()> {
        for (r, clause) in self.clauses.iter().enumerate() {
            if clause.is_empty() || clause.len() > 3 {
                return Err(Error::Formula(format!(
                    "clause {} has {} literals; expected 1 to 3",
                    r + 1,
                    clause.len()
                )));
            }
            for lit in clause {
                if lit.var == 0 || lit.var > self.num_vars {
                    return Err(Error::Formula(format!(
                        "clause {} references variable {} outside 1..={}",
                        r + 1,
                        lit.var,
                        self.num_vars
                    )));
                }
            }
        }
        Ok(())
    }

    /// True if some random (even) variable occurs negated.
    pub fn random_vars_negated(&self) -> bool {
        self.clauses.iter().flatten().any(|l| l.negated && l.is_random())
    }

    /// Largest number of clauses any single variable occurs in.
    pub fn max_occurrences(&self) -> usize {
        let mut count = vec![0usize; self.num_vars + 1];
        for clause in &self.clauses {
            let mut vars: Vec<usize> = clause.iter().map(|l| l.var).collect();
            vars.sort_unstable();
            vars.dedup();
            for v in vars {
                count[v] += 1;
            }
        }
        count.into_iter().max().unwrap_or(0)
    }

    /// Number of clauses satisfied by `assignment`, where bit `v - 1` holds
    /// the value of `x_v`.
    pub fn satisfied(&self, assignment: u64) -> usize {
        self.clauses
            .iter()
            .filter(|c| {
                c.iter()
                    .any(|l| ((assignment >> (l.var - 1)) & 1 == 1) != l.negated)
            })
            .count()
    }
}

/// Parses DIMACS CNF text. Comment lines start with `c`; clauses may span
/// lines and end with `0`.
pub fn parse_dimacs(bytes: &[u8]) -> Result<SsatInstance> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Dimacs {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    let mut header: Option<(usize, usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Vec<Literal> = Vec::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('c') || trimmed.starts_with('%') {
            continue;
        }
        if trimmed.starts_with('p') {
            if header.is_some() {
                return Err(dimacs(line, "duplicate problem line"));
            }
            let parts: Vec<&str> = trimmed.split_whitespace().collect();
            if parts.len() != 4 || parts[1] != "cnf" {
                return Err(dimacs(line, "expected `p cnf <vars> <clauses>`"));
            }
            let n = parts[2]
                .parse()
                .map_err(|_| dimacs(line, format!("bad variable count {:?}", parts[2])))?;
            let m = parts[3]
                .parse()
                .map_err(|_| dimacs(line, format!("bad clause count {:?}", parts[3])))?;
            header = Some((n, m, line));
            continue;
        }
        let Some((n, _, _)) = header else {
            return Err(dimacs(line, "clause before the problem line"));
        };
        for tok in trimmed.split_whitespace() {
            let v: i64 = tok
                .parse()
                .map_err(|_| dimacs(line, format!("bad literal {tok:?}")))?;
            if v == 0 {
                if current.is_empty() {
                    return Err(dimacs(line, "empty clause (variable 0 has no literal)"));
                }
                if current.len() > 3 {
                    return Err(dimacs(line, format!("clause has {} literals; at most 3 allowed", current.len())));
                }
                clauses.push(std::mem::take(&mut current));
            } else {
                let var = v.unsigned_abs() as usize;
                if var > n {
                    return Err(dimacs(line, format!("variable {var} exceeds declared count {n}")));
                }
                current.push(Literal { var, negated: v < 0 });
            }
        }
    }
    let Some((n, m, header_line)) = header else {
        return Err(dimacs(last_line, "missing problem line"));
    };
    if !current.is_empty() {
        return Err(dimacs(last_line, "last clause is not terminated by 0"));
    }
    if clauses.len() != m {
        return Err(dimacs(
            header_line,
            format!("declared {m} clauses but found {}", clauses.len()),
        ));
    }
    Ok(SsatInstance { num_vars: n, clauses })
}

fn dimacs(line: usize, message: impl Into<String>) -> Error {
    Error::Dimacs {
        line,
        message: message.into(),
    }
}

pub fn write_dimacs(phi: &SsatInstance) -> String {
    let mut out = format!("p cnf {} {}\n", phi.num_vars, phi.clauses.len());
    for clause in &phi.clauses {
        for l in clause {
            let _ = write!(out, "{} ", l.dimacs());
        }
        out.push_str("0\n");
    }
    out
}

/// Expected satisfied clauses under optimal play: maximum over odd
/// variables, average over even ones, folded from `x_n` back to `x_1`.
pub fn ssat_opt_online(phi: &SsatInstance, max_vars: usize) -> Result<f64> {
    phi.validate()?;
    let n = phi.num_vars;
    if n > max_vars.min(30) {
        return Err(Error::CapExceeded {
            what: "number of variables",
            limit: max_vars.min(30) as u64,
            actual: n as u64,
        });
    }
    let mut values: Vec<f64> = (0..1u64 << n).map(|a| phi.satisfied(a) as f64).collect();
    for v in (1..=n).rev() {
        let half = values.len() / 2;
        // Bit v-1 is the highest remaining bit: the two halves are x_v
        // false and true.
        let (lo, hi) = values.split_at(half);
        values = lo
            .iter()
            .zip(hi)
            .map(|(&f, &t)| if v % 2 == 1 { f.max(t) } else { 0.5 * (f + t) })
            .collect();
    }
    Ok(values[0])
}

/// Constants of the reduction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReductionParams {
    /// Largest clause-occurrence count of any variable.
    pub k: usize,
    /// Number of clauses.
    pub m: usize,
    /// `(1 - m^-4)^(m-1) / (2k)`.
    pub gamma: f64,
}

impl ReductionParams {
    pub fn for_formula(phi: &SsatInstance) -> Result<Self> {
        let m = phi.num_clauses();
        if m == 0 {
            return Err(Error::Formula("formula has no clauses".into()));
        }
        let k = phi.max_occurrences().max(1);
        let mf = m as f64;
        let gamma = (1.0 - mf.powi(-4)).powi(m as i32 - 1) / (2.0 * k as f64);
        Ok(ReductionParams { k, m, gamma })
    }

    pub fn clause_prob(&self) -> f64 {
        (self.m as f64).powi(-4)
    }

    pub fn clause_weight(&self) -> f64 {
        (self.m as f64).powi(4) / (2.0 * self.k as f64)
    }
}

/// Bin of literal `x_v` (`negated = false`) or its negation.
pub fn literal_bin(lit: Literal) -> usize {
    2 * (lit.var - 1) + usize::from(lit.negated)
}

/// Builds the matching instance of a formula: `2n` literal bins ordered
/// `x_1, x̄_1, x_2, x̄_2, ...`, then `n` literal balls followed by one ball
/// per clause.
pub fn reduce_to_ridehail(phi: &SsatInstance) -> Result<Instance> {
    let params = ReductionParams::for_formula(phi)?;
    build(phi, params.clause_weight(), params.clause_prob())
}

/// As [`reduce_to_ridehail`] but every clause ball has weight 1.
pub fn reduce_to_ridehail_unweighted(phi: &SsatInstance) -> Result<Instance> {
    let params = ReductionParams::for_formula(phi)?;
    build(phi, 1.0, params.clause_prob())
}

fn build(phi: &SsatInstance, clause_weight: f64, clause_prob: f64) -> Result<Instance> {
    phi.validate()?;
    let n = phi.num_vars;
    if n == 0 || n % 2 == 1 {
        return Err(Error::Formula(format!("number of variables must be even and positive, got {n}")));
    }
    let bins = 2 * n;
    let mut balls = Vec::with_capacity(n + phi.num_clauses());
    for t in 1..=n {
        let mut weights = vec![0.0; bins];
        weights[literal_bin(Literal::pos(t))] = 1.0;
        let arrival_prob = if t % 2 == 1 {
            weights[literal_bin(Literal::neg(t))] = 1.0;
            1.0
        } else {
            0.5
        };
        balls.push(Ball { arrival_prob, weights });
    }
    for clause in &phi.clauses {
        let mut weights = vec![0.0; bins];
        for &lit in clause {
            weights[literal_bin(lit)] = clause_weight;
        }
        balls.push(Ball {
            arrival_prob: clause_prob,
            weights,
        });
    }
    Ok(Instance { num_bins: bins, balls })
}

/// Random formula with `num_vars` variables and `num_clauses` clauses of 1
/// to 3 distinct variables. Only deterministic (odd) variables are ever
/// negated.
pub fn random_ssat(num_vars: usize, num_clauses: usize, seed: u64) -> SsatInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars: Vec<usize> = (1..=num_vars).collect();
    let clauses = (0..num_clauses)
        .map(|_| {
            let size = rng.gen_range(1..=3.min(num_vars.max(1)));
            vars.choose_multiple(&mut rng, size)
                .map(|&var| Literal {
                    var,
                    negated: var % 2 == 1 && rng.gen_bool(0.5),
                })
                .collect()
        })
        .collect();
    SsatInstance { num_vars, clauses }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(lit: Literal, n: usize) -> SsatInstance {
        SsatInstance {
            num_vars: n,
            clauses: vec![vec![lit]],
        }
    }

    #[test]
    fn opt_online_small_cases() {
        assert_eq!(ssat_opt_online(&single(Literal::pos(1), 2), 20).unwrap(), 1.0);
        assert_eq!(ssat_opt_online(&single(Literal::pos(2), 2), 20).unwrap(), 0.5);
        // (x1 ∨ x2) ∧ (¬x1): best is x1 = F, then the coin decides x2.
        let phi = SsatInstance {
            num_vars: 2,
            clauses: vec![vec![Literal::pos(1), Literal::pos(2)], vec![Literal::neg(1)]],
        };
        assert_eq!(ssat_opt_online(&phi, 20).unwrap(), 1.5);
    }

    #[test]
    fn at_least_half_the_clauses() {
        for seed in 0..30 {
            let phi = random_ssat(6, 5, seed);
            assert!(ssat_opt_online(&phi, 20).unwrap() >= 2.5);
            assert!(!phi.random_vars_negated());
        }
    }

    #[test]
    fn opt_online_cap() {
        assert!(matches!(
            ssat_opt_online(&single(Literal::pos(1), 22), 20),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn parse_examples() {
        let phi = parse_dimacs(b"p cnf 2 1\n1 0\n").unwrap();
        assert_eq!(phi, single(Literal::pos(1), 2));
        let err = parse_dimacs(b"c demo\np cnf 2 1\n0\n").unwrap_err();
        assert!(matches!(err, Error::Dimacs { line: 3, .. }), "{err}");
        assert!(matches!(
            parse_dimacs(b"p cnf 2 1\n3 0\n"),
            Err(Error::Dimacs { line: 2, .. })
        ));
        assert!(matches!(parse_dimacs(b"1 0\n"), Err(Error::Dimacs { line: 1, .. })));
        assert!(matches!(
            parse_dimacs(b"p cnf 2 2\n1 0\n"),
            Err(Error::Dimacs { line: 1, .. })
        ));
    }

    #[test]
    fn dimacs_round_trip() {
        for seed in 0..20 {
            let phi = random_ssat(6, 4, seed);
            assert_eq!(parse_dimacs(write_dimacs(&phi).as_bytes()).unwrap(), phi);
        }
        let multi = parse_dimacs(b"p cnf 4 2\n1 -3\n 2 0 4\n0\n").unwrap();
        assert_eq!(multi.clauses[0], vec![Literal::pos(1), Literal::neg(3), Literal::pos(2)]);
    }

    #[test]
    fn reduction_of_single_negated_clause() {
        let inst = reduce_to_ridehail(&single(Literal::neg(1), 2)).unwrap();
        assert_eq!(inst.num_bins, 4);
        assert_eq!(inst.balls.len(), 3);
        let clause = &inst.balls[2];
        assert_eq!(clause.arrival_prob, 1.0);
        assert_eq!(clause.weights, vec![0.0, 0.5, 0.0, 0.0]);
        assert_eq!(inst.balls[0].weights, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(inst.balls[1].weights, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(inst.balls[1].arrival_prob, 0.5);
    }

    #[test]
    fn reduction_shape_and_params() {
        let phi = random_ssat(6, 5, 11);
        let inst = reduce_to_ridehail(&phi).unwrap();
        assert_eq!(inst.num_bins, 12);
        assert_eq!(inst.balls.len(), 11);
        assert!(inst.validate().is_ok());
        let p = ReductionParams::for_formula(&phi).unwrap();
        assert!(p.gamma > 0.0 && p.gamma <= 1.0 / (2.0 * p.k as f64));
        assert_eq!(inst.balls[6].arrival_prob, 5f64.powi(-4));
        let unweighted = reduce_to_ridehail_unweighted(&phi).unwrap();
        assert!(unweighted.balls.iter().flat_map(|b| &b.weights).all(|&w| w == 0.0 || w == 1.0));
    }

    #[test]
    fn reduction_rejects_malformed() {
        assert!(reduce_to_ridehail(&single(Literal::pos(1), 3)).is_err());
        let empty = SsatInstance {
            num_vars: 2,
            clauses: vec![vec![]],
        };
        assert!(reduce_to_ridehail(&empty).is_err());
        let no_clauses = SsatInstance {
            num_vars: 2,
            clauses: vec![],
        };
        assert!(reduce_to_ridehail(&no_clauses).is_err());
    }
}
