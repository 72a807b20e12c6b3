//! The in-repo simplex against an external LP solver, against brute-force
//! vertex enumeration, and against a re-solve of the dumped LP text.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use ridehail::instance::{gap_instance, lift_to_general, random_general_instance, random_instance};
use ridehail::lp::{
    build_lp_match_gen, check_online_feasible, solve, solve_with, write_lp_format, LpProblem, LpSolver, Sense,
};
use ridehail::oracle::{opt_online_marginals, OracleCaps};
use ridehail::Result;

struct Minilp;

impl LpSolver for Minilp {
    fn solve_primal(&self, lp: &LpProblem) -> Result<Vec<f64>> {
        let mut p = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = lp.objective.iter().map(|&c| p.add_var(c, (0.0, f64::INFINITY))).collect();
        for c in &lp.constraints {
            let expr: Vec<_> = c.coeffs.iter().map(|&(v, a)| (vars[v], a)).collect();
            p.add_constraint(expr.as_slice(), op(c.sense), c.rhs);
        }
        let sol = p.solve().expect("reference solver");
        Ok(vars.iter().map(|&v| *sol.var_value(v)).collect())
    }
}

fn op(sense: Sense) -> ComparisonOp {
    match sense {
        Sense::Le => ComparisonOp::Le,
        Sense::Ge => ComparisonOp::Ge,
        Sense::Eq => ComparisonOp::Eq,
    }
}

#[test]
fn matches_reference_solver_on_random_instances() {
    for seed in 0..15 {
        let basic = lift_to_general(&random_instance(4, 6, seed, 1.0)).unwrap();
        let general = random_general_instance(3, 5, 3, seed, 2.0);
        for g in [basic, general] {
            let lp = build_lp_match_gen(&g).unwrap();
            let ours = solve(&lp).unwrap();
            let theirs = solve_with(&Minilp, &lp).unwrap();
            assert!(
                (ours.objective - theirs.objective).abs() < 1e-6,
                "seed {seed}: {} vs {}",
                ours.objective,
                theirs.objective
            );
            assert!(check_online_feasible(&ours.values, &g).is_feasible());
        }
    }
}

/// Best objective over all basic feasible points, by solving every square
/// subsystem of active constraints (including `y >= 0`).
fn vertex_enumeration(lp: &LpProblem) -> f64 {
    let n = lp.num_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut ineqs: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for c in &lp.constraints {
        let mut a = vec![0.0; n];
        for &(v, x) in &c.coeffs {
            a[v] += x;
        }
        rows.push((a.clone(), c.rhs));
        ineqs.push((a, c.sense, c.rhs));
    }
    for v in 0..n {
        let mut a = vec![0.0; n];
        a[v] = 1.0;
        rows.push((a.clone(), 0.0));
        ineqs.push((a, Sense::Ge, 0.0));
    }
    let mut best = f64::NEG_INFINITY;
    let k = rows.len();
    let mut pick = (0..n).collect::<Vec<_>>();
    loop {
        if let Some(x) = solve_square(&pick.iter().map(|&r| rows[r].clone()).collect::<Vec<_>>()) {
            let feasible = ineqs.iter().all(|(a, s, b)| {
                let lhs: f64 = a.iter().zip(&x).map(|(p, q)| p * q).sum();
                match s {
                    Sense::Le => lhs <= b + 1e-9,
                    Sense::Ge => lhs >= b - 1e-9,
                    Sense::Eq => (lhs - b).abs() <= 1e-9,
                }
            });
            if feasible {
                best = best.max(lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum());
            }
        }
        // Next combination of n rows out of k.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < k - n + i {
                pick[i] += 1;
                for j in i + 1..n {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_square(rows: &[(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let n = rows.len();
    let mut a: Vec<Vec<f64>> = rows
        .iter()
        .map(|(r, b)| {
            let mut row = r.clone();
            row.push(*b);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

#[test]
fn matches_vertex_enumeration_on_tiny_instances() {
    for seed in 0..20 {
        let (bins, balls) = [(1, 2), (2, 2), (1, 3), (2, 1)][seed as usize % 4];
        let g = lift_to_general(&random_instance(bins, balls, 100 + seed, 1.0)).unwrap();
        let lp = build_lp_match_gen(&g).unwrap();
        let ours = solve(&lp).unwrap().objective;
        let brute = vertex_enumeration(&lp);
        assert!((ours - brute).abs() < 1e-9, "seed {seed}: {ours} vs {brute}");
    }
    let lp = build_lp_match_gen(&gap_instance()).unwrap();
    assert!((vertex_enumeration(&lp) - 2.0).abs() < 1e-9);
}

/// Reads the subset of CPLEX LP text that the writer produces.
fn parse_lp_text(text: &str) -> (Vec<String>, Vec<f64>, Vec<(Vec<(String, f64)>, String, f64)>) {
    let mut section = "";
    let mut objective_terms = Vec::new();
    let mut constraints: Vec<(Vec<(String, f64)>, String, f64)> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let flush = |tokens: &mut Vec<String>| -> (Vec<(String, f64)>, Option<(String, f64)>) {
        let mut terms = Vec::new();
        let mut rel = None;
        let mut k = 0;
        while k < tokens.len() {
            match tokens[k].as_str() {
                "+" | "-" => {
                    let sign = if tokens[k] == "-" { -1.0 } else { 1.0 };
                    let coef: f64 = tokens[k + 1].parse().unwrap();
                    terms.push((tokens[k + 2].clone(), sign * coef));
                    k += 3;
                }
                "<=" | ">=" | "=" => {
                    rel = Some((tokens[k].clone(), tokens[k + 1].parse().unwrap()));
                    k += 2;
                }
                other => panic!("unexpected token {other:?}"),
            }
        }
        tokens.clear();
        (terms, rel)
    };
    for line in text.lines() {
        let trimmed = line.trim();
        match trimmed {
            "Maximize" => section = "obj",
            "Subject To" => {
                let (terms, _) = flush(&mut current);
                objective_terms = terms;
                section = "st";
            }
            "Bounds" => section = "bounds",
            "End" => break,
            _ if trimmed.starts_with('\\') => {}
            _ if section == "bounds" => {
                let name = trimmed.split_whitespace().next().unwrap().to_string();
                assert!(trimmed.ends_with(">= 0"));
                names.push(name);
            }
            _ => {
                let body = match trimmed.split_once(':') {
                    Some((_, rest)) => rest,
                    None => trimmed,
                };
                current.extend(body.split_whitespace().map(String::from));
                if section == "st" && current.iter().any(|t| t == "<=" || t == ">=" || t == "=") {
                    let (terms, rel) = flush(&mut current);
                    let (op, rhs) = rel.unwrap();
                    constraints.push((terms, op, rhs));
                }
            }
        }
    }
    let objective = names
        .iter()
        .map(|n| objective_terms.iter().filter(|(m, _)| m == n).map(|(_, c)| c).sum())
        .collect();
    (names, objective, constraints)
}

#[test]
fn dumped_lp_resolves_to_the_same_optimum() {
    for seed in 0..8 {
        let g = random_general_instance(3, 4, 2, 40 + seed, 1.0);
        let lp = build_lp_match_gen(&g).unwrap();
        let (names, objective, constraints) = parse_lp_text(&write_lp_format(&lp));
        assert_eq!(names.len(), lp.num_vars());
        assert_eq!(constraints.len(), lp.constraints.len());

        let mut p = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = objective.iter().map(|&c| p.add_var(c, (0.0, f64::INFINITY))).collect();
        for (terms, rel, rhs) in &constraints {
            let expr: Vec<_> = terms
                .iter()
                .map(|(n, c)| (vars[names.iter().position(|m| m == n).unwrap()], *c))
                .collect();
            let cmp = match rel.as_str() {
                "<=" => ComparisonOp::Le,
                ">=" => ComparisonOp::Ge,
                _ => ComparisonOp::Eq,
            };
            p.add_constraint(expr.as_slice(), cmp, *rhs);
        }
        let external = p.solve().unwrap().objective();
        let ours = solve(&lp).unwrap().objective;
        assert!((external - ours).abs() < 1e-6, "seed {seed}: {external} vs {ours}");
    }
}

#[test]
fn optimal_online_marginals_are_lp_feasible() {
    for seed in 0..10 {
        let g = lift_to_general(&random_instance(3, 3, 300 + seed, 1.0)).unwrap();
        let x = opt_online_marginals(&g, OracleCaps::default()).unwrap();
        let report = check_online_feasible(&x.values, &g);
        assert!(report.is_feasible(), "{report}");
        assert!(solve(&build_lp_match_gen(&g).unwrap()).unwrap().objective >= x.value - 1e-9);
    }
}
