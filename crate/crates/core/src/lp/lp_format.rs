use std::fmt::Write;

use super::{LpProblem, Sense};

const TERMS_PER_LINE: usize = 6;

/// Renders the problem in CPLEX LP text format. Variables are named
/// `y_<bin>_<ball>_<realization>` (1-based) and default to `>= 0`.
pub fn write_lp_format(lp: &LpProblem) -> String {
    let mut out = String::new();
    let names: Vec<String> = lp.vars.iter().map(|v| v.name()).collect();

    out.push_str("\\ online matching LP\nMaximize\n obj:");
    write_terms(
        &mut out,
        lp.objective.iter().enumerate().map(|(v, &c)| (v, c)),
        &names,
    );
    out.push_str("\nSubject To\n");
    for c in &lp.constraints {
        let _ = write!(out, " {}:", c.family.label());
        write_terms(&mut out, c.coeffs.iter().copied(), &names);
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", c.rhs);
    }
    out.push_str("Bounds\n");
    for name in &names {
        let _ = writeln!(out, " {name} >= 0");
    }
    out.push_str("End\n");
    out
}

fn write_terms(out: &mut String, terms: impl Iterator<Item = (usize, f64)>, names: &[String]) {
    let mut written = 0;
    for (v, c) in terms {
        if written > 0 && written % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", c.abs(), names[v]);
        written += 1;
    }
    if written == 0 {
        // An empty expression is not valid LP syntax.
        out.push_str(" 0 y_dummy");
    }
}
