//! Plain-text rendering of a [`ConeProgram`] for offline inspection.
//!
//! ```text
//! cone-program vars=4 constraints=2 bounds=1
//! objective geomean 2 3
//! bound 2 1.1 inf
//! ineq 0:1 1:1 const=-4
//! quad vars=0,1 q=[1,0;0,1] lin=2:-1 const=0
//! soc rows=[0:2 | 0:1 1:-1] bound=0:1 1:1 const=0
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::program::{AffineExpr, ConeProgram, Constraint, Objective};
use crate::Result;

fn terms(e: &AffineExpr) -> String {
    let mut s = e.terms.iter().map(|(i, c)| format!("{i}:{c:e}")).collect::<Vec<_>>().join(" ");
    if !s.is_empty() {
        s.push(' ');
    }
    let _ = write!(s, "const={:e}", e.constant);
    s
}

fn indices(idx: &[usize]) -> String {
    idx.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

pub fn dump_program(p: &ConeProgram) -> String {
    let bounded: Vec<_> = p
        .bounds()
        .iter()
        .enumerate()
        .filter(|(_, b)| b.0.is_finite() || b.1.is_finite())
        .collect();
    let mut out = format!(
        "cone-program vars={} constraints={} bounds={}\n",
        p.num_vars(),
        p.constraints().len(),
        bounded.len()
    );
    let obj = match &p.objective {
        Objective::GeometricMean(idx) => format!("objective geomean {}", indices(idx)),
        Objective::LogSum(idx) => format!("objective logsum {}", indices(idx)),
        Objective::Linear(c) => format!("objective linear {}", terms(c)),
    };
    out.push_str(&obj);
    out.push('\n');
    for (i, (lo, hi)) in bounded {
        let _ = writeln!(out, "bound {i} {lo:e} {hi:e}");
    }
    for c in p.constraints() {
        let line = match c {
            Constraint::Equality(e) => format!("eq {}", terms(e)),
            Constraint::Inequality(e) => format!("ineq {}", terms(e)),
            Constraint::Quadratic(q) => {
                let rows: Vec<String> = q
                    .q
                    .row_iter()
                    .map(|r| r.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(","))
                    .collect();
                let vars = q.vars.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
                format!("quad vars={vars} q=[{}] lin={}", rows.join(";"), terms(&q.linear))
            }
            Constraint::SecondOrderCone(s) => {
                let rows: Vec<String> = s.rows.iter().map(terms).collect();
                format!("soc rows=[{}] bound={}", rows.join(" | "), terms(&s.bound))
            }
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn write_program(p: &ConeProgram, path: &Path) -> Result<()> {
    std::fs::write(path, dump_program(p)).map_err(|e| crate::Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::SocConstraint;

    #[test]
    fn header_and_one_record_per_constraint() {
        let mut p = ConeProgram::new(3, Objective::GeometricMean(vec![1, 2]));
        p.set_bounds(1, 1.1, f64::INFINITY).unwrap();
        p.add(Constraint::Inequality(AffineExpr::var(1).term(2, 1.0).plus(-4.0))).unwrap();
        p.add(Constraint::SecondOrderCone(SocConstraint {
            rows: vec![AffineExpr::var(0)],
            bound: AffineExpr::constant(1.0),
        }))
        .unwrap();
        let text = dump_program(&p);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "cone-program vars=3 constraints=2 bounds=1");
        assert_eq!(lines[1], "objective geomean 1 2");
        assert!(lines[2].starts_with("bound 1 "));
        assert!(lines[3].starts_with("ineq 1:1e0 2:1e0 const=-4e0"));
        assert!(lines[4].starts_with("soc rows=[0:1e0 const=0e0]"));
        assert_eq!(lines.len(), 5);
    }
}
