//! Reformulations of a geometric-mean objective into forms the barrier
//! solver handles directly.

use super::program::{AffineExpr, ConeProgram, Constraint, Objective, SocConstraint};
use crate::Result;

/// Lower bound placed on geometric-mean variables under the log encoding.
pub const EPS_LOG: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeoMeanEncoding {
    /// Maximize `(1/K) sum ln r_k` with `r_k >= EPS_LOG`.
    #[default]
    LogSum,
    /// Maximize an epigraph variable `t` bounded by a binary tree of
    /// rotated second-order cones `y^2 <= a b`.
    RotatedCones,
}

/// Rewrites a geometric-mean objective. Other objectives are returned
/// unchanged. Original variables keep their indices; the cone encoding only
/// appends auxiliaries.
pub fn encode_geometric_mean(program: &ConeProgram, encoding: GeoMeanEncoding) -> Result<ConeProgram> {
    program.validate()?;
    let Objective::GeometricMean(idx) = &program.objective else {
        return Ok(program.clone());
    };
    let idx = idx.clone();
    let mut out = program.clone();
    match encoding {
        GeoMeanEncoding::LogSum => {
            for &i in &idx {
                let (lo, hi) = out.bounds()[i];
                out.set_bounds(i, lo.max(EPS_LOG), hi.max(EPS_LOG))?;
            }
            out.objective = Objective::LogSum(idx);
        }
        GeoMeanEncoding::RotatedCones => {
            let t = out.add_vars(1);
            let leaves_needed = idx.len().next_power_of_two();
            let mut level: Vec<usize> = idx.clone();
            level.extend(std::iter::repeat_n(t, leaves_needed - idx.len()));
            while level.len() > 1 {
                let mut next = Vec::with_capacity(level.len() / 2);
                for pair in level.chunks(2) {
                    let (a, b) = (pair[0], pair[1]);
                    let y = out.add_vars(1);
                    // ||(2y, a - b)|| <= a + b  <=>  y^2 <= a b, a, b >= 0
                    out.add(Constraint::SecondOrderCone(SocConstraint {
                        rows: vec![AffineExpr::new().term(y, 2.0), AffineExpr::var(a).term(b, -1.0)],
                        bound: AffineExpr::var(a).term(b, 1.0),
                    }))?;
                    next.push(y);
                }
                level = next;
            }
            let root = level[0];
            if root != t {
                out.add(Constraint::Inequality(AffineExpr::var(t).term(root, -1.0)))?;
            }
            if idx.len() == 1 {
                out.set_lower(t, 0.0)?;
            }
            out.objective = Objective::Linear(AffineExpr::var(t));
        }
    }
    Ok(out)
}
