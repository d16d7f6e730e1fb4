//! Convex program description and a deterministic interior-point solver.

mod dump;
mod encode;
mod program;
mod solver;

pub use dump::{dump_program, write_program};
pub use encode::{encode_geometric_mean, GeoMeanEncoding, EPS_LOG};
pub use program::{AffineExpr, ConeProgram, Constraint, Objective, QuadraticConstraint, SocConstraint, PSD_TOL};
pub use solver::{solve, SolveOptions, SolveReport, SolveStatus, FEAS_TOL, KKT_TOL};
