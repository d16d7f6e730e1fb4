use nalgebra::DMatrix;

use crate::{Error, Result};

/// Relative PSD tolerance for quadratic constraint matrices.
pub const PSD_TOL: f64 = 1e-9;

/// `sum coef_i x_i + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Self {
            terms: vec![(i, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, i: usize, c: f64) -> Self {
        self.terms.push((i, c));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }

    fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|&(i, _)| i).max()
    }
}

/// `x_S^T Q x_S + a^T x + b <= 0` with `Q` PSD over the variable subset `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConstraint {
    pub vars: Vec<usize>,
    pub q: DMatrix<f64>,
    pub linear: AffineExpr,
}

impl QuadraticConstraint {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.vars.len();
        let mut quad = 0.0;
        for a in 0..n {
            let xa = x[self.vars[a]];
            for b in 0..n {
                quad += xa * self.q[(a, b)] * x[self.vars[b]];
            }
        }
        quad + self.linear.eval(x)
    }
}

/// `|| (row_1(x), ..., row_r(x)) || <= bound(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub rows: Vec<AffineExpr>,
    pub bound: AffineExpr,
}

impl SocConstraint {
    /// `||rows|| - bound`, nonpositive when satisfied.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.rows.iter().map(|r| r.eval(x).powi(2)).sum::<f64>().sqrt() - self.bound.eval(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `a^T x + b = 0`
    Equality(AffineExpr),
    /// `a^T x + b <= 0`
    Inequality(AffineExpr),
    Quadratic(QuadraticConstraint),
    SecondOrderCone(SocConstraint),
}

impl Constraint {
    /// Amount by which `x` violates the constraint, `0` when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Equality(e) => e.eval(x).abs(),
            Constraint::Inequality(e) => e.eval(x).max(0.0),
            Constraint::Quadratic(q) => q.eval(x).max(0.0),
            Constraint::SecondOrderCone(s) => s.eval(x).max(0.0),
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            Constraint::Equality(e) | Constraint::Inequality(e) => e.max_index(),
            Constraint::Quadratic(q) => q.vars.iter().copied().max().max(q.linear.max_index()),
            Constraint::SecondOrderCone(s) => s
                .rows
                .iter()
                .filter_map(AffineExpr::max_index)
                .max()
                .max(s.bound.max_index()),
        }
    }
}

/// What the program maximizes.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `(prod_{i in S} x_i)^{1/|S|}`
    GeometricMean(Vec<usize>),
    /// `c^T x + c0`
    Linear(AffineExpr),
    /// `(1/|S|) sum_{i in S} ln x_i`; produced by the log encoding of a
    /// geometric mean.
    LogSum(Vec<usize>),
}

impl Objective {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Objective::GeometricMean(idx) => {
                let k = idx.len() as f64;
                (idx.iter().map(|&i| x[i].ln()).sum::<f64>() / k).exp()
            }
            Objective::Linear(c) => c.eval(x),
            Objective::LogSum(idx) => idx.iter().map(|&i| x[i].ln()).sum::<f64>() / idx.len() as f64,
        }
    }
}

/// Solver-agnostic convex maximization problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeProgram {
    num_vars: usize,
    pub objective: Objective,
    constraints: Vec<Constraint>,
    bounds: Vec<(f64, f64)>,
}

impl ConeProgram {
    pub fn new(num_vars: usize, objective: Objective) -> Self {
        Self {
            num_vars,
            objective,
            constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Appends fresh variables and returns the index of the first.
    pub fn add_vars(&mut self, count: usize) -> usize {
        let first = self.num_vars;
        self.num_vars += count;
        self.bounds
            .extend(std::iter::repeat_n((f64::NEG_INFINITY, f64::INFINITY), count));
        first
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) -> Result<()> {
        if var >= self.num_vars {
            return Err(Error::DimensionMismatch(format!("bound on variable {var}")));
        }
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidInput(format!("bad bounds [{lo}, {hi}] on {var}")));
        }
        self.bounds[var] = (lo, hi);
        Ok(())
    }

    pub fn set_lower(&mut self, var: usize, lo: f64) -> Result<()> {
        let hi = self.bounds.get(var).map_or(f64::INFINITY, |b| b.1);
        self.set_bounds(var, lo, hi)
    }

    /// Adds a constraint after checking indices and, for quadratics, that
    /// `Q` is symmetric PSD.
    pub fn add(&mut self, c: Constraint) -> Result<()> {
        if let Some(i) = c.max_index() {
            if i >= self.num_vars {
                return Err(Error::DimensionMismatch(format!(
                    "constraint references variable {i} of {}",
                    self.num_vars
                )));
            }
        }
        if let Constraint::Quadratic(q) = &c {
            let n = q.vars.len();
            if q.q.nrows() != n || q.q.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "Q is {}x{} for {n} variables",
                    q.q.nrows(),
                    q.q.ncols()
                )));
            }
            if n > 0 {
                let sym = (&q.q + q.q.transpose()) * 0.5;
                let eig = sym.symmetric_eigenvalues();
                let scale = eig.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
                let min = eig.min();
                if min < -PSD_TOL * scale || (&q.q - q.q.transpose()).amax() > 1e-12 * scale {
                    return Err(Error::NotPsd {
                        index: self.constraints.len(),
                        min_eig: min,
                    });
                }
            }
        }
        self.constraints.push(c);
        Ok(())
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let cons = self.constraints.iter().map(|c| c.violation(x));
        let bnds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0));
        cons.chain(bnds).fold(0.0, f64::max)
    }

    /// True when every inequality and bound holds strictly and every
    /// equality holds to `1e-12`.
    pub fn is_strictly_feasible(&self, x: &[f64]) -> bool {
        if x.len() != self.num_vars || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let cons = self.constraints.iter().all(|c| match c {
            Constraint::Equality(e) => e.eval(x).abs() <= 1e-12,
            Constraint::Inequality(e) => e.eval(x) < 0.0,
            Constraint::Quadratic(q) => q.eval(x) < 0.0,
            Constraint::SecondOrderCone(s) => s.eval(x) < 0.0,
        });
        cons && self.bounds.iter().zip(x).all(|(&(lo, hi), &v)| lo < v && v < hi)
    }

    pub fn validate(&self) -> Result<()> {
        let idx_ok = |idx: &[usize]| idx.iter().all(|&i| i < self.num_vars);
        match &self.objective {
            Objective::GeometricMean(idx) | Objective::LogSum(idx) => {
                if idx.is_empty() || !idx_ok(idx) {
                    return Err(Error::InvalidInput("bad objective variable set".into()));
                }
            }
            Objective::Linear(c) => {
                if c.max_index().is_some_and(|i| i >= self.num_vars) {
                    return Err(Error::InvalidInput("objective index out of range".into()));
                }
            }
        }
        Ok(())
    }
}
