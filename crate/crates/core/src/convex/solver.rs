//! Primal log-barrier interior-point method.
//!
//! Every inequality `c_i(x) <= 0` (affine, convex quadratic or second-order
//! cone) contributes a self-concordant barrier term. For increasing `t` the
//! solver minimizes `t f0(x) + phi(x)` with damped Newton steps, keeping any
//! affine equalities satisfied through the KKT system. The duality gap of a
//! centered point is `theta / t`, where `theta` counts barrier degrees
//! (one per scalar constraint, two per cone).
//!
//! A strictly feasible start is found with a phase-I problem
//! `min s  s.t.  c_i(x) / scale_i <= s` unless the warm start already is one.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::encode::{encode_geometric_mean, GeoMeanEncoding};
use super::program::{AffineExpr, ConeProgram, Constraint, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Target duality gap.
    pub tol: f64,
    /// Budget of Newton steps across both phases.
    pub max_iter: usize,
    pub warm_start: Option<Vec<f64>>,
    pub encoding: GeoMeanEncoding,
    /// Barrier parameter growth factor.
    pub mu: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 400,
            warm_start: None,
            encoding: GeoMeanEncoding::LogSum,
            mu: 50.0,
        }
    }
}

/// Reported feasibility tolerance for an optimal point.
pub const FEAS_TOL: f64 = 1e-7;
/// Reported optimality (KKT) tolerance for an optimal point.
pub const KKT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Primal point in the caller's variable space.
    pub x: Vec<f64>,
    /// Objective of the caller's program at `x`.
    pub objective_value: f64,
    /// Bound on the suboptimality of `x` for the encoded problem: the
    /// barrier gap `theta / t` plus the Newton decrement term of the last
    /// centering step.
    pub kkt_residual: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone)]
struct Sparse {
    idx: Vec<usize>,
    coef: Vec<f64>,
    constant: f64,
}

impl Sparse {
    fn from_expr(e: &AffineExpr, scale: f64) -> Self {
        // merge duplicates
        let mut pairs: Vec<(usize, f64)> = e.terms.clone();
        pairs.sort_by_key(|p| p.0);
        let mut idx: Vec<usize> = Vec::with_capacity(pairs.len());
        let mut coef: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, c) in pairs {
            if idx.last() == Some(&i) {
                *coef.last_mut().unwrap() += c / scale;
            } else {
                idx.push(i);
                coef.push(c / scale);
            }
        }
        Self {
            idx,
            coef,
            constant: e.constant / scale,
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.coef).map(|(&i, &c)| c * x[i]).sum::<f64>() + self.constant
    }

    fn max_abs(&self) -> f64 {
        self.coef.iter().fold(self.constant.abs(), |a, &c| a.max(c.abs()))
    }
}

#[derive(Debug, Clone)]
enum Term {
    /// `x_S^T Q x_S + lin(x) <= 0`
    Scalar {
        quad: Option<(Vec<usize>, DMatrix<f64>)>,
        lin: Sparse,
        support: Vec<usize>,
        quad_pos: Vec<usize>,
        lin_pos: Vec<usize>,
    },
    /// `||rows(x)|| <= bound(x)`
    Cone {
        rows: Vec<Sparse>,
        bound: Sparse,
        support: Vec<usize>,
    },
}

fn gather(vars: &[usize], x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(vars.len(), vars.iter().map(|&i| x[i]))
}

fn union_support<'a>(parts: impl Iterator<Item = &'a [usize]>) -> Vec<usize> {
    let mut s: Vec<usize> = parts.flat_map(|p| p.iter().copied()).collect();
    s.sort_unstable();
    s.dedup();
    s
}

fn positions(support: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter()
        .map(|i| support.binary_search(i).expect("index in support"))
        .collect()
}

impl Term {
    fn scalar(quad: Option<(Vec<usize>, DMatrix<f64>)>, lin: Sparse) -> Self {
        let qvars: &[usize] = quad.as_ref().map_or(&[], |q| &q.0);
        let support = union_support([qvars, &lin.idx[..]].into_iter());
        let quad_pos = positions(&support, qvars);
        let lin_pos = positions(&support, &lin.idx);
        Term::Scalar {
            quad,
            lin,
            support,
            quad_pos,
            lin_pos,
        }
    }

    fn cone(rows: Vec<Sparse>, bound: Sparse) -> Self {
        let support = union_support(rows.iter().map(|r| &r.idx[..]).chain(std::iter::once(&bound.idx[..])));
        Term::Cone { rows, bound, support }
    }

    fn degree(&self) -> f64 {
        match self {
            Term::Scalar { .. } => 1.0,
            Term::Cone { .. } => 2.0,
        }
    }

    /// Constraint value; nonpositive when satisfied.
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Term::Scalar { quad, lin, .. } => {
                let mut v = lin.eval(x);
                if let Some((vars, q)) = quad {
                    let xs = gather(vars, x);
                    v += xs.dot(&(q * &xs));
                }
                v
            }
            Term::Cone { rows, bound, .. } => {
                rows.iter().map(|r| r.eval(x).powi(2)).sum::<f64>().sqrt() - bound.eval(x)
            }
        }
    }

    /// Barrier value, `None` outside the open domain.
    fn barrier(&self, x: &[f64]) -> Option<f64> {
        match self {
            Term::Scalar { .. } => {
                let c = self.value(x);
                (c < 0.0).then(|| -(-c).ln())
            }
            Term::Cone { rows, bound, .. } => {
                let u = bound.eval(x);
                let d = u * u - rows.iter().map(|r| r.eval(x).powi(2)).sum::<f64>();
                (u > 0.0 && d > 0.0).then(|| -d.ln())
            }
        }
    }

    /// Adds the barrier gradient and Hessian at `x` into `g`, `h`.
    fn accumulate(&self, x: &[f64], g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        match self {
            Term::Scalar {
                quad,
                lin,
                support,
                quad_pos,
                lin_pos,
            } => {
                let n = h.nrows();
                let mut grad = vec![0.0; support.len()];
                for (&p, &a) in lin_pos.iter().zip(&lin.coef) {
                    grad[p] += a;
                }
                let mut c = lin.eval(x);
                if let Some((vars, q)) = quad {
                    let xs = gather(vars, x);
                    let qx = q * &xs;
                    c += xs.dot(&qx);
                    for (a, &p) in quad_pos.iter().enumerate() {
                        grad[p] += 2.0 * qx[a];
                    }
                }
                let inv = 1.0 / (-c);
                let hs = h.as_mut_slice();
                if let Some((vars, q)) = quad {
                    for (b, &ib) in vars.iter().enumerate() {
                        let col = &mut hs[ib * n..(ib + 1) * n];
                        for (a, &ia) in vars.iter().enumerate() {
                            col[ia] += 2.0 * q[(a, b)] * inv;
                        }
                    }
                }
                for v in grad.iter_mut() {
                    *v *= inv;
                }
                for (pb, &ib) in support.iter().enumerate() {
                    g[ib] += grad[pb];
                    let gb = grad[pb];
                    let col = &mut hs[ib * n..(ib + 1) * n];
                    for (pa, &ia) in support.iter().enumerate() {
                        col[ia] += grad[pa] * gb;
                    }
                }
            }
            Term::Cone { rows, bound, support } => {
                let u = bound.eval(x);
                let vals: Vec<f64> = rows.iter().map(|r| r.eval(x)).collect();
                let d = u * u - vals.iter().map(|v| v * v).sum::<f64>();
                let ns = support.len();
                let pos = |i: usize| support.binary_search(&i).expect("support");
                let mut grad_u = vec![0.0; ns];
                for (&i, &c) in bound.idx.iter().zip(&bound.coef) {
                    grad_u[pos(i)] += c;
                }
                let grad_rows: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|r| {
                        let mut gr = vec![0.0; ns];
                        for (&i, &c) in r.idx.iter().zip(&r.coef) {
                            gr[pos(i)] += c;
                        }
                        gr
                    })
                    .collect();
                // grad D = 2u grad u - 2 sum v_j grad v_j
                let mut grad_d = vec![0.0; ns];
                for p in 0..ns {
                    let mut s = 2.0 * u * grad_u[p];
                    for (v, gr) in vals.iter().zip(&grad_rows) {
                        s -= 2.0 * v * gr[p];
                    }
                    grad_d[p] = s;
                }
                for (pa, &ia) in support.iter().enumerate() {
                    g[ia] -= grad_d[pa] / d;
                    for (pb, &ib) in support.iter().enumerate() {
                        let mut hess_d = 2.0 * grad_u[pa] * grad_u[pb];
                        for gr in &grad_rows {
                            hess_d -= 2.0 * gr[pa] * gr[pb];
                        }
                        h[(ia, ib)] += grad_d[pa] * grad_d[pb] / (d * d) - hess_d / d;
                    }
                }
            }
        }
    }

    fn scale(&self) -> f64 {
        match self {
            Term::Scalar { quad, lin, .. } => {
                let q = quad.as_ref().map_or(0.0, |(_, q)| q.amax());
                lin.max_abs().max(q)
            }
            Term::Cone { rows, bound, .. } => rows.iter().fold(bound.max_abs(), |a, r| a.max(r.max_abs())),
        }
    }

    /// Copy with coefficients divided by `scale` and `-s` (scalar) or `+s`
    /// (cone bound) added for the phase-I slack at index `s`.
    fn with_slack(&self, s: usize, scale: f64) -> Term {
        let shift = |sp: &Sparse, coef: f64| -> Sparse {
            let mut out = Sparse {
                idx: sp.idx.clone(),
                coef: sp.coef.iter().map(|c| c / scale).collect(),
                constant: sp.constant / scale,
            };
            out.idx.push(s);
            out.coef.push(coef);
            out
        };
        match self {
            Term::Scalar { quad, lin, .. } => {
                let q = quad.as_ref().map(|(v, q)| (v.clone(), q / scale));
                Term::scalar(q, shift(lin, -1.0))
            }
            Term::Cone { rows, bound, .. } => {
                let rows = rows
                    .iter()
                    .map(|r| Sparse {
                        idx: r.idx.clone(),
                        coef: r.coef.iter().map(|c| c / scale).collect(),
                        constant: r.constant / scale,
                    })
                    .collect();
                Term::cone(rows, shift(bound, 1.0))
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Goal {
    /// minimize `-(c^T x)`
    Linear(Sparse),
    /// minimize `-(1/K) sum ln x_i`
    NegLogSum(Vec<usize>),
    /// minimize `x_s`
    Slack(usize),
}

impl Goal {
    fn value(&self, x: &[f64]) -> Option<f64> {
        match self {
            Goal::Linear(c) => Some(-c.eval(x)),
            Goal::NegLogSum(idx) => {
                if idx.iter().any(|&i| !(x[i] > 0.0)) {
                    return None;
                }
                Some(-idx.iter().map(|&i| x[i].ln()).sum::<f64>() / idx.len() as f64)
            }
            Goal::Slack(s) => Some(x[*s]),
        }
    }

    fn accumulate(&self, x: &[f64], t: f64, g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        match self {
            Goal::Linear(c) => {
                for (&i, &a) in c.idx.iter().zip(&c.coef) {
                    g[i] -= t * a;
                }
            }
            Goal::NegLogSum(idx) => {
                let k = idx.len() as f64;
                for &i in idx {
                    g[i] -= t / (k * x[i]);
                    h[(i, i)] += t / (k * x[i] * x[i]);
                }
            }
            Goal::Slack(s) => g[*s] += t,
        }
    }
}

struct Barrier<'a> {
    n: usize,
    terms: &'a [Term],
    goal: Goal,
    eq: Option<(DMatrix<f64>, DVector<f64>)>,
    theta: f64,
}

enum Centering {
    Done,
    Stalled,
    Budget,
    Numerical,
    Unbounded,
}

struct Outcome {
    x: Vec<f64>,
    t: f64,
    stationarity: f64,
}

impl Barrier<'_> {
    fn merit(&self, x: &[f64], t: f64) -> Option<f64> {
        let mut v = t * self.goal.value(x)?;
        for term in self.terms {
            v += term.barrier(x)?;
        }
        Some(v)
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        self.goal.value(x).is_some() && self.terms.iter().all(|t| t.barrier(x).is_some())
    }

    fn newton(&self, x: &[f64], t: f64) -> Option<(DVector<f64>, f64)> {
        let n = self.n;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        self.goal.accumulate(x, t, &mut g, &mut h);
        for term in self.terms {
            term.accumulate(x, &mut g, &mut h);
        }
        if !g.iter().all(|v| v.is_finite()) || !h.iter().all(|v| v.is_finite()) {
            return None;
        }
        let step = match &self.eq {
            None => solve_spd(&h, &(-&g))?,
            Some((a, _)) => {
                let m = a.nrows();
                let mut kkt = DMatrix::zeros(n + m, n + m);
                kkt.view_mut((0, 0), (n, n)).copy_from(&h);
                kkt.view_mut((n, 0), (m, n)).copy_from(a);
                kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
                let mut rhs = DVector::zeros(n + m);
                rhs.rows_mut(0, n).copy_from(&(-&g));
                let sol = kkt.lu().solve(&rhs)?;
                sol.rows(0, n).into_owned()
            }
        };
        let dec2 = -g.dot(&step);
        if !dec2.is_finite() {
            return None;
        }
        Some((step, dec2.max(0.0)))
    }

    fn center(&self, x: &mut Vec<f64>, t: f64, budget: &mut usize, early_exit: &dyn Fn(&[f64]) -> bool) -> (Centering, f64) {
        let mut last_resid = f64::INFINITY;
        for _ in 0..100 {
            if *budget == 0 {
                return (Centering::Budget, last_resid);
            }
            let Some((step, dec2)) = self.newton(x, t) else {
                return (Centering::Numerical, last_resid);
            };
            // suboptimality of the centering step in objective units
            last_resid = dec2 / t;
            if dec2 / 2.0 <= 1e-12 {
                return (Centering::Done, last_resid);
            }
            *budget -= 1;
            let trial = |s: f64| -> Vec<f64> { x.iter().zip(step.iter()).map(|(a, b)| a + s * b).collect() };
            // Pure Newton inside the quadratic-convergence region; Armijo
            // backtracking otherwise. Leaving the domain always halves.
            let damped = dec2.sqrt() > 0.25;
            let f0 = if damped { self.merit(x, t) } else { Some(0.0) };
            let Some(f0) = f0 else {
                return (Centering::Numerical, last_resid);
            };
            let mut s = 1.0;
            let xn = loop {
                let xn = trial(s);
                let accept = if damped {
                    self.merit(&xn, t).is_some_and(|f1| f1 <= f0 - 0.25 * s * dec2)
                } else {
                    self.in_domain(&xn)
                };
                if accept {
                    break xn;
                }
                s *= 0.5;
                if s < 1e-14 {
                    return (Centering::Stalled, last_resid);
                }
            };
            *x = xn;
            if x.iter().any(|v| v.abs() > 1e12) {
                return (Centering::Unbounded, last_resid);
            }
            if early_exit(x) {
                return (Centering::Done, last_resid);
            }
        }
        (Centering::Stalled, last_resid)
    }

    /// Runs the barrier outer loop from a strictly feasible `x`. `early_exit`
    /// is checked after every Newton step, `settled` after every centering.
    fn run(
        &self,
        mut x: Vec<f64>,
        tol: f64,
        mu: f64,
        budget: &mut usize,
        early_exit: &dyn Fn(&[f64]) -> bool,
        settled: &dyn Fn(&[f64]) -> bool,
    ) -> (Result<(), SolveStatus>, Outcome) {
        let mut t = 1.0;
        loop {
            let (state, stationarity) = self.center(&mut x, t, budget, early_exit);
            let out = |x: Vec<f64>| Outcome { x, t, stationarity };
            match state {
                Centering::Done | Centering::Stalled => {}
                Centering::Budget => return (Err(SolveStatus::MaxIterations), out(x)),
                Centering::Numerical => return (Err(SolveStatus::NumericalFailure), out(x)),
                Centering::Unbounded => return (Err(SolveStatus::Unbounded), out(x)),
            }
            if early_exit(&x) || settled(&x) || self.theta / t <= tol {
                return (Ok(()), out(x));
            }
            t *= mu;
        }
    }
}

/// Cholesky with Jacobi scaling and escalating diagonal regularization.
fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let d: DVector<f64> = DVector::from_fn(n, |i, _| 1.0 / h[(i, i)].abs().max(1e-300).sqrt());
    let mut hs = h.clone();
    for (j, col) in hs.as_mut_slice().chunks_mut(n).enumerate() {
        for (i, v) in col.iter_mut().enumerate() {
            *v *= d[i] * d[j];
        }
    }
    let rs = rhs.component_mul(&d);
    let mut reg = 0.0;
    for _ in 0..8 {
        let mut m = hs.clone();
        if reg > 0.0 {
            for i in 0..n {
                m[(i, i)] += reg;
            }
        }
        if let Some(ch) = m.cholesky() {
            let y = ch.solve(&rs);
            return Some(y.component_mul(&d));
        }
        reg = if reg == 0.0 { 1e-12 } else { reg * 100.0 };
    }
    None
}

fn build_terms(program: &ConeProgram) -> (Vec<Term>, Vec<&AffineExpr>) {
    let mut terms = Vec::new();
    let mut eqs = Vec::new();
    for c in program.constraints() {
        match c {
            Constraint::Equality(e) => eqs.push(e),
            Constraint::Inequality(e) => terms.push(Term::scalar(None, Sparse::from_expr(e, 1.0))),
            Constraint::Quadratic(q) => {
                let quad = (!q.vars.is_empty()).then(|| {
                    let sym = (&q.q + q.q.transpose()) * 0.5;
                    (q.vars.clone(), sym)
                });
                terms.push(Term::scalar(quad, Sparse::from_expr(&q.linear, 1.0)));
            }
            Constraint::SecondOrderCone(s) => terms.push(Term::cone(
                s.rows.iter().map(|r| Sparse::from_expr(r, 1.0)).collect(),
                Sparse::from_expr(&s.bound, 1.0),
            )),
        }
    }
    for (i, &(lo, hi)) in program.bounds().iter().enumerate() {
        if lo.is_finite() {
            terms.push(Term::scalar(None, Sparse::from_expr(&AffineExpr::new().term(i, -1.0).plus(lo), 1.0)));
        }
        if hi.is_finite() {
            terms.push(Term::scalar(None, Sparse::from_expr(&AffineExpr::var(i).plus(-hi), 1.0)));
        }
    }
    (terms, eqs)
}

/// Least-norm correction of `x` onto `A x + b = 0`.
fn project_equalities(a: &DMatrix<f64>, b: &DVector<f64>, x: &mut [f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    let r = -(a * &xv + b);
    let svd = a.clone().svd(true, true);
    if let Ok(corr) = svd.solve(&r, 1e-12) {
        for (xi, c) in x.iter_mut().zip(corr.iter()) {
            *xi += c;
        }
    }
    let xv = DVector::from_column_slice(x);
    (a * xv + b).amax()
}

/// Solves `program` (a maximization). Geometric-mean objectives are first
/// rewritten with `options.encoding`. Never panics on bad numerics: failures
/// are reported through `status`.
pub fn solve(program: &ConeProgram, options: &SolveOptions) -> SolveReport {
    let start = Instant::now();
    let n_user = program.num_vars();
    let fail = |status: SolveStatus, x: Vec<f64>, iterations: usize| SolveReport {
        objective_value: f64::NAN,
        max_violation: program.max_violation(&x),
        status,
        x,
        kkt_residual: f64::INFINITY,
        iterations,
        wall_time: start.elapsed(),
    };

    let encoded = match encode_geometric_mean(program, options.encoding) {
        Ok(p) => p,
        Err(_) => return fail(SolveStatus::NumericalFailure, vec![0.0; n_user], 0),
    };
    let n = encoded.num_vars();
    let (terms, eq_exprs) = build_terms(&encoded);
    let goal = match &encoded.objective {
        Objective::Linear(c) => Goal::Linear(Sparse::from_expr(c, 1.0)),
        Objective::LogSum(idx) => Goal::NegLogSum(idx.clone()),
        Objective::GeometricMean(_) => unreachable!("encoded above"),
    };
    let theta: f64 = terms.iter().map(Term::degree).sum::<f64>().max(1.0);

    let eq = (!eq_exprs.is_empty()).then(|| {
        let m = eq_exprs.len();
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        for (r, e) in eq_exprs.iter().enumerate() {
            for &(i, c) in &e.terms {
                a[(r, i)] += c;
            }
            b[r] = e.constant;
        }
        (a, b)
    });

    let mut x = vec![0.0; n];
    if let Some(ws) = &options.warm_start {
        for (xi, wi) in x.iter_mut().zip(ws) {
            *xi = *wi;
        }
    }
    // auxiliaries introduced by the cone encoding start at a positive value
    for xi in x.iter_mut().skip(n_user) {
        *xi = 1.0;
    }
    if let Some((a, b)) = &eq {
        let resid = project_equalities(a, b, &mut x);
        if resid > 1e-9 * (1.0 + b.amax()) {
            return fail(SolveStatus::Infeasible, x[..n_user].to_vec(), 0);
        }
    }

    let mut budget = options.max_iter;
    let strictly_feasible = |x: &[f64]| terms.iter().all(|t| t.barrier(x).is_some());

    if !strictly_feasible(&x) || goal.value(&x).is_none() {
        // Phase I on (x, s)
        let s = n;
        let mut p1_terms: Vec<Term> = terms.iter().map(|t| t.with_slack(s, t.scale().max(1e-300))).collect();
        p1_terms.push(Term::scalar(None, Sparse::from_expr(&AffineExpr::new().term(s, -1.0).plus(-1.0), 1.0)));
        // a wide box keeps phase I bounded when the original problem is not
        let radius = 1e6 * (1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        for (i, &xi) in x.iter().enumerate() {
            p1_terms.push(Term::scalar(None, Sparse::from_expr(&AffineExpr::var(i).plus(-xi - radius), 1.0)));
            p1_terms.push(Term::scalar(None, Sparse::from_expr(&AffineExpr::new().term(i, -1.0).plus(xi - radius), 1.0)));
        }
        // keep log-objective variables positive during phase I
        if let Goal::NegLogSum(idx) = &goal {
            for &i in idx {
                if !(x[i] > 0.0) {
                    x[i] = 1.0;
                }
            }
        }
        let mut x1 = x.clone();
        let worst = p1_terms[..terms.len()]
            .iter()
            .map(|t| t.value(&{
                let mut z = x1.clone();
                z.push(0.0);
                z
            }))
            .fold(f64::NEG_INFINITY, f64::max);
        x1.push(worst.max(-0.5) + 1.0);
        let p1 = Barrier {
            n: n + 1,
            terms: &p1_terms,
            goal: Goal::Slack(s),
            eq: eq.as_ref().map(|(a, b)| (a.clone().insert_column(n, 0.0), b.clone())),
            theta: p1_terms.len() as f64,
        };
        let goal_ok = |z: &[f64]| goal.value(&z[..n]).is_some();
        let early = |z: &[f64]| z[s] < -1e-3 && goal_ok(z);
        // thin feasible sets never reach the margin above; any centered
        // point with a negative slack is still a valid phase II start
        let settled = |z: &[f64]| z[s] < 0.0 && goal_ok(z) && strictly_feasible(&z[..n]);
        let (res, out) = p1.run(x1, 1e-10, options.mu, &mut budget, &early, &settled);
        let z = out.x;
        let feasible = z[s] < 0.0 && strictly_feasible(&z[..n]) && goal_ok(&z);
        if !feasible {
            let status = match res {
                Err(SolveStatus::MaxIterations) => SolveStatus::MaxIterations,
                Err(SolveStatus::NumericalFailure) => SolveStatus::NumericalFailure,
                _ => SolveStatus::Infeasible,
            };
            return fail(status, z[..n_user].to_vec(), options.max_iter - budget);
        }
        x = z[..n].to_vec();
    }

    let barrier = Barrier {
        n,
        terms: &terms,
        goal: goal.clone(),
        eq,
        theta,
    };
    let (res, out) = barrier.run(x, options.tol, options.mu, &mut budget, &|_| false, &|_| false);
    let iterations = options.max_iter - budget;
    let xs = out.x;
    let user_x = xs[..n_user].to_vec();
    let gap = theta / out.t;
    let kkt_residual = gap + out.stationarity;
    let max_violation = program.max_violation(&user_x).max(encoded.max_violation(&xs));
    let objective_value = program.objective.eval(&user_x);
    let status = match res {
        Ok(()) | Err(SolveStatus::MaxIterations) if kkt_residual <= KKT_TOL && max_violation <= FEAS_TOL && objective_value.is_finite() => {
            SolveStatus::Optimal
        }
        Ok(()) => SolveStatus::NumericalFailure,
        Err(s) => s,
    };
    SolveReport {
        status,
        x: user_x,
        objective_value,
        kkt_residual,
        max_violation,
        iterations,
        wall_time: start.elapsed(),
    }
}
