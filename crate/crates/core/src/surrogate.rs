//! Convex surrogates of the rate constraints and the three block
//! subproblems built from them.
//!
//! With `a_k = |w_k^H H_k f|^2 / sigma_k^2` and `I_k = sum_{i != k} p_i`, the
//! rate constraint `r_k - 1 <= SINR_k` is implied by the pair
//!
//! ```text
//! r_k lambda_k - lambda_k <= p_k a_k,     lambda_k >= I_k a_k + 1.
//! ```
//!
//! The left product is a difference of convex functions and is bounded
//! above by [`h_upper_bound`]. In the RIS block `a_k` is a convex quadratic
//! in the real lift `alpha` and is bounded below by its tangent
//! ([`g_lower_bound`]). In the beamformer block `a_k` is a quadratic form in
//! the spherical cascade and is sandwiched by [`m1_surrogate`] and
//! [`m2_surrogate`]. Every subproblem therefore has a convex feasible set
//! whose points are feasible for the exact constraints.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelSet;
use crate::convex::{
    solve, AffineExpr, ConeProgram, Constraint, Objective, QuadraticConstraint, SocConstraint, SolveOptions,
    SolveReport,
};
use crate::lift::{
    build_b, build_d, effective_delta, grad_f_quadratic, lift_f, quadratic_value, unlift_alpha, AlphaLift,
    SphericalAngles,
};
use crate::system::{effective_gain, BeamformerSet, PowerAllocation, RisVector};
use crate::{Error, Result};

/// `x -> constant + gradient . x`
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBound {
    pub constant: f64,
    pub gradient: DVector<f64>,
}

impl AffineBound {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.constant + self.gradient.dot(x)
    }
}

/// Tangent of `alpha^T B alpha` at `alpha_prev`, a global minorant for PSD `B`.
pub fn g_lower_bound(alpha_prev: &DVector<f64>, b: &DMatrix<f64>) -> AffineBound {
    let b_alpha = b * alpha_prev;
    AffineBound {
        constant: -alpha_prev.dot(&b_alpha),
        gradient: 2.0 * b_alpha,
    }
}

/// Convex majorant of `r lambda - lambda`, tight at `(r_prev, lambda_prev)`.
pub fn h_upper_bound(r: f64, lambda: f64, r_prev: f64, lambda_prev: f64) -> f64 {
    let e = r_prev - lambda_prev;
    0.25 * (r + lambda).powi(2) - 0.25 * (e * e + 2.0 * e * (r - lambda - e)) - lambda
}

fn dist2(theta: &[f64], theta_prev: &[f64]) -> f64 {
    theta.iter().zip(theta_prev).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn linear_part(theta: &[f64], theta_prev: &[f64], d: &DMatrix<f64>) -> f64 {
    let grad = grad_f_quadratic(theta_prev, d);
    let step: Vec<f64> = theta.iter().zip(theta_prev).map(|(a, b)| a - b).collect();
    quadratic_value(theta_prev, d) + grad.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>()
}

/// Quadratic majorant of `f(theta) = beta(theta)^T D beta(theta)`.
pub fn m1_surrogate(theta: &[f64], theta_prev: &[f64], d: &DMatrix<f64>, delta: f64) -> f64 {
    linear_part(theta, theta_prev, d) + 0.5 * delta * dist2(theta, theta_prev)
}

/// Quadratic majorant of `-f(theta)`.
pub fn m2_surrogate(theta: &[f64], theta_prev: &[f64], d: &DMatrix<f64>, delta: f64) -> f64 {
    -linear_part(theta, theta_prev, d) + 0.5 * delta * dist2(theta, theta_prev)
}

/// Auxiliary rate and interference variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryVars {
    pub r: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl AuxiliaryVars {
    /// Geometric mean of `r`, the subproblem objective.
    pub fn objective(&self) -> f64 {
        geometric_mean(&self.r)
    }
}

pub fn geometric_mean(r: &[f64]) -> f64 {
    (r.iter().map(|v| v.ln()).sum::<f64>() / r.len() as f64).exp()
}

/// The point at which all surrogates are made tight.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionPoint {
    pub alpha_prev: DVector<f64>,
    pub theta_prev: Vec<Vec<f64>>,
    pub r_prev: Vec<f64>,
    pub lambda_prev: Vec<f64>,
}

impl ExpansionPoint {
    /// Expansion at an actual iterate: `r = 1 + SINR`, `lambda` = interference
    /// plus noise over noise. Both rate constraints then hold with equality.
    pub fn at(channels: &ChannelSet, f: &RisVector, w: &BeamformerSet, p: &PowerAllocation, sigma2: &[f64]) -> Self {
        let k = channels.num_users();
        let total = p.total();
        let mut r_prev = Vec::with_capacity(k);
        let mut lambda_prev = Vec::with_capacity(k);
        for u in 0..k {
            let a = effective_gain(channels, u, f, w) / sigma2[u];
            let lambda = (total - p.p[u]) * a + 1.0;
            r_prev.push(1.0 + p.p[u] * a / lambda);
            lambda_prev.push(lambda);
        }
        Self {
            alpha_prev: lift_f(f).as_vector().clone(),
            theta_prev: SphericalAngles::from_beamformers(w).theta,
            r_prev,
            lambda_prev,
        }
    }

    pub fn aux(&self) -> AuxiliaryVars {
        AuxiliaryVars {
            r: self.r_prev.clone(),
            lambda: self.lambda_prev.clone(),
        }
    }
}

/// Fixed data shared by all subproblems.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub channels: &'a ChannelSet,
    pub sigma2: &'a [f64],
    pub gamma_th: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Maximize the geometric mean of `r` subject to QoS.
    SumRate,
    /// Maximize `-s` with `r_k + s >= 1 + gamma_th`; a solution with
    /// `s <= 0` restores QoS.
    Restoration,
}

/// Variable offsets inside a subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub block: usize,
    pub block_len: usize,
    pub r: usize,
    pub lambda: usize,
    pub slack: Option<usize>,
    pub users: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subproblem {
    pub program: ConeProgram,
    pub layout: Layout,
    /// Warm start: the expansion point, nudged strictly inside the
    /// feasible set when possible.
    pub start: Vec<f64>,
}

impl Subproblem {
    /// Solves with `options`, warm-starting from the expansion point.
    pub fn solve(&self, options: &SolveOptions) -> SolveReport {
        let opts = SolveOptions {
            warm_start: Some(self.start.clone()),
            ..options.clone()
        };
        solve(&self.program, &opts)
    }

    pub fn block<'x>(&self, x: &'x [f64]) -> &'x [f64] {
        &x[self.layout.block..self.layout.block + self.layout.block_len]
    }

    pub fn aux(&self, x: &[f64]) -> AuxiliaryVars {
        let k = self.layout.users;
        AuxiliaryVars {
            r: x[self.layout.r..self.layout.r + k].to_vec(),
            lambda: x[self.layout.lambda..self.layout.lambda + k].to_vec(),
        }
    }

    pub fn slack(&self, x: &[f64]) -> Option<f64> {
        self.layout.slack.map(|s| x[s])
    }

    /// RIS vector from an RIS-block solution; amplitudes are clipped to 1.
    pub fn ris_vector(&self, x: &[f64]) -> Result<RisVector> {
        let mut alpha = DVector::from_column_slice(self.block(x));
        let m = alpha.len() / 2;
        for i in 0..m {
            let n = alpha[i].hypot(alpha[m + i]);
            if n > 1.0 {
                alpha[i] /= n;
                alpha[m + i] /= n;
            }
        }
        unlift_alpha(&AlphaLift::from_raw(alpha))
    }

    /// Angles from a beamformer-block solution, clipped to their box.
    pub fn angles(&self, x: &[f64]) -> SphericalAngles {
        let k = self.layout.users;
        let l = self.layout.block_len / k;
        let theta = self
            .block(x)
            .chunks(l)
            .map(|t| {
                t.iter()
                    .enumerate()
                    .map(|(i, &a)| {
                        let lim = if i + 1 < l { FRAC_PI_2 } else { PI };
                        a.clamp(-lim, lim)
                    })
                    .collect()
            })
            .collect();
        SphericalAngles { theta }
    }

    /// Beamformers from a beamformer-block solution.
    pub fn beamformers(&self, x: &[f64]) -> BeamformerSet {
        self.angles(x).to_beamformers()
    }

    /// Power allocation from a power-block solution of normalized powers.
    pub fn powers(&self, x: &[f64], budget: f64) -> Result<PowerAllocation> {
        let mut q: Vec<f64> = self.block(x).iter().map(|v| v.max(0.0)).collect();
        let total: f64 = q.iter().sum();
        if total > 1.0 {
            q.iter_mut().for_each(|v| *v /= total);
        }
        PowerAllocation::new(q.iter().map(|v| v * budget).collect(), budget)
    }
}

/// Allocates `r`, `lambda` (and the restoration slack) after the block
/// variables and sets the objective.
fn skeleton(block_len: usize, users: usize, mode: Mode, gamma_th: f64) -> Result<(ConeProgram, Layout)> {
    let r = block_len;
    let lambda = r + users;
    let mut n = lambda + users;
    let slack = (mode == Mode::Restoration).then(|| {
        n += 1;
        n - 1
    });
    let objective = match slack {
        None => Objective::GeometricMean((r..r + users).collect()),
        Some(s) => Objective::Linear(AffineExpr::new().term(s, -1.0)),
    };
    let mut program = ConeProgram::new(n, objective);
    for k in 0..users {
        match slack {
            None => program.set_lower(r + k, 1.0 + gamma_th)?,
            Some(s) => {
                program.set_lower(r + k, 1.0)?;
                program.add(Constraint::Inequality(
                    AffineExpr::new().term(r + k, -1.0).term(s, -1.0).plus(1.0 + gamma_th),
                ))?;
            }
        }
    }
    if let Some(s) = slack {
        program.set_lower(s, -1.0)?;
    }
    Ok((
        program,
        Layout {
            block: 0,
            block_len,
            r,
            lambda,
            slack,
            users,
        },
    ))
}

/// `h(r, lambda) + extra_q(extra) + extra_lin <= 0` as a quadratic
/// constraint over `[r, lambda, extra...]`.
fn rate_constraint(
    r: usize,
    lambda: usize,
    r_prev: f64,
    lambda_prev: f64,
    extra: &[usize],
    extra_q: f64,
    lin: AffineExpr,
) -> Constraint {
    let e = r_prev - lambda_prev;
    let n = 2 + extra.len();
    let mut q = DMatrix::zeros(n, n);
    q[(0, 0)] = 0.25;
    q[(0, 1)] = 0.25;
    q[(1, 0)] = 0.25;
    q[(1, 1)] = 0.25;
    for i in 0..extra.len() {
        q[(2 + i, 2 + i)] = extra_q;
    }
    let mut vars = vec![r, lambda];
    vars.extend_from_slice(extra);
    let linear = lin.term(r, -0.5 * e).term(lambda, 0.5 * e - 1.0).plus(0.25 * e * e);
    Constraint::Quadratic(QuadraticConstraint { vars, q, linear })
}

fn start_vector(layout: &Layout, n: usize, block: &[f64], exp: &ExpansionPoint, gamma_th: f64) -> Vec<f64> {
    let mut x = vec![0.0; n];
    x[..block.len()].copy_from_slice(block);
    for k in 0..layout.users {
        x[layout.r + k] = exp.r_prev[k];
        x[layout.lambda + k] = exp.lambda_prev[k];
    }
    if let Some(s) = layout.slack {
        let deficit = exp.r_prev.iter().map(|r| 1.0 + gamma_th - r).fold(f64::NEG_INFINITY, f64::max);
        x[s] = deficit.max(-1.0);
    }
    x
}

/// Moves the expansion point strictly inside the feasible set so the solver
/// can skip its phase-I search: the block is pulled inward by `shrink`,
/// `lambda` is raised and `r` lowered toward its floor. Falls back to the
/// raw point when no tried pair of step sizes works.
fn interior_start(
    program: &ConeProgram,
    layout: &Layout,
    start: Vec<f64>,
    gamma_th: f64,
    shrink: impl Fn(&[f64], f64) -> Vec<f64>,
) -> Vec<f64> {
    let r_min = if layout.slack.is_some() { 1.0 } else { 1.0 + gamma_th };
    let block = &start[layout.block..layout.block + layout.block_len];
    for eta in [1e-10, 1e-8, 1e-6, 1e-4, 1e-2] {
        let shrunk = shrink(block, eta);
        for kappa in [1e-3, 1e-2, 1e-1, 0.5] {
            let mut x = start.clone();
            x[layout.block..layout.block + layout.block_len].copy_from_slice(&shrunk);
            for k in 0..layout.users {
                let r = &mut x[layout.r + k];
                *r = r_min + (*r - r_min) * (1.0 - kappa);
                let l = &mut x[layout.lambda + k];
                *l += eta * (1.0 + *l);
            }
            if let Some(s) = layout.slack {
                let deficit = (0..layout.users)
                    .map(|k| 1.0 + gamma_th - x[layout.r + k])
                    .fold(f64::NEG_INFINITY, f64::max);
                x[s] = deficit.max(-1.0) + kappa * 1e-3;
            }
            if program.is_strictly_feasible(&x) {
                return x;
            }
        }
    }
    start
}

fn check_users(ctx: &Context, users: usize) -> Result<()> {
    if ctx.sigma2.len() != users || ctx.channels.num_users() != users {
        return Err(Error::DimensionMismatch(format!(
            "{} channels, {} noise powers, {users} users",
            ctx.channels.num_users(),
            ctx.sigma2.len()
        )));
    }
    Ok(())
}

/// RIS block over `(alpha, r, lambda)` with `W` and `p` fixed.
pub fn build_p2(ctx: &Context, w: &BeamformerSet, p: &PowerAllocation, exp: &ExpansionPoint, mode: Mode) -> Result<Subproblem> {
    let users = p.p.len();
    check_users(ctx, users)?;
    let m2 = 2 * ctx.channels.ris_elements();
    if exp.alpha_prev.len() != m2 {
        return Err(Error::DimensionMismatch("expansion alpha length".into()));
    }
    let (mut program, layout) = skeleton(m2, users, mode, ctx.gamma_th)?;
    let total = p.total();
    for k in 0..users {
        let b = build_b(k, ctx.channels, w, ctx.sigma2[k])?;
        let g = g_lower_bound(&exp.alpha_prev, &b);
        // h(r, lambda) - p_k g(alpha) <= 0
        let mut lin = AffineExpr::constant(-p.p[k] * g.constant);
        for (i, c) in g.gradient.iter().enumerate() {
            if *c != 0.0 {
                lin = lin.term(i, -p.p[k] * c);
            }
        }
        program.add(rate_constraint(
            layout.r + k,
            layout.lambda + k,
            exp.r_prev[k],
            exp.lambda_prev[k],
            &[],
            0.0,
            lin,
        ))?;
        // I_k alpha^T B alpha + 1 - lambda <= 0
        let interference = total - p.p[k];
        let cap = AffineExpr::constant(1.0).term(layout.lambda + k, -1.0);
        if interference > 0.0 {
            program.add(Constraint::Quadratic(QuadraticConstraint {
                vars: (0..m2).collect(),
                q: b * interference,
                linear: cap,
            }))?;
        } else {
            program.add(Constraint::Inequality(cap))?;
        }
    }
    let m = m2 / 2;
    for i in 0..m {
        program.add(Constraint::SecondOrderCone(SocConstraint {
            rows: vec![AffineExpr::var(i), AffineExpr::var(m + i)],
            bound: AffineExpr::constant(1.0),
        }))?;
    }
    let start = start_vector(&layout, program.num_vars(), exp.alpha_prev.as_slice(), exp, ctx.gamma_th);
    let start = interior_start(&program, &layout, start, ctx.gamma_th, |a, eta| {
        a.iter().map(|v| v * (1.0 - eta)).collect()
    });
    Ok(Subproblem { program, layout, start })
}

/// Beamformer block over `(theta, r, lambda)` with `f` and `p` fixed.
pub fn build_p3(ctx: &Context, f: &RisVector, p: &PowerAllocation, exp: &ExpansionPoint, mode: Mode) -> Result<Subproblem> {
    build_p3_scaled(ctx, f, p, exp, mode, 1.0)
}

/// [`build_p3`] with every user's majorization constant multiplied by
/// `delta_scale`. Below `1` the quadratic terms are no longer guaranteed to
/// bound the true gains; check with [`p3_surrogates_hold`].
pub fn build_p3_scaled(
    ctx: &Context,
    f: &RisVector,
    p: &PowerAllocation,
    exp: &ExpansionPoint,
    mode: Mode,
    delta_scale: f64,
) -> Result<Subproblem> {
    if !(delta_scale > 0.0 && delta_scale.is_finite()) {
        return Err(Error::InvalidInput(format!("delta scale {delta_scale}")));
    }
    let users = p.p.len();
    check_users(ctx, users)?;
    let n = ctx.channels.user_antennas();
    let l = 2 * n - 1;
    if exp.theta_prev.len() != users || exp.theta_prev.iter().any(|t| t.len() != l) {
        return Err(Error::DimensionMismatch("expansion angle shape".into()));
    }
    let (mut program, layout) = skeleton(users * l, users, mode, ctx.gamma_th)?;
    let total = p.total();
    for k in 0..users {
        let d = build_d(k, ctx.channels, f, ctx.sigma2[k])?;
        let delta = delta_scale * effective_delta(&d, n).value();
        let tp = &exp.theta_prev[k];
        let f_prev = quadratic_value(tp, &d);
        let grad = grad_f_quadratic(tp, &d);
        let vars: Vec<usize> = (k * l..(k + 1) * l).collect();
        let tp_norm2: f64 = tp.iter().map(|v| v * v).sum();
        let grad_tp: f64 = grad.iter().zip(tp).map(|(g, t)| g * t).sum();

        // h(r, lambda) + p_k m2(theta) <= 0
        let pk = p.p[k];
        let mut lin = AffineExpr::constant(pk * (-f_prev + grad_tp + 0.5 * delta * tp_norm2));
        for (j, &v) in vars.iter().enumerate() {
            lin = lin.term(v, pk * (-grad[j] - delta * tp[j]));
        }
        program.add(rate_constraint(
            layout.r + k,
            layout.lambda + k,
            exp.r_prev[k],
            exp.lambda_prev[k],
            &vars,
            0.5 * pk * delta,
            lin,
        ))?;

        // I_k m1(theta) + 1 - lambda <= 0
        let ik = total - pk;
        let mut lin = AffineExpr::constant(ik * (f_prev - grad_tp + 0.5 * delta * tp_norm2) + 1.0)
            .term(layout.lambda + k, -1.0);
        if ik > 0.0 {
            for (j, &v) in vars.iter().enumerate() {
                lin = lin.term(v, ik * (grad[j] - delta * tp[j]));
            }
            program.add(Constraint::Quadratic(QuadraticConstraint {
                vars: vars.clone(),
                q: DMatrix::identity(l, l) * (0.5 * ik * delta),
                linear: lin,
            }))?;
        } else {
            program.add(Constraint::Inequality(lin))?;
        }

        for (j, &v) in vars.iter().enumerate() {
            let lim = if j + 1 < l { FRAC_PI_2 } else { PI };
            program.set_bounds(v, -lim, lim)?;
        }
    }
    let block: Vec<f64> = exp.theta_prev.iter().flatten().copied().collect();
    let start = start_vector(&layout, program.num_vars(), &block, exp, ctx.gamma_th);
    let start = interior_start(&program, &layout, start, ctx.gamma_th, |t, eta| {
        t.iter()
            .enumerate()
            .map(|(i, &a)| {
                let lim = if (i + 1) % l != 0 { FRAC_PI_2 } else { PI };
                a.clamp(-lim * (1.0 - eta), lim * (1.0 - eta))
            })
            .collect()
    });
    Ok(Subproblem { program, layout, start })
}

/// True when, for every user, the scaled `m1`/`m2` pair still brackets the
/// gain `beta(theta)^T D beta(theta)` at `theta`.
pub fn p3_surrogates_hold(ctx: &Context, f: &RisVector, exp: &ExpansionPoint, theta: &SphericalAngles, delta_scale: f64) -> Result<bool> {
    let n = ctx.channels.user_antennas();
    for (k, (tp, t)) in exp.theta_prev.iter().zip(&theta.theta).enumerate() {
        let d = build_d(k, ctx.channels, f, ctx.sigma2[k])?;
        let delta = delta_scale * effective_delta(&d, n).value();
        let f_prev = quadratic_value(tp, &d);
        let grad = grad_f_quadratic(tp, &d);
        let lin: f64 = grad.iter().zip(t.iter().zip(tp)).map(|(g, (a, b))| g * (a - b)).sum();
        let dist2: f64 = t.iter().zip(tp).map(|(a, b)| (a - b).powi(2)).sum();
        let err = (quadratic_value(t, &d) - f_prev - lin).abs();
        if err > 0.5 * delta * dist2 + 1e-12 * f_prev.abs().max(1.0) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Power block over `(q, r, lambda)` with `q = p / budget`, `f` and `W` fixed.
pub fn build_p4(
    ctx: &Context,
    f: &RisVector,
    w: &BeamformerSet,
    budget: f64,
    p_prev: &PowerAllocation,
    exp: &ExpansionPoint,
    mode: Mode,
) -> Result<Subproblem> {
    let users = w.len();
    check_users(ctx, users)?;
    if !(budget > 0.0) {
        return Err(Error::InvalidInput(format!("power budget {budget}")));
    }
    let (mut program, layout) = skeleton(users, users, mode, ctx.gamma_th)?;
    let gains: Vec<f64> = (0..users)
        .map(|k| effective_gain(ctx.channels, k, f, w) / ctx.sigma2[k] * budget)
        .collect();
    for k in 0..users {
        // h(r, lambda) - a_k P q_k <= 0
        program.add(rate_constraint(
            layout.r + k,
            layout.lambda + k,
            exp.r_prev[k],
            exp.lambda_prev[k],
            &[],
            0.0,
            AffineExpr::new().term(k, -gains[k]),
        ))?;
        // a_k P sum_{i != k} q_i + 1 - lambda <= 0
        let mut cap = AffineExpr::constant(1.0).term(layout.lambda + k, -1.0);
        for i in (0..users).filter(|&i| i != k) {
            cap = cap.term(i, gains[k]);
        }
        program.add(Constraint::Inequality(cap))?;
        program.set_lower(k, 0.0)?;
    }
    let mut sum = AffineExpr::constant(-1.0);
    for i in 0..users {
        sum = sum.term(i, 1.0);
    }
    program.add(Constraint::Inequality(sum))?;
    let q: Vec<f64> = p_prev.p.iter().map(|v| v / budget).collect();
    let start = start_vector(&layout, program.num_vars(), &q, exp, ctx.gamma_th);
    let start = interior_start(&program, &layout, start, ctx.gamma_th, |q, eta| {
        q.iter().map(|v| v * (1.0 - eta) + eta * eta / users as f64).collect()
    });
    Ok(Subproblem { program, layout, start })
}
