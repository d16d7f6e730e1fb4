//! Alternating optimization over the RIS vector, the receive beamformers and
//! the power split.
//!
//! Each outer iteration runs successive convex approximation on the RIS
//! block until the lifted iterate stops moving, then on the beamformer
//! block with the same rule in angle space, then solves the power block
//! once. Every surrogate is re-expanded at the actual iterate after each
//! solve, so the exact sum rate never decreases. A block update that would
//! lower it or break QoS (possible only through solver tolerance) is
//! discarded.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::convex::SolveOptions;
use crate::lift::{lift_f, SphericalAngles};
use crate::surrogate::{build_p2, build_p3_scaled, build_p4, p3_surrogates_hold, Context, ExpansionPoint, Mode, Subproblem};
use crate::system::{check_feasibility, rate_report, BeamformerSet, PowerAllocation, RateReport, RisVector};
use crate::{Error, Result};

/// RNG stream used for the initial RIS phases; channel synthesis uses
/// streams `0..=K`.
const INIT_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct AoConfig {
    /// Outer stop: change in sum rate (bits/s/Hz).
    pub eps_outer: f64,
    /// RIS inner stop: change in the lifted vector.
    pub eps_f: f64,
    /// Beamformer inner stop: change in the angles.
    pub eps_w: f64,
    pub max_outer: usize,
    pub max_inner_f: usize,
    pub max_inner_w: usize,
    pub gamma_th: f64,
    /// Seed for the initial RIS phases.
    pub seed: u64,
    /// Rounds of QoS restoration attempted before giving up.
    pub max_restoration: usize,
    pub solver: SolveOptions,
}

impl Default for AoConfig {
    fn default() -> Self {
        Self {
            eps_outer: 1e-3,
            eps_f: 1e-4,
            eps_w: 1e-4,
            max_outer: 30,
            max_inner_f: 15,
            max_inner_w: 15,
            gamma_th: 0.1,
            seed: 0,
            max_restoration: 10,
            solver: SolveOptions::default(),
        }
    }
}

impl AoConfig {
    pub fn validate(&self) -> Result<()> {
        let tols = [self.eps_outer, self.eps_f, self.eps_w];
        if tols.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.max_inner_f == 0 || self.max_inner_w == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        if !(self.gamma_th >= 0.0) {
            return Err(Error::Config(format!("gamma_th = {}", self.gamma_th)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AoStatus {
    Converged,
    MaxIterations,
    Infeasible,
}

impl AoStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            AoStatus::Converged => "converged",
            AoStatus::MaxIterations => "max-iterations",
            AoStatus::Infeasible => "infeasible",
        }
    }
}

/// Baselines obtained by freezing or reshaping one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// `p` stays at `P_t / K`.
    EqualPower,
    /// `f` stays at its random-phase initialization.
    RandomPhase,
    /// Single-antenna users: the first receive row of every channel.
    Miso,
}

/// One record per outer iteration; entry 0 is the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub sum_rate: f64,
    pub rates: Vec<f64>,
    pub sinr: Vec<f64>,
    pub inner_f: usize,
    pub inner_w: usize,
    /// Largest lifted-vector step of the last RIS inner iteration.
    pub step_f: f64,
    /// Largest angle step of the last beamformer inner iteration.
    pub step_w: f64,
    /// Subproblem objectives (geometric mean of `r`) of the last solve of
    /// each block, when it was solved.
    pub objective_f: Option<f64>,
    pub objective_w: Option<f64>,
    pub objective_p: Option<f64>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AoTrace {
    pub entries: Vec<TraceEntry>,
}

impl AoTrace {
    pub fn sum_rates(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.sum_rate).collect()
    }

    /// Outer iterations performed (the starting record excluded).
    pub fn outer_iterations(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    /// True when no outer step lowered the sum rate by more than `slack`.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.entries.windows(2).all(|w| w[1].sum_rate >= w[0].sum_rate - slack)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoResult {
    pub f: RisVector,
    pub w: BeamformerSet,
    pub p: PowerAllocation,
    pub trace: AoTrace,
    pub final_report: RateReport,
    pub status: AoStatus,
}

/// Unit-amplitude seeded random phases, matched-filter beamformers and an
/// equal power split.
pub fn initialize(channels: &ChannelSet, config: &AoConfig, budget: f64) -> Result<(RisVector, BeamformerSet, PowerAllocation)> {
    if !(budget > 0.0) {
        return Err(Error::InvalidInput(format!("power budget {budget}")));
    }
    let f = initial_ris(channels.ris_elements(), config.seed);
    let w = matched_filter(channels, &f);
    let p = PowerAllocation::equal(channels.num_users(), budget);
    Ok((f, w, p))
}

fn initial_ris(elements: usize, seed: u64) -> RisVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let phases: Vec<f64> = (0..elements)
        .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
        .collect();
    RisVector::from_phases(&phases)
}

/// `w_k = H_k f / ||H_k f||`; any unit vector when `H_k f = 0`.
pub fn matched_filter(channels: &ChannelSet, f: &RisVector) -> BeamformerSet {
    BeamformerSet::normalized(channels.h.iter().map(|h| h * f.as_vector()).collect())
}

#[derive(Debug, Clone, Copy)]
struct Blocks {
    f: bool,
    w: bool,
    p: bool,
}

struct State<'a> {
    channels: &'a ChannelSet,
    sigma2: &'a [f64],
    config: &'a AoConfig,
    budget: f64,
    f: RisVector,
    w: BeamformerSet,
    p: PowerAllocation,
    report: RateReport,
    /// Multiplier on the certified majorization constant of the beamformer
    /// block, adapted between `MIN_DELTA_SCALE` and `1`.
    delta_scale: f64,
}

const MIN_DELTA_SCALE: f64 = 1.0 / 64.0;

impl State<'_> {
    fn ctx(&self) -> Context<'_> {
        Context {
            channels: self.channels,
            sigma2: self.sigma2,
            gamma_th: self.config.gamma_th,
        }
    }

    fn expansion(&self) -> ExpansionPoint {
        ExpansionPoint::at(self.channels, &self.f, &self.w, &self.p, self.sigma2)
    }

    fn qos_deficit(report: &RateReport, gamma_th: f64) -> f64 {
        report.sinr.iter().map(|s| gamma_th - s).fold(f64::NEG_INFINITY, f64::max)
    }

    fn qos_ok(&self, report: &RateReport) -> bool {
        Self::qos_deficit(report, self.config.gamma_th) <= 0.0
    }

    fn evaluate(&self, f: &RisVector, w: &BeamformerSet, p: &PowerAllocation) -> Result<RateReport> {
        rate_report(self.channels, f, w, p, self.sigma2)
    }

    /// Accepts a candidate only if it keeps QoS and does not lower the
    /// sum rate (restoration: only if it lowers the QoS deficit).
    fn try_accept(&mut self, f: RisVector, w: BeamformerSet, p: PowerAllocation, mode: Mode) -> Result<bool> {
        let report = self.evaluate(&f, &w, &p)?;
        if !report.sum_rate.is_finite() {
            return Ok(false);
        }
        let better = match mode {
            Mode::SumRate => self.qos_ok(&report) && report.sum_rate >= self.report.sum_rate,
            Mode::Restoration => {
                let g = self.config.gamma_th;
                Self::qos_deficit(&report, g) < Self::qos_deficit(&self.report, g)
            }
        };
        if better {
            self.f = f;
            self.w = w;
            self.p = p;
            self.report = report;
        }
        Ok(better)
    }

    fn solve(&self, sub: &Subproblem) -> Option<Vec<f64>> {
        let rep = sub.solve(&self.config.solver);
        rep.is_optimal().then_some(rep.x)
    }

    /// SCA on the RIS block. Returns (iterations, last step, last objective).
    fn ris_block(&mut self, mode: Mode, max_inner: usize) -> Result<(usize, f64, Option<f64>)> {
        let mut iters = 0;
        let mut step = 0.0;
        let mut objective = None;
        for _ in 0..max_inner {
            let exp = self.expansion();
            let sub = build_p2(&self.ctx(), &self.w, &self.p, &exp, mode)?;
            iters += 1;
            let Some(x) = self.solve(&sub) else { break };
            let f = sub.ris_vector(&x)?;
            step = (lift_f(&f).as_vector() - &exp.alpha_prev).norm();
            objective = Some(sub.aux(&x).objective());
            if !self.try_accept(f, self.w.clone(), self.p.clone(), mode)? {
                break;
            }
            if step <= self.config.eps_f || (mode == Mode::Restoration && self.qos_ok(&self.report)) {
                break;
            }
        }
        Ok((iters, step, objective))
    }

    /// SCA on the beamformer block with the step measured in angles.
    fn beam_block(&mut self, mode: Mode, max_inner: usize) -> Result<(usize, f64, Option<f64>)> {
        let mut iters = 0;
        let mut step = 0.0;
        let mut objective = None;
        while iters < max_inner {
            let exp = self.expansion();
            let prev = SphericalAngles {
                theta: exp.theta_prev.clone(),
            };
            iters += 1;
            // A scaled-down constant takes longer steps; back off towards the
            // certified constant whenever the step is not certified or not
            // accepted.
            let accepted = loop {
                let scale = self.delta_scale;
                let sub = build_p3_scaled(&self.ctx(), &self.f, &self.p, &exp, mode, scale)?;
                let candidate = match self.solve(&sub) {
                    Some(x) => {
                        let theta = sub.angles(&x);
                        let certified = scale >= 1.0 || p3_surrogates_hold(&self.ctx(), &self.f, &exp, &theta, scale)?;
                        if certified {
                            step = theta.distance(&prev);
                            objective = Some(sub.aux(&x).objective());
                            let w = theta.to_beamformers();
                            Some(self.try_accept(self.f.clone(), w, self.p.clone(), mode)?)
                        } else {
                            None
                        }
                    }
                    None => None,
                };
                match candidate {
                    Some(true) => {
                        self.delta_scale = (scale * 0.5).max(MIN_DELTA_SCALE);
                        break true;
                    }
                    _ if scale < 1.0 => self.delta_scale = (scale * 4.0).min(1.0),
                    _ => break false,
                }
            };
            if !accepted {
                break;
            }
            if step <= self.config.eps_w || (mode == Mode::Restoration && self.qos_ok(&self.report)) {
                break;
            }
        }
        Ok((iters, step, objective))
    }

    fn power_block(&mut self, mode: Mode) -> Result<Option<f64>> {
        let exp = self.expansion();
        let sub = build_p4(&self.ctx(), &self.f, &self.w, self.budget, &self.p, &exp, mode)?;
        let Some(x) = self.solve(&sub) else {
            return Ok(None);
        };
        let p = sub.powers(&x, self.budget)?;
        let objective = sub.aux(&x).objective();
        self.try_accept(self.f.clone(), self.w.clone(), p, mode)?;
        Ok(Some(objective))
    }

    fn entry(&self, iteration: usize, start: Instant) -> TraceEntry {
        TraceEntry {
            iteration,
            sum_rate: self.report.sum_rate,
            rates: self.report.rate.clone(),
            sinr: self.report.sinr.clone(),
            inner_f: 0,
            inner_w: 0,
            step_f: 0.0,
            step_w: 0.0,
            objective_f: None,
            objective_w: None,
            objective_p: None,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    }

    fn restore(&mut self, blocks: Blocks) -> Result<bool> {
        for _ in 0..self.config.max_restoration {
            if self.qos_ok(&self.report) {
                return Ok(true);
            }
            let before = Self::qos_deficit(&self.report, self.config.gamma_th);
            if blocks.p {
                self.power_block(Mode::Restoration)?;
            }
            if blocks.f && !self.qos_ok(&self.report) {
                self.ris_block(Mode::Restoration, self.config.max_inner_f)?;
            }
            if blocks.w && !self.qos_ok(&self.report) {
                self.beam_block(Mode::Restoration, self.config.max_inner_w)?;
            }
            let after = Self::qos_deficit(&self.report, self.config.gamma_th);
            if after >= before - 1e-12 {
                break;
            }
        }
        Ok(self.qos_ok(&self.report))
    }
}

fn run_blocks(
    channels: &ChannelSet,
    config: &AoConfig,
    budget: f64,
    sigma2: &[f64],
    blocks: Blocks,
) -> Result<AoResult> {
    config.validate()?;
    if sigma2.len() != channels.num_users() {
        return Err(Error::DimensionMismatch(format!(
            "{} noise powers for {} users",
            sigma2.len(),
            channels.num_users()
        )));
    }
    let start = Instant::now();
    let (f, w, p) = initialize(channels, config, budget)?;
    let report = rate_report(channels, &f, &w, &p, sigma2)?;
    let mut state = State {
        channels,
        sigma2,
        config,
        budget,
        f,
        w,
        p,
        report,
        delta_scale: MIN_DELTA_SCALE,
    };
    let mut trace = AoTrace::default();

    if !state.restore(blocks)? {
        trace.entries.push(state.entry(0, start));
        return finish(state, trace, AoStatus::Infeasible);
    }
    trace.entries.push(state.entry(0, start));

    let mut status = AoStatus::MaxIterations;
    for n in 1..=config.max_outer {
        let prev = state.report.sum_rate;
        let (mut inner_f, mut step_f, mut objective_f) = (0, 0.0, None);
        if blocks.f {
            (inner_f, step_f, objective_f) = state.ris_block(Mode::SumRate, config.max_inner_f)?;
        }
        let (mut inner_w, mut step_w, mut objective_w) = (0, 0.0, None);
        if blocks.w {
            (inner_w, step_w, objective_w) = state.beam_block(Mode::SumRate, config.max_inner_w)?;
        }
        let objective_p = if blocks.p { state.power_block(Mode::SumRate)? } else { None };
        let mut entry = state.entry(n, start);
        entry.inner_f = inner_f;
        entry.inner_w = inner_w;
        entry.step_f = step_f;
        entry.step_w = step_w;
        entry.objective_f = objective_f;
        entry.objective_w = objective_w;
        entry.objective_p = objective_p;
        trace.entries.push(entry);
        if (state.report.sum_rate - prev).abs() <= config.eps_outer {
            status = AoStatus::Converged;
            break;
        }
    }
    finish(state, trace, status)
}

fn finish(state: State, trace: AoTrace, status: AoStatus) -> Result<AoResult> {
    Ok(AoResult {
        f: state.f,
        w: state.w,
        p: state.p,
        trace,
        final_report: state.report,
        status,
    })
}

/// The full algorithm: all three blocks.
pub fn run(channels: &ChannelSet, config: &AoConfig, budget: f64, sigma2: &[f64]) -> Result<AoResult> {
    run_blocks(
        channels,
        config,
        budget,
        sigma2,
        Blocks {
            f: true,
            w: true,
            p: true,
        },
    )
}

pub fn run_baseline(
    kind: Baseline,
    channels: &ChannelSet,
    config: &AoConfig,
    budget: f64,
    sigma2: &[f64],
) -> Result<AoResult> {
    let all = Blocks {
        f: true,
        w: true,
        p: true,
    };
    match kind {
        Baseline::EqualPower => run_blocks(channels, config, budget, sigma2, Blocks { p: false, ..all }),
        Baseline::RandomPhase => run_blocks(channels, config, budget, sigma2, Blocks { f: false, ..all }),
        Baseline::Miso => run_blocks(&channels.first_antenna(), config, budget, sigma2, all),
    }
}

/// True when the final iterate passes every constraint of the joint problem.
pub fn final_feasible(result: &AoResult, channels: &ChannelSet, sigma2: &[f64], gamma_th: f64) -> Result<bool> {
    Ok(check_feasibility(channels, &result.f, &result.w, &result.p, sigma2, gamma_th)?.feasible())
}
