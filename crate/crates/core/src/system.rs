//! SINR, rate and constraint evaluation for a candidate `(f, W, p)`.
//!
//! Every user receives the same RIS-shaped beam `H_k f`; the only thing that
//! separates users is their power share. For user `k` with effective gain
//! `g_k = |w_k^H H_k f|^2`:
//!
//! ```text
//! SINR_k = p_k g_k / ( sum_{i != k} p_i g_k + sigma_k^2 ||w_k||^2 )
//! ```

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::{Error, Result, C64};

pub const AMPLITUDE_TOL: f64 = 1e-9;
pub const NORM_TOL: f64 = 1e-9;
pub const POWER_NEG_TOL: f64 = 1e-12;
pub const BUDGET_REL_TOL: f64 = 1e-9;

/// RIS transmissive coefficients, `|f_m| <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisVector(DVector<C64>);

impl RisVector {
    pub fn new(f: DVector<C64>) -> Result<Self> {
        if let Some((m, z)) = f.iter().enumerate().find(|(_, z)| !(z.norm() <= 1.0 + AMPLITUDE_TOL)) {
            return Err(Error::InvalidInput(format!(
                "RIS element {m} has amplitude {} > 1",
                z.norm()
            )));
        }
        Ok(Self(f))
    }

    /// No amplitude check. Used to evaluate points that may be infeasible.
    pub fn from_raw(f: DVector<C64>) -> Self {
        Self(f)
    }

    /// Unit amplitude with the given phases.
    pub fn from_phases(phases: &[f64]) -> Self {
        Self(DVector::from_iterator(
            phases.len(),
            phases.iter().map(|&t| C64::from_polar(1.0, t)),
        ))
    }

    pub fn as_vector(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Unit-norm receive beamformers, one per user.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet(Vec<DVector<C64>>);

impl BeamformerSet {
    pub fn new(w: Vec<DVector<C64>>) -> Result<Self> {
        for (k, wk) in w.iter().enumerate() {
            if (wk.norm() - 1.0).abs() > NORM_TOL {
                return Err(Error::InvalidInput(format!(
                    "beamformer {k} has norm {}",
                    wk.norm()
                )));
            }
        }
        Ok(Self(w))
    }

    pub fn from_raw(w: Vec<DVector<C64>>) -> Self {
        Self(w)
    }

    /// Normalizes every vector; zero vectors become the first unit vector.
    pub fn normalized(w: Vec<DVector<C64>>) -> Self {
        Self(
            w.into_iter()
                .map(|v| {
                    let n = v.norm();
                    if n > 0.0 {
                        v / C64::from(n)
                    } else {
                        let mut e = DVector::zeros(v.len());
                        e[0] = C64::new(1.0, 0.0);
                        e
                    }
                })
                .collect(),
        )
    }

    pub fn vectors(&self) -> &[DVector<C64>] {
        &self.0
    }

    pub fn get(&self, k: usize) -> &DVector<C64> {
        &self.0[k]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p: Vec<f64>,
    pub budget: f64,
}

impl PowerAllocation {
    pub fn new(p: Vec<f64>, budget: f64) -> Result<Self> {
        let alloc = Self { p, budget };
        if alloc.p.iter().any(|&x| !(x >= -POWER_NEG_TOL)) {
            return Err(Error::InvalidInput("negative power".into()));
        }
        if alloc.total() > budget * (1.0 + BUDGET_REL_TOL) {
            return Err(Error::InvalidInput(format!(
                "total power {} exceeds budget {budget}",
                alloc.total()
            )));
        }
        Ok(alloc)
    }

    pub fn equal(num_users: usize, budget: f64) -> Self {
        Self {
            p: vec![budget / num_users as f64; num_users],
            budget,
        }
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub sinr: Vec<f64>,
    /// bits/s/Hz
    pub rate: Vec<f64>,
    pub sum_rate: f64,
}

fn check_dims(channels: &ChannelSet, f: &RisVector, w: &BeamformerSet, p: &PowerAllocation, sigma2: &[f64]) -> Result<()> {
    let k = channels.num_users();
    if w.len() != k || p.p.len() != k || sigma2.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{k} users but {} beamformers, {} powers, {} noise powers",
            w.len(),
            p.p.len(),
            sigma2.len()
        )));
    }
    for (i, hk) in channels.h.iter().enumerate() {
        if hk.ncols() != f.len() || hk.nrows() != w.get(i).len() {
            return Err(Error::DimensionMismatch(format!(
                "user {i}: channel is {}x{}, f has {} entries, w has {}",
                hk.nrows(),
                hk.ncols(),
                f.len(),
                w.get(i).len()
            )));
        }
    }
    Ok(())
}

/// `|w_k^H H_k f|^2` for user `k`.
pub fn effective_gain(channels: &ChannelSet, k: usize, f: &RisVector, w: &BeamformerSet) -> f64 {
    let hf = &channels.h[k] * f.as_vector();
    w.get(k).dotc(&hf).norm_sqr()
}

fn sinr_from_gain(k: usize, gain: f64, p: &[f64], noise: f64) -> f64 {
    let interference: f64 = p.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &pi)| pi).sum();
    p[k] * gain / (interference * gain + noise)
}

pub fn sinr(
    k: usize,
    channels: &ChannelSet,
    f: &RisVector,
    w: &BeamformerSet,
    p: &PowerAllocation,
    sigma2: &[f64],
) -> Result<f64> {
    check_dims(channels, f, w, p, sigma2)?;
    if k >= channels.num_users() {
        return Err(Error::InvalidInput(format!("user index {k} out of range")));
    }
    let gain = effective_gain(channels, k, f, w);
    Ok(sinr_from_gain(k, gain, &p.p, sigma2[k] * w.get(k).norm_squared()))
}

pub fn rate_report(
    channels: &ChannelSet,
    f: &RisVector,
    w: &BeamformerSet,
    p: &PowerAllocation,
    sigma2: &[f64],
) -> Result<RateReport> {
    check_dims(channels, f, w, p, sigma2)?;
    let sinr: Vec<f64> = (0..channels.num_users())
        .map(|k| {
            let gain = effective_gain(channels, k, f, w);
            sinr_from_gain(k, gain, &p.p, sigma2[k] * w.get(k).norm_squared())
        })
        .collect();
    let rate: Vec<f64> = sinr.iter().map(|s| (1.0 + s).log2()).collect();
    let sum_rate = rate.iter().sum();
    Ok(RateReport { sinr, rate, sum_rate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    Qos,
    RisAmplitude,
    PowerNonNegative,
    PowerBudget,
    BeamformerNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub kind: ConstraintKind,
    /// User or element index; `None` for the budget.
    pub index: Option<usize>,
    /// Positive when satisfied with room to spare.
    pub slack: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub checks: Vec<ConstraintCheck>,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.checks.iter().all(|c| c.satisfied)
    }

    pub fn violations(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| !c.satisfied)
    }

    pub fn of_kind(&self, kind: ConstraintKind) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(move |c| c.kind == kind)
    }
}

/// Evaluates every constraint of the joint problem. Infeasibility is
/// reported, not raised.
pub fn check_feasibility(
    channels: &ChannelSet,
    f: &RisVector,
    w: &BeamformerSet,
    p: &PowerAllocation,
    sigma2: &[f64],
    gamma_th: f64,
) -> Result<FeasibilityReport> {
    let report = rate_report(channels, f, w, p, sigma2)?;
    let mut checks = Vec::new();
    for (k, s) in report.sinr.iter().enumerate() {
        let slack = s - gamma_th;
        checks.push(ConstraintCheck {
            kind: ConstraintKind::Qos,
            index: Some(k),
            slack,
            satisfied: slack >= -1e-9 * gamma_th.max(1.0),
        });
    }
    for (m, z) in f.as_vector().iter().enumerate() {
        let slack = 1.0 - z.norm();
        checks.push(ConstraintCheck {
            kind: ConstraintKind::RisAmplitude,
            index: Some(m),
            slack,
            satisfied: slack >= -AMPLITUDE_TOL,
        });
    }
    for (k, &pk) in p.p.iter().enumerate() {
        checks.push(ConstraintCheck {
            kind: ConstraintKind::PowerNonNegative,
            index: Some(k),
            slack: pk,
            satisfied: pk >= -POWER_NEG_TOL,
        });
    }
    let budget_slack = p.budget - p.total();
    checks.push(ConstraintCheck {
        kind: ConstraintKind::PowerBudget,
        index: None,
        slack: budget_slack,
        satisfied: budget_slack >= -BUDGET_REL_TOL * p.budget,
    });
    for (k, wk) in w.vectors().iter().enumerate() {
        let slack = -(wk.norm() - 1.0).abs();
        checks.push(ConstraintCheck {
            kind: ConstraintKind::BeamformerNorm,
            index: Some(k),
            slack,
            satisfied: slack >= -NORM_TOL,
        });
    }
    Ok(FeasibilityReport { checks })
}
