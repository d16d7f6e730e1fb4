#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trisopt::ao::matched_filter;
use trisopt::channel::{synthesize_channels, ArrayGeometry, ChannelParams, ChannelSet, UserGeometry};
use trisopt::convex::SolveOptions;
use trisopt::lift::SphericalAngles;
use trisopt::surrogate::{build_p2, build_p3, build_p4, Context, ExpansionPoint, Mode};
use trisopt::system::{rate_report, BeamformerSet, PowerAllocation, RisVector};
use trisopt::{Complex, C64};

pub const NOISE: f64 = 1e-8;
pub const GAMMA: f64 = 0.1;

pub fn budget() -> f64 {
    10f64.powf(-0.8) * 1e-3
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reference scenario channels with the given sizes.
pub fn channels(m: usize, n: usize, k: usize, seed: u64) -> ChannelSet {
    let geometry = ArrayGeometry::half_wavelength(m, n);
    let params = ChannelParams {
        ref_gain: 1e-3,
        pathloss_exponent: 2.2,
        rician_kappa: 3.0,
        noise_power: vec![NOISE; k],
    };
    let users = UserGeometry::sample(k, (20.0, 60.0), PI / 3.0, seed);
    synthesize_channels(&geometry, &params, &users, seed).unwrap()
}

pub fn random_psd(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(rank, dim, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    a.transpose() * a
}

pub fn random_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| scale * (rng.random::<f64>() * 2.0 - 1.0))
}

/// Angles inside the open box of the spherical parameterization.
pub fn random_theta(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let lim = if i + 1 < len { PI / 2.0 } else { PI };
            lim * (rng.random::<f64>() * 2.0 - 1.0) * 0.999
        })
        .collect()
}

pub fn random_ris(rng: &mut ChaCha8Rng, m: usize) -> RisVector {
    let f = DVector::from_fn(m, |_, _| C64::from_polar(rng.random::<f64>().sqrt(), 2.0 * PI * rng.random::<f64>()));
    RisVector::new(f).unwrap()
}

pub fn random_beamformers(rng: &mut ChaCha8Rng, n: usize, k: usize) -> BeamformerSet {
    let w = (0..k)
        .map(|_| DVector::from_fn(n, |_, _| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)))
        .collect();
    BeamformerSet::normalized(w)
}

pub fn unit_phases(rng: &mut ChaCha8Rng, m: usize) -> RisVector {
    let phases: Vec<f64> = (0..m).map(|_| 2.0 * PI * rng.random::<f64>()).collect();
    RisVector::from_phases(&phases)
}

pub fn sum_rate(ch: &ChannelSet, f: &RisVector, w: &BeamformerSet, p: &PowerAllocation) -> f64 {
    rate_report(ch, f, w, p, &vec![NOISE; ch.num_users()]).unwrap().sum_rate
}

pub fn min_sinr(ch: &ChannelSet, f: &RisVector, w: &BeamformerSet, p: &PowerAllocation) -> f64 {
    rate_report(ch, f, w, p, &vec![NOISE; ch.num_users()])
        .unwrap()
        .sinr
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Repeated power-block solves re-expanded at each solution, from `p0`.
pub fn sca_power(ch: &ChannelSet, f: &RisVector, w: &BeamformerSet, p0: PowerAllocation) -> PowerAllocation {
    let sigma2 = vec![NOISE; ch.num_users()];
    let ctx = Context {
        channels: ch,
        sigma2: &sigma2,
        gamma_th: GAMMA,
    };
    let mut p = p0;
    for _ in 0..300 {
        let exp = ExpansionPoint::at(ch, f, w, &p, &sigma2);
        let sub = build_p4(&ctx, f, w, p.budget, &p, &exp, Mode::SumRate).unwrap();
        let rep = sub.solve(&SolveOptions::default());
        if !rep.is_optimal() {
            break;
        }
        let next = sub.powers(&rep.x, p.budget).unwrap();
        let change = next.p.iter().zip(&p.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / p.budget;
        p = next;
        if change < 1e-10 {
            break;
        }
    }
    p
}

/// Repeated beamformer-block solves from `w0`.
pub fn sca_beamformers(ch: &ChannelSet, f: &RisVector, w0: BeamformerSet, p: &PowerAllocation) -> BeamformerSet {
    let sigma2 = vec![NOISE; ch.num_users()];
    let ctx = Context {
        channels: ch,
        sigma2: &sigma2,
        gamma_th: GAMMA,
    };
    let mut w = w0;
    for _ in 0..300 {
        let exp = ExpansionPoint::at(ch, f, &w, p, &sigma2);
        let sub = build_p3(&ctx, f, p, &exp, Mode::SumRate).unwrap();
        let rep = sub.solve(&SolveOptions::default());
        if !rep.is_optimal() {
            break;
        }
        let angles = sub.angles(&rep.x);
        let step = angles.distance(&SphericalAngles {
            theta: exp.theta_prev.clone(),
        });
        w = angles.to_beamformers();
        if step < 1e-9 {
            break;
        }
    }
    w
}

/// Repeated RIS-block solves from `f0`.
pub fn sca_ris(ch: &ChannelSet, f0: RisVector, w: &BeamformerSet, p: &PowerAllocation) -> RisVector {
    let sigma2 = vec![NOISE; ch.num_users()];
    let ctx = Context {
        channels: ch,
        sigma2: &sigma2,
        gamma_th: GAMMA,
    };
    let mut f = f0;
    for _ in 0..300 {
        let exp = ExpansionPoint::at(ch, &f, w, p, &sigma2);
        let sub = build_p2(&ctx, w, p, &exp, Mode::SumRate).unwrap();
        let rep = sub.solve(&SolveOptions::default());
        if !rep.is_optimal() {
            break;
        }
        let next = sub.ris_vector(&rep.x).unwrap();
        let step = (next.as_vector() - f.as_vector()).norm();
        f = next;
        if step < 1e-10 {
            break;
        }
    }
    f
}

pub fn matched(ch: &ChannelSet, f: &RisVector) -> BeamformerSet {
    matched_filter(ch, f)
}

/// Best sum rate of a two-user power search with `points x points`
/// samples on the QoS-feasible part of the simplex: total power
/// `s P_t` for `s` on a uniform grid of `(0, 1]`, and user 1's share `t` on a
/// uniform grid of the closed interval where both SINR constraints hold,
/// endpoints included. Optima on a QoS boundary are then represented exactly.
pub fn power_grid_best(ch: &ChannelSet, f: &RisVector, w: &BeamformerSet, points: usize) -> Option<f64> {
    let pt = budget();
    let a: Vec<f64> = (0..2)
        .map(|k| trisopt::system::effective_gain(ch, k, f, w) / (NOISE * w.get(k).norm_squared()))
        .collect();
    let mut best: Option<f64> = None;
    for i in 1..=points {
        let s = i as f64 / points as f64;
        // SINR_1 = t s a1 P / ((1 - t) s a1 P + 1) >= gamma, and the mirror for user 2
        let need = |ak: f64| GAMMA * (s * ak * pt + 1.0) / (s * ak * pt * (1.0 + GAMMA));
        let (lo, hi) = (need(a[0]), 1.0 - need(a[1]));
        if lo > hi {
            continue;
        }
        for j in 0..points {
            let t = lo + (hi - lo) * j as f64 / (points - 1) as f64;
            let p = PowerAllocation {
                p: vec![t * s * pt, (1.0 - t) * s * pt],
                budget: pt,
            };
            if min_sinr(ch, f, w, &p) >= GAMMA * (1.0 - 1e-12) {
                let r = sum_rate(ch, f, w, &p);
                best = Some(best.map_or(r, |b: f64| b.max(r)));
            }
        }
    }
    best
}

/// `ch` with every channel multiplied by `factor`.
pub fn scaled(ch: &ChannelSet, factor: f64) -> ChannelSet {
    ChannelSet {
        h: ch.h.iter().map(|h| h * C64::from(factor)).collect(),
        ..ch.clone()
    }
}

/// Best sum rate over a grid of `points` beamformer phases per user for
/// single-antenna users. Users do not interact through `w`, so each user's
/// phase is searched on its own.
pub fn circle_grid_best(ch: &ChannelSet, f: &RisVector, p: &PowerAllocation, points: usize) -> f64 {
    let k = ch.num_users();
    let mut theta: Vec<Vec<f64>> = vec![vec![0.0]; k];
    for u in 0..k {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..points {
            let t = -PI + 2.0 * PI * i as f64 / points as f64;
            theta[u][0] = t;
            let w = SphericalAngles { theta: theta.clone() }.to_beamformers();
            let rate = rate_report(ch, f, &w, p, &vec![NOISE; k]).unwrap().rate[u];
            if rate > best.0 {
                best = (rate, t);
            }
        }
        theta[u][0] = best.1;
    }
    sum_rate(ch, f, &SphericalAngles { theta }.to_beamformers(), p)
}
