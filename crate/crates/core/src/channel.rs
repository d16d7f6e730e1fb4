//! Rician channel synthesis for the RIS-to-user links.
//!
//! Each user `k` sees an `N x M` channel
//!
//! ```text
//! H_k = sqrt(C0 / d_k^alpha) * ( sqrt(kappa/(kappa+1)) a_N(phi_k) a_M(varphi_k)^H
//!                              + sqrt(1/(kappa+1)) G_k )
//! ```
//!
//! where `G_k` has i.i.d. CN(0, 1) entries. Draws come from a ChaCha stream
//! keyed by `(seed, k)` and are consumed row by row, so the first row of an
//! `N`-antenna channel is exactly the single-antenna channel for the same seed.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// Element spacing `d` in meters.
    pub element_spacing: f64,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Number of RIS elements `M`.
    pub ris_elements: usize,
    /// Receive antennas per user `N`.
    pub user_antennas: usize,
}

impl ArrayGeometry {
    /// Half-wavelength spaced arrays.
    pub fn half_wavelength(ris_elements: usize, user_antennas: usize) -> Self {
        Self {
            element_spacing: 0.5,
            wavelength: 1.0,
            ris_elements,
            user_antennas,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.element_spacing > 0.0 && self.element_spacing.is_finite()) {
            return Err(Error::InvalidInput("element spacing must be > 0".into()));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::InvalidInput("wavelength must be > 0".into()));
        }
        if self.ris_elements == 0 || self.user_antennas == 0 {
            return Err(Error::InvalidInput(
                "element and antenna counts must be >= 1".into(),
            ));
        }
        Ok(())
    }

    fn phase_step(&self) -> f64 {
        2.0 * PI * self.element_spacing / self.wavelength
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Linear channel gain at 1 m.
    pub ref_gain: f64,
    pub pathloss_exponent: f64,
    pub rician_kappa: f64,
    /// Per-user noise power in watts.
    pub noise_power: Vec<f64>,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ref_gain > 0.0) {
            return Err(Error::InvalidInput("reference gain must be > 0".into()));
        }
        if !(self.pathloss_exponent > 0.0) {
            return Err(Error::InvalidInput("path-loss exponent must be > 0".into()));
        }
        if !(self.rician_kappa >= 0.0) {
            return Err(Error::InvalidInput("Rician factor must be >= 0".into()));
        }
        if self.noise_power.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput("noise powers must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-user placement: distance, AoA at the user array, AoD at the RIS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserGeometry {
    pub distance: Vec<f64>,
    pub aoa_user: Vec<f64>,
    pub aod_ris: Vec<f64>,
}

impl UserGeometry {
    pub fn num_users(&self) -> usize {
        self.distance.len()
    }

    /// Uniform placement: distances in `distance_range`, both angles in
    /// `[-angle_span, angle_span]`.
    pub fn sample(
        num_users: usize,
        distance_range: (f64, f64),
        angle_span: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // stream 0 is reserved for placement; NLoS draws use streams 1..=K
        rng.set_stream(0);
        let (lo, hi) = distance_range;
        let mut distance = Vec::with_capacity(num_users);
        let mut aoa_user = Vec::with_capacity(num_users);
        let mut aod_ris = Vec::with_capacity(num_users);
        for _ in 0..num_users {
            distance.push(lo + (hi - lo) * rng.random::<f64>());
            aoa_user.push(angle_span * (2.0 * rng.random::<f64>() - 1.0));
            aod_ris.push(angle_span * (2.0 * rng.random::<f64>() - 1.0));
        }
        Self {
            distance,
            aoa_user,
            aod_ris,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.distance.len();
        if self.aoa_user.len() != k || self.aod_ris.len() != k {
            return Err(Error::DimensionMismatch(
                "user geometry vectors differ in length".into(),
            ));
        }
        if self.distance.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidInput("user distances must be > 0".into()));
        }
        let in_range = |a: &f64| a.is_finite() && a.abs() <= PI / 2.0 + 1e-12;
        if !self.aoa_user.iter().all(in_range) || !self.aod_ris.iter().all(in_range) {
            return Err(Error::InvalidInput(
                "user angles must lie in [-pi/2, pi/2]".into(),
            ));
        }
        Ok(())
    }
}

/// The per-user channel matrices together with the geometry that made them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: Vec<DMatrix<C64>>,
    pub geometry: ArrayGeometry,
    pub seed: u64,
}

impl ChannelSet {
    pub fn num_users(&self) -> usize {
        self.h.len()
    }

    pub fn ris_elements(&self) -> usize {
        self.geometry.ris_elements
    }

    pub fn user_antennas(&self) -> usize {
        self.geometry.user_antennas
    }

    /// Channels seen by single-antenna users: the first receive row of each
    /// `H_k`. Identical to synthesizing with `N = 1` and the same seed.
    pub fn first_antenna(&self) -> ChannelSet {
        let h = self.h.iter().map(|hk| hk.rows(0, 1).into_owned()).collect();
        ChannelSet {
            h,
            geometry: ArrayGeometry {
                user_antennas: 1,
                ..self.geometry
            },
            seed: self.seed,
        }
    }

    /// Channels of the first `m` RIS elements. Truncating a draw made at a
    /// larger `M` keeps the realizations of the retained elements, so sweeps
    /// over `M` compare nested surfaces.
    pub fn first_elements(&self, m: usize) -> Result<ChannelSet> {
        if m == 0 || m > self.ris_elements() {
            return Err(Error::InvalidInput(format!(
                "cannot keep {m} of {} elements",
                self.ris_elements()
            )));
        }
        Ok(ChannelSet {
            h: self.h.iter().map(|hk| hk.columns(0, m).into_owned()).collect(),
            geometry: ArrayGeometry {
                ris_elements: m,
                ..self.geometry
            },
            seed: self.seed,
        })
    }
}

/// ULA response `[1, e^{j 2 pi d/lambda sin(angle)}, ..., e^{j 2 pi d/lambda (count-1) sin(angle)}]`.
pub fn array_response(angle: f64, count: usize, geometry: &ArrayGeometry) -> Result<DVector<C64>> {
    if !angle.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite angle {angle}")));
    }
    if count == 0 {
        return Err(Error::InvalidInput("array response needs count >= 1".into()));
    }
    let step = geometry.phase_step() * angle.sin();
    Ok(DVector::from_iterator(
        count,
        (0..count).map(|i| C64::from_polar(1.0, step * i as f64)),
    ))
}

/// Draws one realization of every user channel.
pub fn synthesize_channels(
    geometry: &ArrayGeometry,
    params: &ChannelParams,
    users: &UserGeometry,
    seed: u64,
) -> Result<ChannelSet> {
    geometry.validate()?;
    params.validate()?;
    users.validate()?;
    if params.noise_power.len() != users.num_users() {
        return Err(Error::DimensionMismatch(format!(
            "{} noise powers for {} users",
            params.noise_power.len(),
            users.num_users()
        )));
    }

    let (n, m) = (geometry.user_antennas, geometry.ris_elements);
    let kappa = params.rician_kappa;
    let los_weight = (kappa / (kappa + 1.0)).sqrt();
    let nlos_weight = (1.0 / (kappa + 1.0)).sqrt();

    let mut h = Vec::with_capacity(users.num_users());
    for k in 0..users.num_users() {
        let gain = (params.ref_gain / users.distance[k].powf(params.pathloss_exponent)).sqrt();
        let a_user = array_response(users.aoa_user[k], n, geometry)?;
        let a_ris = array_response(users.aod_ris[k], m, geometry)?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64 + 1);
        let mut nlos = DMatrix::<C64>::zeros(n, m);
        for row in 0..n {
            for col in 0..m {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                nlos[(row, col)] = C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
            }
        }

        let los = &a_user * a_ris.adjoint();
        h.push((los * C64::from(los_weight) + nlos * C64::from(nlos_weight)) * C64::from(gain));
    }

    Ok(ChannelSet {
        h,
        geometry: *geometry,
        seed,
    })
}
