//! Flat TOML run configuration.
//!
//! One key per scalar, arrays for grids. Keys ending in `_db` hold power
//! ratios in dB and keys ending in `_dbm` hold absolute powers in dBm; both
//! are converted to linear units (ratio, watts) once, here.
//!
//! ```toml
//! users = 3
//! ris_elements = 30
//! user_antennas = 4
//! element_spacing = 0.5        # meters
//! wavelength = 1.0             # meters
//! ref_gain_db = -30
//! pathloss_exponent = 2.2
//! rician_kappa = 3
//! noise_power_dbm = -50
//! tx_power_dbm = -8
//! distance_min = 20            # meters
//! distance_max = 60
//! angle_span = 1.0471975511965976   # radians, angles drawn in [-span, span]
//! gamma_th = 0.1
//! eps_outer = 1e-3
//! eps_f = 1e-4
//! eps_w = 1e-4
//! max_outer = 30
//! max_inner_f = 15
//! max_inner_w = 15
//! max_restoration = 10
//! power_grid_dbm = [-14, -12, -10, -8, -6, -4, -2]
//! element_grid = [10, 20, 30, 40]
//! seed = 0
//! num_seeds = 1
//! record_wall_time = false
//! ```

use std::f64::consts::FRAC_PI_3;
use std::path::Path;

use serde::Deserialize;

use crate::ao::AoConfig;
use crate::channel::{ArrayGeometry, ChannelParams};
use crate::{Error, Result};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * db_to_linear(dbm)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    users: usize,
    ris_elements: usize,
    user_antennas: usize,
    element_spacing: f64,
    wavelength: f64,
    ref_gain_db: f64,
    pathloss_exponent: f64,
    rician_kappa: f64,
    noise_power_dbm: f64,
    tx_power_dbm: f64,
    distance_min: f64,
    distance_max: f64,
    angle_span: f64,
    gamma_th: f64,
    eps_outer: f64,
    eps_f: f64,
    eps_w: f64,
    max_outer: usize,
    max_inner_f: usize,
    max_inner_w: usize,
    max_restoration: usize,
    power_grid_dbm: Vec<f64>,
    element_grid: Vec<usize>,
    seed: u64,
    num_seeds: usize,
    record_wall_time: bool,
}

impl Default for RawConfig {
    fn default() -> Self {
        let ao = AoConfig::default();
        Self {
            users: 3,
            ris_elements: 30,
            user_antennas: 4,
            element_spacing: 0.5,
            wavelength: 1.0,
            ref_gain_db: -30.0,
            pathloss_exponent: 2.2,
            rician_kappa: 3.0,
            noise_power_dbm: -50.0,
            tx_power_dbm: -8.0,
            distance_min: 20.0,
            distance_max: 60.0,
            angle_span: FRAC_PI_3,
            gamma_th: ao.gamma_th,
            eps_outer: ao.eps_outer,
            eps_f: ao.eps_f,
            eps_w: ao.eps_w,
            max_outer: ao.max_outer,
            max_inner_f: ao.max_inner_f,
            max_inner_w: ao.max_inner_w,
            max_restoration: ao.max_restoration,
            power_grid_dbm: (0..7).map(|i| -14.0 + 2.0 * i as f64).collect(),
            element_grid: vec![10, 20, 30, 40],
            seed: 0,
            num_seeds: 1,
            record_wall_time: false,
        }
    }
}

/// Scenario, algorithm settings and sweep grids in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub users: usize,
    pub geometry: ArrayGeometry,
    pub channel: ChannelParams,
    /// Transmit power budget `P_t` in watts.
    pub tx_power: f64,
    /// The budget as configured, in dBm; the sweep value of non-sweep runs.
    pub tx_power_dbm: f64,
    pub distance_range: (f64, f64),
    pub angle_span: f64,
    pub ao: AoConfig,
    pub power_grid_dbm: Vec<f64>,
    pub element_grid: Vec<usize>,
    pub seed: u64,
    pub num_seeds: usize,
    /// When false, `wall_ms` is written as 0 so reruns are byte-identical.
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_raw(RawConfig::default()).expect("default configuration is valid")
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        if raw.users == 0 {
            return Err(Error::Config("users must be >= 1".into()));
        }
        if raw.num_seeds == 0 {
            return Err(Error::Config("num_seeds must be >= 1".into()));
        }
        check_grid("power_grid_dbm", &raw.power_grid_dbm, |v| v.is_finite())?;
        check_grid("element_grid", &raw.element_grid, |&m| m >= 1)?;
        if !(raw.distance_min > 0.0 && raw.distance_min <= raw.distance_max && raw.distance_max.is_finite()) {
            return Err(Error::Config(format!(
                "distance range [{}, {}] is not a positive interval",
                raw.distance_min, raw.distance_max
            )));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&raw.angle_span) {
            return Err(Error::Config(format!("angle_span {} outside [0, pi/2]", raw.angle_span)));
        }
        if !raw.tx_power_dbm.is_finite() {
            return Err(Error::Config("tx_power_dbm must be finite".into()));
        }
        let geometry = ArrayGeometry {
            element_spacing: raw.element_spacing,
            wavelength: raw.wavelength,
            ris_elements: raw.ris_elements,
            user_antennas: raw.user_antennas,
        };
        geometry.validate().map_err(|e| Error::Config(e.to_string()))?;
        let channel = ChannelParams {
            ref_gain: db_to_linear(raw.ref_gain_db),
            pathloss_exponent: raw.pathloss_exponent,
            rician_kappa: raw.rician_kappa,
            noise_power: vec![dbm_to_watts(raw.noise_power_dbm); raw.users],
        };
        channel.validate().map_err(|e| Error::Config(e.to_string()))?;
        let ao = AoConfig {
            eps_outer: raw.eps_outer,
            eps_f: raw.eps_f,
            eps_w: raw.eps_w,
            max_outer: raw.max_outer,
            max_inner_f: raw.max_inner_f,
            max_inner_w: raw.max_inner_w,
            gamma_th: raw.gamma_th,
            seed: raw.seed,
            max_restoration: raw.max_restoration,
            ..AoConfig::default()
        };
        ao.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            users: raw.users,
            geometry,
            channel,
            tx_power: dbm_to_watts(raw.tx_power_dbm),
            tx_power_dbm: raw.tx_power_dbm,
            distance_range: (raw.distance_min, raw.distance_max),
            angle_span: raw.angle_span,
            ao,
            power_grid_dbm: raw.power_grid_dbm,
            element_grid: raw.element_grid,
            seed: raw.seed,
            num_seeds: raw.num_seeds,
            record_wall_time: raw.record_wall_time,
        })
    }

    /// `seed, seed + 1, ..., seed + num_seeds - 1`.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.num_seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.channel.noise_power
    }
}

fn check_grid<T: PartialOrd + std::fmt::Debug>(name: &str, grid: &[T], valid: impl Fn(&T) -> bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{name} is empty")));
    }
    if let Some(v) = grid.iter().find(|v| !valid(v)) {
        return Err(Error::Config(format!("{name} has invalid entry {v:?}")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("{name} must be strictly ascending")));
    }
    Ok(())
}
