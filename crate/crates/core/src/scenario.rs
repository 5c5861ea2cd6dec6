//! System configuration, derived physical constants and random user drops.
//!
//! The coordinate origin sits at the centre of the `D_x × D_y` service area.
//! Waveguides run parallel to the x axis at height `d`; every waveguide
//! carries the same `M` pre-configured antenna positions, spread evenly over
//! `[-D_x/2, D_x/2]`, and is fed from `x = -D_x/2`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("antenna spacing {spacing:.4e} m is below half a wavelength ({half_lambda:.4e} m)")]
    SpacingTooSmall { spacing: f64, half_lambda: f64 },
}

/// All physical and system parameters of one scenario.
///
/// Serialized field names follow the usual notation (`K`, `M`, `N`, `D_x`,
/// ...) so config files use the symbols of the system model.
/// Missing fields fall back to [`ScenarioConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of waveguides.
    #[serde(rename = "K")]
    pub waveguides: usize,
    /// Potential pinching antennas per waveguide.
    #[serde(rename = "M")]
    pub antennas: usize,
    /// Number of users.
    #[serde(rename = "N")]
    pub users: usize,
    /// Area length along the waveguides, meters.
    #[serde(rename = "D_x")]
    pub length_x: f64,
    /// Area width across the waveguides, meters.
    #[serde(rename = "D_y")]
    pub width_y: f64,
    /// Waveguide height, meters.
    #[serde(rename = "d")]
    pub height: f64,
    /// Carrier frequency, Hz.
    #[serde(rename = "f_c")]
    pub carrier_hz: f64,
    /// Effective refractive index of the dielectric waveguide.
    pub n_eff: f64,
    /// Transmit power available at each waveguide, dBm.
    #[serde(rename = "P_t_dBm")]
    pub tx_power_dbm: f64,
    /// Noise power, dBm.
    #[serde(rename = "sigma2_dBm")]
    pub noise_dbm: f64,
    /// QoS target rate, bits/s/Hz.
    #[serde(rename = "R_min")]
    pub min_rate: f64,
    pub seed: u64,
    /// Explicit waveguide y coordinates; overrides the default placement rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub waveguide_y: Option<Vec<f64>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            waveguides: 2,
            antennas: 20,
            users: 8,
            length_x: 10.0,
            width_y: 8.0,
            height: 3.0,
            carrier_hz: 28e9,
            n_eff: 1.4,
            tx_power_dbm: 10.0,
            noise_dbm: -90.0,
            min_rate: 0.1,
            seed: 1,
            waveguide_y: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: &str| Err(ScenarioError::Invalid(msg.to_string()));
        if self.waveguides < 1 {
            return invalid("K must be at least 1");
        }
        if self.antennas < 2 {
            return invalid("M must be at least 2");
        }
        if self.users < 1 {
            return invalid("N must be at least 1");
        }
        for (name, value) in
            [("D_x", self.length_x), ("D_y", self.width_y), ("d", self.height), ("f_c", self.carrier_hz)]
        {
            if !(value.is_finite() && value > 0.0) {
                return Err(ScenarioError::Invalid(format!("{name} must be positive")));
            }
        }
        if !(self.n_eff.is_finite() && self.n_eff >= 1.0) {
            return invalid("n_eff must be >= 1");
        }
        if !self.tx_power_dbm.is_finite() || !self.noise_dbm.is_finite() {
            return invalid("power levels must be finite");
        }
        if !(self.min_rate.is_finite() && self.min_rate >= 0.0) {
            return invalid("R_min must be non-negative");
        }
        if let Some(ys) = &self.waveguide_y {
            if ys.len() != self.waveguides {
                return invalid("waveguide_y must list exactly K coordinates");
            }
            if ys.iter().any(|y| !y.is_finite()) {
                return invalid("waveguide_y entries must be finite");
            }
        }
        let half_lambda = SPEED_OF_LIGHT / self.carrier_hz / 2.0;
        let spacing = self.antenna_spacing();
        if spacing < half_lambda {
            return Err(ScenarioError::SpacingTooSmall { spacing, half_lambda });
        }
        Ok(())
    }

    pub fn antenna_spacing(&self) -> f64 {
        self.length_x / (self.antennas as f64 - 1.0)
    }

    /// x coordinate of every pre-configured antenna position.
    pub fn antenna_positions(&self) -> Vec<f64> {
        let spacing = self.antenna_spacing();
        (0..self.antennas).map(|m| -self.length_x / 2.0 + m as f64 * spacing).collect()
    }

    /// y coordinate of each waveguide: `(k - (K+1)/2) · D_y / K` for
    /// `k = 1..K`, unless overridden by `waveguide_y`.
    pub fn waveguide_positions(&self) -> Vec<f64> {
        if let Some(ys) = &self.waveguide_y {
            return ys.clone();
        }
        let k_total = self.waveguides as f64;
        (1..=self.waveguides).map(|k| (k as f64 - (k_total + 1.0) / 2.0) * self.width_y / k_total).collect()
    }

    pub fn feed_x(&self) -> f64 {
        -self.length_x / 2.0
    }
}

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Constants derived once from a validated [`ScenarioConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    /// Free-space wavelength, m.
    pub lambda: f64,
    /// Guided wavelength inside the waveguide, m.
    pub lambda_g: f64,
    /// Frequency-dependent path-loss factor `c / (4π f_c)`, m.
    pub eta: f64,
    /// Per-waveguide transmit power, W.
    pub tx_power: f64,
    /// Noise power, W.
    pub noise: f64,
}

pub fn build_derived(config: &ScenarioConfig) -> Result<DerivedConstants, ScenarioError> {
    config.validate()?;
    let lambda = SPEED_OF_LIGHT / config.carrier_hz;
    Ok(DerivedConstants {
        lambda,
        lambda_g: lambda / config.n_eff,
        eta: lambda / (4.0 * std::f64::consts::PI),
        tx_power: dbm_to_watts(config.tx_power_dbm),
        noise: dbm_to_watts(config.noise_dbm),
    })
}

/// One random user placement together with the fixed antenna geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDrop {
    /// User positions `(x, y)` on the ground plane, meters.
    pub user_xy: Vec<[f64; 2]>,
    /// Pre-configured antenna x coordinates, shared by all waveguides.
    pub antenna_x: Vec<f64>,
    /// Waveguide y coordinates.
    pub waveguide_y: Vec<f64>,
    /// Feed point x coordinate.
    pub feed_x: f64,
    pub height: f64,
}

impl UserDrop {
    pub fn users(&self) -> usize {
        self.user_xy.len()
    }

    pub fn waveguides(&self) -> usize {
        self.waveguide_y.len()
    }

    pub fn antennas(&self) -> usize {
        self.antenna_x.len()
    }

    /// Builds a drop with explicit user positions and the config's geometry.
    pub fn with_users(config: &ScenarioConfig, user_xy: Vec<[f64; 2]>) -> Self {
        Self {
            user_xy,
            antenna_x: config.antenna_positions(),
            waveguide_y: config.waveguide_positions(),
            feed_x: config.feed_x(),
            height: config.height,
        }
    }
}

/// Places `N` users i.i.d. uniformly over the service area.
///
/// Only the user positions consume randomness, so two configs that differ in
/// `K` or `M` but share a seed see the same users.
pub fn sample_drop<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> UserDrop {
    let hx = config.length_x / 2.0;
    let hy = config.width_y / 2.0;
    let user_xy = (0..config.users).map(|_| [rng.gen_range(-hx..=hx), rng.gen_range(-hy..=hy)]).collect();
    UserDrop::with_users(config, user_xy)
}
