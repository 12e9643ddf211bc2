//! Physical constants, unit conversions and occupancy statistics.

use core::f64::consts::PI;

use crate::error::{domain, Result};

/// Reduced Planck constant, J·s (CODATA 2018, exact).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K (CODATA 2018, exact).
pub const K_B: f64 = 1.380_649e-23;
/// Vacuum permeability, H/m (CODATA 2018).
pub const MU_0: f64 = 1.256_637_062_12e-6;

/// Below this value of ħω/k_BT the Bose factor switches to its series expansion.
const SERIES_CUTOFF: f64 = 1e-9;

/// An angular frequency in rad/s.
///
/// Files and command lines carry cyclic frequencies; they cross into the models through
/// [`AngularFrequency::from_hz`] and leave through [`AngularFrequency::hz`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct AngularFrequency(pub f64);

impl AngularFrequency {
    pub fn from_hz(hz: f64) -> Self {
        AngularFrequency(hz_to_rad(hz))
    }

    pub fn rad_per_s(self) -> f64 {
        self.0
    }

    pub fn hz(self) -> f64 {
        rad_to_hz(self.0)
    }
}

impl From<AngularFrequency> for f64 {
    fn from(w: AngularFrequency) -> f64 {
        w.0
    }
}

#[inline]
pub fn hz_to_rad(hz: f64) -> f64 {
    2.0 * PI * hz
}

#[inline]
pub fn rad_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Mean Bose–Einstein occupancy `1/(exp(ħω/k_BT) − 1)` of a mode at `omega` (rad/s).
///
/// Returns 0 at zero temperature. For ħω/k_BT below 1e-9 the series `k_BT/ħω − 1/2` is used.
pub fn bose_occupancy(omega: f64, temperature: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(domain(
            "omega",
            "mode frequency must be positive and finite",
        ));
    }
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(domain(
            "temperature",
            "temperature must be non-negative and finite",
        ));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    let x = HBAR * omega / (K_B * temperature);
    if x < SERIES_CUTOFF {
        Ok(1.0 / x - 0.5)
    } else {
        Ok(1.0 / libm::expm1(x))
    }
}

/// Temperature whose Bose occupancy at `omega` equals `occupancy`.
///
/// Non-positive occupancies map to 0 K.
pub fn bose_temperature(omega: f64, occupancy: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(domain(
            "omega",
            "mode frequency must be positive and finite",
        ));
    }
    if occupancy.is_nan() {
        return Err(domain("occupancy", "occupancy is NaN"));
    }
    if occupancy <= 0.0 {
        return Ok(0.0);
    }
    Ok(HBAR * omega / (K_B * libm::log1p(1.0 / occupancy)))
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * libm::pow(10.0, dbm / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * libm::log10(watts / 1e-3)
}

/// Scale `power` by a line attenuation given in dB (must be ≤ 0; gain is not attenuation).
pub fn apply_attenuation(power: f64, attenuation_db: f64) -> Result<f64> {
    if !(attenuation_db <= 0.0) {
        return Err(domain(
            "attenuation",
            "attenuation must be expressed as a non-positive dB value",
        ));
    }
    Ok(power * libm::pow(10.0, attenuation_db / 10.0))
}
