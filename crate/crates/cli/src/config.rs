//! Device configuration files.
//!
//! JSON with the units people quote for these devices: Hz, dBm, fF, nH, pg, K. Loading
//! validates every field and names the offending one; saving writes the canonical form
//! (pretty-printed, fixed key order, shortest round-trip floats), so load→save of a
//! canonical file is byte-identical.

use std::fs;
use std::path::Path;

use emech_core::circuit::{vacuum_coupling_rate, CircuitParams, GapRow, GapTable, MechanicalMode};
use emech_core::langevin::{Device, NoiseBaths};
use emech_core::physics::{bose_occupancy, hz_to_rad};
use emech_core::response::{Background, CavityPort, DriveTone, ToneRole};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub circuit: CircuitSection,
    pub mechanics: MechanicsSection,
    pub cavity: CavitySection,
    /// Measured vacuum coupling rate. Without it g₀ is derived from the circuit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0_hz: Option<f64>,
    pub line: LineSection,
    pub noise: NoiseSection,
    #[serde(default)]
    pub jitter: JitterSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gap_table: Vec<GapRowConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    pub inductance_nh: f64,
    pub c_motional_ff: f64,
    pub c_coil_ff: f64,
    pub c_stray_ff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dcm_du_f_per_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanicsSection {
    pub frequency_hz: f64,
    pub effective_mass_pg: f64,
    pub intrinsic_damping_hz: f64,
    pub bath_temperature_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    pub frequency_hz: f64,
    pub kappa_i_hz: f64,
    pub kappa_e_hz: f64,
    #[serde(default)]
    pub background: BackgroundSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSection {
    pub amplitude: f64,
    pub phase_rad: f64,
    pub slope_per_hz: f64,
}

impl Default for BackgroundSection {
    fn default() -> Self {
        BackgroundSection {
            amplitude: 1.0,
            phase_rad: 0.0,
            slope_per_hz: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSection {
    /// Input line attenuation, dB (negative).
    pub attenuation_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub waveguide_occupancy: f64,
    pub cavity_occupancy: f64,
    /// Amplifier added noise referred to the device plane, quanta.
    pub added_noise: f64,
    /// Overrides the Bose occupancy of the mechanical bath temperature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanical_occupancy: Option<f64>,
}

/// Ornstein–Uhlenbeck wander of the mechanical frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterSection {
    /// Short-time diffusion constant, Hz²/s.
    pub diffusion_hz2_per_s: f64,
    /// Long-time standard deviation, Hz.
    pub saturation_hz: f64,
}

impl Default for JitterSection {
    fn default() -> Self {
        JitterSection {
            diffusion_hz2_per_s: 9.0,
            saturation_hz: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapRowConfig {
    pub gap_nm: f64,
    pub c_motional_ff: f64,
    pub g0_ideal_hz: f64,
    pub g0_loaded_hz: f64,
}

fn invalid(field: &str, reason: &str) -> CliError {
    CliError::Invariant(format!("config field `{field}`: {reason}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            field,
            &format!("must be positive and finite, got {v}"),
        ))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(
            field,
            &format!("must be non-negative and finite, got {v}"),
        ))
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, &format!("must be finite, got {v}")))
    }
}

impl DeviceConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Invariant(msg) => CliError::Invariant(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: DeviceConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Invariant(format!("malformed device configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_canonical_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.circuit;
        positive("circuit.inductance_nh", c.inductance_nh)?;
        positive("circuit.c_motional_ff", c.c_motional_ff)?;
        non_negative("circuit.c_coil_ff", c.c_coil_ff)?;
        non_negative("circuit.c_stray_ff", c.c_stray_ff)?;
        if let Some(d) = c.dcm_du_f_per_m {
            finite("circuit.dcm_du_f_per_m", d)?;
        }
        let m = &self.mechanics;
        positive("mechanics.frequency_hz", m.frequency_hz)?;
        positive("mechanics.effective_mass_pg", m.effective_mass_pg)?;
        positive("mechanics.intrinsic_damping_hz", m.intrinsic_damping_hz)?;
        non_negative("mechanics.bath_temperature_k", m.bath_temperature_k)?;
        let cav = &self.cavity;
        positive("cavity.frequency_hz", cav.frequency_hz)?;
        positive("cavity.kappa_i_hz", cav.kappa_i_hz)?;
        non_negative("cavity.kappa_e_hz", cav.kappa_e_hz)?;
        positive("cavity.background.amplitude", cav.background.amplitude)?;
        finite("cavity.background.phase_rad", cav.background.phase_rad)?;
        finite(
            "cavity.background.slope_per_hz",
            cav.background.slope_per_hz,
        )?;
        if let Some(g) = self.g0_hz {
            non_negative("g0_hz", g)?;
        }
        if !(self.line.attenuation_db <= 0.0 && self.line.attenuation_db.is_finite()) {
            return Err(invalid(
                "line.attenuation_db",
                "attenuation must be finite and ≤ 0 dB",
            ));
        }
        let n = &self.noise;
        non_negative("noise.waveguide_occupancy", n.waveguide_occupancy)?;
        non_negative("noise.cavity_occupancy", n.cavity_occupancy)?;
        non_negative("noise.added_noise", n.added_noise)?;
        if let Some(v) = n.mechanical_occupancy {
            non_negative("noise.mechanical_occupancy", v)?;
        }
        positive(
            "jitter.diffusion_hz2_per_s",
            self.jitter.diffusion_hz2_per_s,
        )?;
        positive("jitter.saturation_hz", self.jitter.saturation_hz)?;
        for (k, r) in self.gap_table.iter().enumerate() {
            positive(&format!("gap_table[{k}].gap_nm"), r.gap_nm)?;
            positive(&format!("gap_table[{k}].c_motional_ff"), r.c_motional_ff)?;
            non_negative(&format!("gap_table[{k}].g0_ideal_hz"), r.g0_ideal_hz)?;
            non_negative(&format!("gap_table[{k}].g0_loaded_hz"), r.g0_loaded_hz)?;
        }
        if !self.gap_table.is_empty() {
            self.gap_table()?;
        }
        // the circuit-derived g₀ must be available when no measured value is given
        if self.g0_hz.is_none() && c.dcm_du_f_per_m.is_none() {
            return Err(invalid(
                "circuit.dcm_du_f_per_m",
                "needed to derive g0 when `g0_hz` is not given",
            ));
        }
        Ok(())
    }

    pub fn circuit(&self) -> CircuitParams {
        let c = &self.circuit;
        CircuitParams {
            inductance: c.inductance_nh * 1e-9,
            c_motional: c.c_motional_ff * 1e-15,
            c_coil: c.c_coil_ff * 1e-15,
            c_stray: c.c_stray_ff * 1e-15,
            dcm_du: c.dcm_du_f_per_m,
        }
    }

    pub fn mode(&self) -> MechanicalMode {
        let m = &self.mechanics;
        MechanicalMode {
            omega_m: hz_to_rad(m.frequency_hz),
            m_eff: m.effective_mass_pg * 1e-15,
            gamma_i: hz_to_rad(m.intrinsic_damping_hz),
            bath_temperature: m.bath_temperature_k,
        }
    }

    pub fn port(&self) -> CavityPort {
        let c = &self.cavity;
        CavityPort {
            omega_r: hz_to_rad(c.frequency_hz),
            kappa_i: hz_to_rad(c.kappa_i_hz),
            kappa_e: hz_to_rad(c.kappa_e_hz),
            background: Background {
                amplitude: c.background.amplitude,
                phase: c.background.phase_rad,
                slope: c.background.slope_per_hz / (2.0 * std::f64::consts::PI),
            },
        }
    }

    /// g₀ in rad/s: the measured value if present, else the circuit chain.
    pub fn g0(&self) -> Result<f64> {
        match self.g0_hz {
            Some(g) => Ok(hz_to_rad(g)),
            None => Ok(vacuum_coupling_rate(
                &self.circuit(),
                &self.mode(),
                self.port().omega_r,
            )?),
        }
    }

    pub fn device(&self) -> Result<Device> {
        let mode = self.mode();
        let dev = Device {
            port: self.port(),
            omega_m: mode.omega_m,
            gamma_i: mode.gamma_i,
            g0: self.g0()?,
        };
        dev.validate()?;
        Ok(dev)
    }

    /// Thermal occupancy of the mechanical bath.
    pub fn mechanical_occupancy(&self) -> Result<f64> {
        match self.noise.mechanical_occupancy {
            Some(n) => Ok(n),
            None => Ok(bose_occupancy(
                self.mode().omega_m,
                self.mechanics.bath_temperature_k,
            )?),
        }
    }

    pub fn baths(&self) -> Result<NoiseBaths> {
        Ok(NoiseBaths {
            n_wg: self.noise.waveguide_occupancy,
            n_cav: self.noise.cavity_occupancy,
            n_mech: self.mechanical_occupancy()?,
            n_add: self.noise.added_noise,
        })
    }

    /// A tone at the generator, `omega_d` in rad/s.
    pub fn tone(&self, power_dbm: f64, omega_d: f64, role: ToneRole) -> DriveTone {
        DriveTone {
            generator_power_dbm: power_dbm,
            attenuation_db: self.line.attenuation_db,
            omega_d,
            role,
        }
    }

    pub fn gap_table(&self) -> Result<GapTable> {
        let rows = self
            .gap_table
            .iter()
            .map(|r| GapRow {
                gap: r.gap_nm * 1e-9,
                c_motional: r.c_motional_ff * 1e-15,
                g0_ideal: hz_to_rad(r.g0_ideal_hz),
                g0_loaded: hz_to_rad(r.g0_loaded_hz),
            })
            .collect();
        GapTable::new(rows).map_err(|e| invalid("gap_table", &e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = include_str!("../data/device_soi.json");

    #[test]
    fn sample_round_trips_byte_identically() {
        let cfg = DeviceConfig::from_json(SAMPLE).unwrap();
        assert_eq!(cfg.to_canonical_json(), SAMPLE);
    }

    #[test]
    fn invalid_field_is_named() {
        let text = SAMPLE.replace("\"kappa_i_hz\": 1800000.0", "\"kappa_i_hz\": -1.0");
        let err = DeviceConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("cavity.kappa_i_hz"), "{err}");
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SAMPLE.replacen('{', "{\n  \"colour\": 1,", 1);
        assert!(DeviceConfig::from_json(&text).is_err());
    }

    #[test]
    fn derived_g0_needs_the_capacitance_derivative() {
        let mut cfg = DeviceConfig::from_json(SAMPLE).unwrap();
        cfg.g0_hz = None;
        assert!(cfg.g0().unwrap() > 0.0);
        cfg.circuit.dcm_du_f_per_m = None;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("circuit.dcm_du_f_per_m"));
    }
}
