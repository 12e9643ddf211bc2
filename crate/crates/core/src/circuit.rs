//! Lumped-element circuit and the electromechanical coupling chain: capacitances set the
//! resonance frequency and participation ratio, which together with the zero-point motion
//! and the motional-capacitance derivative give the vacuum coupling rate.

use alloc::vec::Vec;

use crate::error::{domain, Error, Result};
use crate::physics::{bose_occupancy, HBAR, MU_0};

/// Coefficients of the modified-Wheeler inductance estimate for square spirals.
const WHEELER_K1: f64 = 2.34;
const WHEELER_K2: f64 = 2.75;

/// Coil inductance in parallel with the motional, coil and stray capacitances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitParams {
    /// H
    pub inductance: f64,
    /// F
    pub c_motional: f64,
    /// F
    pub c_coil: f64,
    /// F
    pub c_stray: f64,
    /// ∂C_m/∂u in F/m, taken from an external field simulation.
    pub dcm_du: Option<f64>,
}

impl CircuitParams {
    pub fn new(
        inductance: f64,
        c_motional: f64,
        c_coil: f64,
        c_stray: f64,
        dcm_du: Option<f64>,
    ) -> Result<Self> {
        let c = CircuitParams {
            inductance,
            c_motional,
            c_coil,
            c_stray,
            dcm_du,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inductance > 0.0 && self.inductance.is_finite()) {
            return Err(domain("inductance", "must be positive"));
        }
        if !(self.c_motional > 0.0 && self.c_motional.is_finite()) {
            return Err(domain("c_motional", "must be positive"));
        }
        if !(self.c_coil >= 0.0 && self.c_coil.is_finite()) {
            return Err(domain("c_coil", "must be non-negative"));
        }
        if !(self.c_stray >= 0.0 && self.c_stray.is_finite()) {
            return Err(domain("c_stray", "must be non-negative"));
        }
        if let Some(d) = self.dcm_du {
            if !d.is_finite() {
                return Err(domain("dcm_du", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn total_capacitance(&self) -> f64 {
        self.c_motional + self.c_coil + self.c_stray
    }
}

/// Mechanical resonance: frequency (rad/s), effective mass (kg), intrinsic damping (rad/s)
/// and the temperature of its bath (K).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalMode {
    pub omega_m: f64,
    pub m_eff: f64,
    pub gamma_i: f64,
    pub bath_temperature: f64,
}

impl MechanicalMode {
    pub fn new(omega_m: f64, m_eff: f64, gamma_i: f64, bath_temperature: f64) -> Result<Self> {
        let m = MechanicalMode {
            omega_m,
            m_eff,
            gamma_i,
            bath_temperature,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_m > 0.0 && self.omega_m.is_finite()) {
            return Err(domain("omega_m", "must be positive"));
        }
        if !(self.m_eff > 0.0 && self.m_eff.is_finite()) {
            return Err(domain("m_eff", "must be positive"));
        }
        if !(self.gamma_i > 0.0 && self.gamma_i.is_finite()) {
            return Err(domain("gamma_i", "must be positive"));
        }
        if !(self.bath_temperature >= 0.0 && self.bath_temperature.is_finite()) {
            return Err(domain("bath_temperature", "must be non-negative"));
        }
        Ok(())
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega_m / self.gamma_i
    }

    /// Bose occupancy of the mode at its bath temperature.
    pub fn thermal_occupancy(&self) -> Result<f64> {
        bose_occupancy(self.omega_m, self.bath_temperature)
    }
}

/// `1/√(L·C_tot)` in rad/s.
pub fn resonance_frequency(circuit: &CircuitParams) -> f64 {
    1.0 / libm::sqrt(circuit.inductance * circuit.total_capacitance())
}

/// Participation ratio η = C_m / C_tot.
pub fn participation_ratio(circuit: &CircuitParams) -> f64 {
    circuit.c_motional / circuit.total_capacitance()
}

/// Zero-point amplitude √(ħ / 2ω_m m_eff) in metres.
pub fn zero_point_fluctuation(mode: &MechanicalMode) -> f64 {
    libm::sqrt(HBAR / (2.0 * mode.omega_m * mode.m_eff))
}

/// Magnitude of the vacuum coupling rate, η·x_zpf·(ω_r / 2C_m)·∂C_m/∂u, in rad/s.
///
/// The physical rate is negative (the cavity frequency drops as the gap closes); only the
/// magnitude is returned because every consumer uses g₀².
pub fn vacuum_coupling_rate(
    circuit: &CircuitParams,
    mode: &MechanicalMode,
    omega_r: f64,
) -> Result<f64> {
    let dcm_du = circuit.dcm_du.ok_or(Error::MissingDerivative)?;
    if !(omega_r > 0.0) {
        return Err(domain("omega_r", "must be positive"));
    }
    let eta = participation_ratio(circuit);
    let x_zpf = zero_point_fluctuation(mode);
    Ok((eta * x_zpf * omega_r / (2.0 * circuit.c_motional) * dcm_du).abs())
}

/// Modified-Wheeler estimate of a square spiral inductance,
/// `K₁·μ₀·n²·d_avg / (1 + K₂·ρ)` with K₁ = 2.34 and K₂ = 2.75.
///
/// `d_avg` is the mean of outer and inner diameters (m), `fill_ratio` is
/// (d_out − d_in)/(d_out + d_in).
pub fn coil_inductance_estimate(n_turns: u32, d_avg: f64, fill_ratio: f64) -> Result<f64> {
    if n_turns < 1 {
        return Err(domain("n_turns", "need at least one turn"));
    }
    if !(d_avg >= 0.0) {
        return Err(domain("d_avg", "must be non-negative"));
    }
    if !(fill_ratio > 0.0 && fill_ratio < 1.0) {
        return Err(domain("fill_ratio", "must lie in (0, 1)"));
    }
    let n = f64::from(n_turns);
    Ok(WHEELER_K1 * MU_0 * n * n * d_avg / (1.0 + WHEELER_K2 * fill_ratio))
}

/// One tabulated gap point. Coupling rates are in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRow {
    /// m
    pub gap: f64,
    /// F
    pub c_motional: f64,
    pub g0_ideal: f64,
    pub g0_loaded: f64,
}

/// Motional capacitance and coupling rate versus capacitor gap, e.g. from field simulations.
#[derive(Debug, Clone, PartialEq)]
pub struct GapTable {
    rows: Vec<GapRow>,
}

/// Result of [`interpolate_gap`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapPoint {
    pub c_motional: f64,
    pub g0_loaded: f64,
}

impl GapTable {
    pub fn new(rows: Vec<GapRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(domain("gap_table", "table is empty"));
        }
        for r in &rows {
            if !(r.gap > 0.0 && r.c_motional > 0.0 && r.g0_ideal > 0.0 && r.g0_loaded > 0.0) {
                return Err(domain("gap_table", "all entries must be positive"));
            }
        }
        for w in rows.windows(2) {
            if !(w[1].gap > w[0].gap) {
                return Err(domain("gap_table", "gap must be strictly increasing"));
            }
            if !(w[1].c_motional < w[0].c_motional) {
                return Err(domain("gap_table", "C_m must decrease with gap"));
            }
        }
        Ok(GapTable { rows })
    }

    pub fn rows(&self) -> &[GapRow] {
        &self.rows
    }
}

/// Piecewise-linear interpolation of (C_m, g₀) at gap `d`. Exact at knots, no extrapolation.
pub fn interpolate_gap(table: &GapTable, d: f64) -> Result<GapPoint> {
    let rows = table.rows();
    let lo = rows[0].gap;
    let hi = rows[rows.len() - 1].gap;
    if !(d >= lo && d <= hi) {
        return Err(Error::OutOfRange { value: d, lo, hi });
    }
    if let Some(r) = rows.iter().find(|r| r.gap == d) {
        return Ok(GapPoint {
            c_motional: r.c_motional,
            g0_loaded: r.g0_loaded,
        });
    }
    let k = rows.partition_point(|r| r.gap < d);
    let (a, b) = (rows[k - 1], rows[k]);
    let t = (d - a.gap) / (b.gap - a.gap);
    Ok(GapPoint {
        c_motional: a.c_motional + t * (b.c_motional - a.c_motional),
        g0_loaded: a.g0_loaded + t * (b.g0_loaded - a.g0_loaded),
    })
}
