//! Quantities that need a whole power sweep.

use alloc::vec::Vec;

use super::Z95;
use crate::error::{Error, Result};
use crate::langevin::ideal_cooling;

/// One EIT fit of a power sweep: drive power, calibrated photon number, fitted G (rad/s)
/// and its 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub drive_power_dbm: f64,
    pub n_d: f64,
    pub coupling: f64,
    pub coupling_ci95: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G0Estimate {
    /// rad/s
    pub g0: f64,
    pub ci95: f64,
    /// Slope of ln G against ln n_d; 0.5 for a clean square-root law.
    pub log_slope: f64,
    pub reduced_chi_square: f64,
}

/// Weighted fit of G = g₀√n_d through the origin.
///
/// Weights are 1/σ² with σ from each point's interval. If any interval is zero or not
/// finite, all points are weighted equally. The interval of g₀ is inflated by the
/// reduced chi-square when the scatter exceeds the stated errors.
pub fn extract_g0(points: &[SweepPoint]) -> Result<G0Estimate> {
    if points.len() < 3 {
        return Err(Error::Setup("need at least three sweep points".into()));
    }
    if points.iter().any(|p| !(p.n_d > 0.0) || !(p.coupling > 0.0)) {
        return Err(Error::Setup(
            "photon numbers and couplings must be positive".into(),
        ));
    }
    if points.windows(2).any(|w| !(w[1].n_d > w[0].n_d)) {
        return Err(Error::Setup(
            "photon number must increase strictly along the sweep".into(),
        ));
    }
    let usable = points
        .iter()
        .all(|p| p.coupling_ci95 > 0.0 && p.coupling_ci95.is_finite());
    let weights: Vec<f64> = points
        .iter()
        .map(|p| {
            if usable {
                (Z95 / p.coupling_ci95) * (Z95 / p.coupling_ci95)
            } else {
                1.0
            }
        })
        .collect();
    let swn: f64 = points.iter().zip(&weights).map(|(p, w)| w * p.n_d).sum();
    let swgn: f64 = points
        .iter()
        .zip(&weights)
        .map(|(p, w)| w * p.coupling * libm::sqrt(p.n_d))
        .sum();
    let g0 = swgn / swn;
    let chi2: f64 = points
        .iter()
        .zip(&weights)
        .map(|(p, w)| {
            let r = p.coupling - g0 * libm::sqrt(p.n_d);
            w * r * r
        })
        .sum();
    let dof = (points.len() - 1) as f64;
    let reduced = chi2 / dof;
    let var = if usable {
        reduced.max(1.0) / swn
    } else {
        reduced / swn
    };

    // weighted ln G vs ln n; σ_lnG = σ_G/G
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, w) in points.iter().zip(&weights) {
        let w = w * p.coupling * p.coupling;
        let (x, y) = (libm::log(p.n_d), libm::log(p.coupling));
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let log_slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
    Ok(G0Estimate {
        g0,
        ci95: Z95 * libm::sqrt(var),
        log_slope,
        reduced_chi_square: reduced,
    })
}

/// Measured occupancy at one drive power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoolingPoint {
    pub n_d: f64,
    pub cooperativity: f64,
    pub n_m: f64,
    pub n_m_ci95: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoolingRow {
    pub n_d: f64,
    pub cooperativity: f64,
    pub n_m: f64,
    pub n_m_ci95: f64,
    pub n_m_ideal: f64,
    /// n_m − n_m_ideal
    pub deviation: f64,
    /// More than three standard errors above or below the ideal curve.
    pub anomalous: bool,
}

/// Compare measured occupancies with the ideal law n_f,m/(1 + C).
pub fn cooling_curve_analysis(points: &[CoolingPoint], n_thermal: f64) -> Vec<CoolingRow> {
    points
        .iter()
        .map(|p| {
            let ideal = ideal_cooling(n_thermal, p.cooperativity);
            let deviation = p.n_m - ideal;
            let sigma = p.n_m_ci95 / Z95;
            // float-level agreement never counts, even with a zero interval
            let anomalous = deviation.abs() > 3.0 * sigma && deviation.abs() > 1e-9 * ideal.abs();
            CoolingRow {
                n_d: p.n_d,
                cooperativity: p.cooperativity,
                n_m: p.n_m,
                n_m_ci95: p.n_m_ci95,
                n_m_ideal: ideal,
                deviation,
                anomalous,
            }
        })
        .collect()
}
