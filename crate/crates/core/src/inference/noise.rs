//! Bath occupancies from output noise spectra.

use alloc::vec;
use alloc::vec::Vec;

use super::{
    fit_curve, FitProblem, FitResult, LmOptions, Observations, ParamSpec, ResidualMode, TraceModel,
    Z95,
};
use crate::error::Result;
use crate::langevin::{LinearizedSystem, NoiseBaths};
use crate::physics::bose_temperature;
use num_complex::Complex64;

/// The linearized output spectrum as a function of bath occupancies, over offsets from ω_r.
///
/// Parameters: `n_mech, n_bath, n_add` when the waveguide and cavity baths are tied, and
/// `n_mech, n_wg, n_cav, n_add` otherwise. The spectrum is linear in all of them.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    pub system: LinearizedSystem,
    pub tied: bool,
}

impl NoiseModel {
    pub fn baths(&self, p: &[f64]) -> NoiseBaths {
        if self.tied {
            NoiseBaths {
                n_mech: p[0],
                n_wg: p[1],
                n_cav: p[1],
                n_add: p[2],
            }
        } else {
            NoiseBaths {
                n_mech: p[0],
                n_wg: p[1],
                n_cav: p[2],
                n_add: p[3],
            }
        }
    }
}

impl TraceModel for NoiseModel {
    fn parameter_names(&self) -> Vec<&'static str> {
        if self.tied {
            ["n_mech", "n_bath", "n_add"].to_vec()
        } else {
            ["n_mech", "n_wg", "n_cav", "n_add"].to_vec()
        }
    }

    fn value(&self, p: &[f64], x: f64) -> Complex64 {
        // unvalidated on purpose: fits may wander through negative occupancies
        let w = self
            .system
            .noise_weights(x)
            .unwrap_or(crate::langevin::NoiseWeights {
                waveguide: f64::NAN,
                cavity: f64::NAN,
                mechanical: f64::NAN,
                vacuum: f64::NAN,
            });
        Complex64::new(w.level(&self.baths(p)), 0.0)
    }

    fn gradient(&self, _p: &[f64], x: f64, g: &mut [Complex64]) {
        let nan = f64::NAN;
        let (wg, cav, mech) = match self.system.noise_weights(x) {
            Ok(w) => (w.waveguide, w.cavity, w.mechanical),
            Err(_) => (nan, nan, nan),
        };
        let c = |v: f64| Complex64::new(v, 0.0);
        g[0] = c(mech);
        if self.tied {
            g[1] = c(wg + cav);
            g[2] = c(1.0);
        } else {
            g[1] = c(wg);
            g[2] = c(cav);
            g[3] = c(1.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFitOptions {
    /// Fit one occupancy for the waveguide and the cavity loss port.
    pub tied: bool,
    /// Amplifier added noise, held fixed.
    pub n_add: f64,
    /// Starting occupancies (mechanical, microwave).
    pub initial_mech: f64,
    pub initial_bath: f64,
    /// A fitted occupancy below −max(tolerance, its CI) marks the fit unphysical.
    pub negative_tolerance: f64,
    pub lm: LmOptions,
}

impl Default for NoiseFitOptions {
    fn default() -> Self {
        NoiseFitOptions {
            tied: true,
            n_add: 0.0,
            initial_mech: 100.0,
            initial_bath: 1.0,
            negative_tolerance: 1e-3,
            lm: LmOptions::default(),
        }
    }
}

/// Occupancies, their 95% half-widths and equivalent temperatures from a noise fit.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFitReport {
    /// Steady-state phonon number implied by the fitted baths.
    pub n_m: f64,
    pub n_m_ci95: f64,
    pub n_mech: f64,
    pub n_mech_ci95: f64,
    pub n_wg: f64,
    pub n_wg_ci95: f64,
    pub n_cav: f64,
    pub n_cav_ci95: f64,
    /// Bose temperatures (K) of the mechanical bath at ω_m and of the microwave baths at
    /// ω_r; `None` for non-positive occupancies.
    pub mech_temperature: Option<f64>,
    pub wg_temperature: Option<f64>,
    pub cav_temperature: Option<f64>,
    pub unphysical: bool,
    pub fit: FitResult,
}

/// Fit the bath occupancies of `system` to a real PSD (quanta) over offsets from ω_r.
///
/// `omega_r` sets the frequency at which the microwave baths are converted to
/// temperatures. n_m comes from the steady-state covariance of the linear system, which
/// is linear in the baths, so its interval follows exactly from the fit covariance.
pub fn fit_noise_spectrum(
    data: &Observations,
    system: &LinearizedSystem,
    omega_r: f64,
    options: &NoiseFitOptions,
) -> Result<NoiseFitReport> {
    system.validate()?;
    let model = NoiseModel {
        system: *system,
        tied: options.tied,
    };
    let mut params = vec![
        ParamSpec::free("n_mech", options.initial_mech),
        ParamSpec::free(
            if options.tied { "n_bath" } else { "n_wg" },
            options.initial_bath,
        ),
    ];
    if !options.tied {
        params.push(ParamSpec::free("n_cav", options.initial_bath));
    }
    params.push(ParamSpec::fixed("n_add", options.n_add));
    let fit = fit_curve(&FitProblem {
        model: &model,
        data,
        params,
        exclusions: Vec::new(),
        residual_mode: ResidualMode::Magnitude,
        options: options.lm,
    })?;

    // n_m = c₀ + c_mech n_mech + c_wg n_wg + c_cav n_cav
    let zero = NoiseBaths::default();
    let c0 = system.mechanical_occupancy(&zero)?;
    let unit = |b: NoiseBaths| system.mechanical_occupancy(&b).map(|v| v - c0);
    let c_mech = unit(NoiseBaths {
        n_mech: 1.0,
        ..zero
    })?;
    let c_wg = unit(NoiseBaths { n_wg: 1.0, ..zero })?;
    let c_cav = unit(NoiseBaths { n_cav: 1.0, ..zero })?;
    let coeffs: Vec<f64> = if options.tied {
        vec![c_mech, c_wg + c_cav, 0.0]
    } else {
        vec![c_mech, c_wg, c_cav, 0.0]
    };

    let p = &fit.estimates;
    let n_m = c0 + coeffs.iter().zip(p).map(|(c, v)| c * v).sum::<f64>();
    let np = p.len();
    let unconstrained = (0..np).any(|k| coeffs[k] != 0.0 && fit.ci95[k].is_infinite());
    let n_m_ci95 = if unconstrained {
        f64::INFINITY
    } else {
        let mut var = 0.0;
        for a in 0..np {
            for b in 0..np {
                var += coeffs[a] * fit.covariance[a * np + b] * coeffs[b];
            }
        }
        Z95 * libm::sqrt(var.max(0.0))
    };

    let baths = model.baths(p);
    let (wg_ci, cav_ci) = if options.tied {
        (fit.ci95[1], fit.ci95[1])
    } else {
        (fit.ci95[1], fit.ci95[2])
    };
    let temp = |omega: f64, n: f64| {
        if n > 0.0 {
            bose_temperature(omega, n).ok()
        } else {
            None
        }
    };
    let below = |n: f64, ci: f64| {
        n < -options
            .negative_tolerance
            .max(if ci.is_finite() { ci } else { 0.0 })
    };
    let unphysical =
        below(baths.n_mech, fit.ci95[0]) || below(baths.n_wg, wg_ci) || below(baths.n_cav, cav_ci);
    Ok(NoiseFitReport {
        n_m,
        n_m_ci95,
        n_mech: baths.n_mech,
        n_mech_ci95: fit.ci95[0],
        n_wg: baths.n_wg,
        n_wg_ci95: wg_ci,
        n_cav: baths.n_cav,
        n_cav_ci95: cav_ci,
        mech_temperature: temp(system.omega_m, baths.n_mech),
        wg_temperature: temp(omega_r, baths.n_wg),
        cav_temperature: temp(omega_r, baths.n_cav),
        unphysical,
        fit,
    })
}
