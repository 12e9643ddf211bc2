//! Two-stage fit of transparency spectra.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::{
    fit_curve, CavityModel, EitModel, ExclusionWindow, FitProblem, FitResult, LmOptions,
    Observations, ParamSpec, ResidualMode, TraceModel,
};
use crate::error::{Error, Result};
use crate::response::CavityPort;

/// Starting point of an EIT fit: cavity port (with background), mechanical guesses, and
/// the drive frequency, all in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EitGuess {
    pub port: CavityPort,
    pub omega_m: f64,
    pub gamma_i: f64,
    pub coupling: f64,
    pub omega_d: f64,
}

/// Treatment of ω_m jitter in the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JitterMode {
    Off,
    /// Blur with a known std (rad/s).
    Fixed(f64),
    /// Fit the std, starting from the given value (rad/s, must be positive).
    Free(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EitFitOptions {
    pub residual_mode: ResidualMode,
    pub jitter: JitterMode,
    /// Quadrature order of the jitter blur.
    pub jitter_order: usize,
    /// Half-width (rad/s) of the band around the expected feature that is searched for
    /// it and hidden from the cavity-only stage. `None` picks 20 expected linewidths, at
    /// least 2π·200 Hz.
    pub search_halfwidth: Option<f64>,
    pub lm: LmOptions,
}

impl Default for EitFitOptions {
    fn default() -> Self {
        EitFitOptions {
            residual_mode: ResidualMode::Complex,
            jitter: JitterMode::Off,
            jitter_order: 9,
            search_halfwidth: None,
            lm: LmOptions::default(),
        }
    }
}

fn cavity_specs(port: &CavityPort) -> Vec<ParamSpec> {
    vec![
        ParamSpec::bounded("kappa_i", port.kappa_i, 0.0, f64::INFINITY),
        ParamSpec::bounded("kappa_e", port.kappa_e, 0.0, f64::INFINITY),
        ParamSpec::free("omega_r", port.omega_r),
        ParamSpec::free("amplitude", port.background.amplitude),
        ParamSpec::free("phase", port.background.phase),
        ParamSpec::free("slope", port.background.slope),
    ]
}

struct Feature {
    center: f64,
    width: Option<f64>,
    /// deviation from the bare cavity divided by the background at the centre
    depth: Complex64,
}

/// Strongest deviation from the cavity fit inside the search band.
///
/// The deviation is averaged over a window of `width` so that a feature buried in
/// per-point noise still shows up. The averaged peak must stand 3.5 noise standard errors
/// clear (noise taken from the samples outside the band) and must not sit on the band
/// edge. A magnitude-only cavity fit leaves the background phase free, so the data are
/// first rotated onto the fitted model using the samples outside the band.
fn locate_feature(
    data: &Observations,
    cavity: &FitResult,
    band: ExclusionWindow,
    width: f64,
    exclusions: &[ExclusionWindow],
) -> Result<Feature> {
    let usable = |k: usize| !exclusions.iter().any(|w| w.contains(data.x[k]));
    let model = |k: usize| data.samples.get(k) - cavity.residual_trace[k];
    let outside: Vec<usize> = (0..data.len())
        .filter(|&k| usable(k) && !band.contains(data.x[k]))
        .collect();
    let overlap: Complex64 = outside
        .iter()
        .map(|&k| data.samples.get(k) * model(k).conj())
        .sum();
    let undo = if overlap.norm() > 0.0 {
        overlap.conj() / overlap.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let aligned: Vec<Complex64> = (0..data.len())
        .map(|k| data.samples.get(k) * undo - model(k))
        .collect();

    let inside: Vec<usize> = (0..data.len())
        .filter(|&k| usable(k) && band.contains(data.x[k]))
        .collect();
    if inside.len() < 5 {
        return Err(Error::FeatureNotFound(format!(
            "only {} samples inside the search band",
            inside.len()
        )));
    }
    // mean |z|² of circular complex noise is its median / ln 2
    let mut power: Vec<f64> = outside.iter().map(|&k| aligned[k].norm_sqr()).collect();
    power.sort_by(f64::total_cmp);
    let noise = if power.is_empty() {
        0.0
    } else {
        power[power.len() / 2] / core::f64::consts::LN_2
    };

    let xs: Vec<f64> = inside.iter().map(|&k| data.x[k]).collect();
    let (mut lo, mut hi) = (0, 0);
    let mut smoothed = Vec::with_capacity(inside.len());
    let mut score = Vec::with_capacity(inside.len());
    for (j, &x) in xs.iter().enumerate() {
        while xs[lo] < x - width / 2.0 {
            lo += 1;
        }
        while hi + 1 < xs.len() && xs[hi + 1] <= x + width / 2.0 {
            hi += 1;
        }
        let n = (hi - lo + 1) as f64;
        let mean = inside[lo..=hi]
            .iter()
            .map(|&k| aligned[k])
            .sum::<Complex64>()
            / n;
        smoothed.push(mean);
        score.push(if noise > 0.0 {
            mean.norm() * libm::sqrt(n / noise)
        } else {
            f64::INFINITY
        });
        debug_assert!(lo <= j && j <= hi);
    }
    let dev = |j: usize| smoothed[j].norm();
    let pos = (0..inside.len())
        .max_by(|&a, &b| {
            score[a]
                .total_cmp(&score[b])
                .then(dev(a).total_cmp(&dev(b)))
        })
        .expect("band is non-empty");
    let peak_k = inside[pos];
    let p = &cavity.estimates;
    let bg = Complex64::from_polar(p[3], p[4]) * (1.0 + p[5] * (data.x[peak_k] - p[2]));
    if !(score[pos] > 3.5) || !(dev(pos) > 1e-6 * bg.norm()) {
        return Err(Error::FeatureNotFound(format!(
            "strongest deviation {:.3e} is {:.1} noise standard errors, below the threshold of 3.5",
            dev(pos),
            score[pos]
        )));
    }
    if pos == 0 || pos == inside.len() - 1 {
        return Err(Error::FeatureNotFound(
            "deviation peaks at the edge of the search band".into(),
        ));
    }
    // half-power crossings of |ΔS|²
    let half = dev(pos) / core::f64::consts::SQRT_2;
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = pos;
        for j in range {
            if dev(j) < half {
                let (x0, x1, d0, d1) = (xs[prev], xs[j], dev(prev), dev(j));
                return Some(x0 + (half - d0) * (x1 - x0) / (d1 - d0));
            }
            prev = j;
        }
        None
    };
    let left = crossing(&mut (0..pos).rev());
    let right = crossing(&mut (pos + 1..inside.len()));
    let width = match (left, right) {
        (Some(a), Some(b)) if b > a => Some(b - a),
        _ => None,
    };
    Ok(Feature {
        center: data.x[peak_k],
        width,
        depth: smoothed[pos] / bg,
    })
}

/// Fit the EIT model to a complex reflection trace over absolute probe frequency.
///
/// Stage one fits the bare cavity with the transparency band and `exclusions` left out.
/// The feature is then located in the residual and seeds ω_m, γ_i and G. A fit of the
/// mechanical parameters alone is followed by a joint fit of everything.
///
/// Parameters in the result follow [`EitModel::NAMES`], plus `jitter_sigma` when jitter
/// is enabled.
pub fn fit_eit_trace(
    data: &Observations,
    guess: &EitGuess,
    exclusions: &[ExclusionWindow],
    options: &EitFitOptions,
) -> Result<FitResult> {
    guess.port.validate()?;
    if !(guess.gamma_i > 0.0) || !(guess.coupling >= 0.0) || !(guess.omega_m > 0.0) {
        return Err(Error::Setup("mechanical guesses must be positive".into()));
    }
    let kappa = guess.port.kappa();
    let expected_width = guess.gamma_i + 4.0 * guess.coupling * guess.coupling / kappa;
    let halfwidth = options
        .search_halfwidth
        .unwrap_or_else(|| (20.0 * expected_width).max(crate::physics::hz_to_rad(200.0)));
    let smoothing = expected_width;
    let expected_center = guess.omega_d + guess.omega_m;
    let band = ExclusionWindow {
        lo: expected_center - halfwidth,
        hi: expected_center + halfwidth,
    };

    let mut stage_one_windows = exclusions.to_vec();
    stage_one_windows.push(band);
    let cavity = fit_curve(&FitProblem {
        model: &CavityModel,
        data,
        params: cavity_specs(&guess.port),
        exclusions: stage_one_windows,
        residual_mode: options.residual_mode,
        options: options.lm,
    })?;
    if !cavity.converged() {
        return Err(Error::Setup(format!(
            "cavity-only stage did not converge ({:?})",
            cavity.termination
        )));
    }

    let feature = locate_feature(data, &cavity, band, smoothing, exclusions)?;
    let omega_m = feature.center - guess.omega_d;
    let (ki, ke, wr) = (
        cavity.estimates[0],
        cavity.estimates[1],
        cavity.estimates[2],
    );
    // S/bg = 1 − κ_e/(d + Σ) with d = κ/2 + iδ; the deviation r gives Σ at the centre
    let d0 = Complex64::new((ki + ke) / 2.0, feature.center - wr);
    let bare = 1.0 - ke / d0;
    let sigma = ke / ((1.0 - bare) - feature.depth) - d0;
    let (gamma_i, coupling) = match feature.width {
        Some(w) if sigma.re > 0.0 => {
            // Σ = 2G²/γ_i on resonance, and the feature is γ_i + 4G²/κ wide
            let gamma = w / (1.0 + 2.0 * sigma.re / (ki + ke));
            (gamma, libm::sqrt(sigma.re * gamma / 2.0))
        }
        _ => (guess.gamma_i, guess.coupling),
    };

    let jitter = match options.jitter {
        JitterMode::Off => None,
        JitterMode::Fixed(s) => Some(ParamSpec::fixed("jitter_sigma", s)),
        JitterMode::Free(s) => Some(ParamSpec::bounded("jitter_sigma", s, 0.0, f64::INFINITY)),
    };
    let model = match jitter {
        None => EitModel::new(guess.omega_d),
        Some(_) => EitModel::with_jitter(guess.omega_d, options.jitter_order),
    };
    debug_assert_eq!(model.parameter_names().len(), 9 + jitter.is_some() as usize);
    let mut params: Vec<ParamSpec> = cavity_specs(&guess.port);
    for (p, v) in params.iter_mut().zip(&cavity.estimates) {
        p.initial = *v;
    }
    params.insert(
        3,
        ParamSpec::bounded("gamma_i", gamma_i, 0.0, f64::INFINITY),
    );
    params.insert(4, ParamSpec::free("omega_m", omega_m));
    params.insert(
        5,
        ParamSpec::bounded("coupling", coupling, 0.0, f64::INFINITY),
    );
    if let Some(j) = jitter.clone() {
        params.push(j);
    }

    let mechanical_only: Vec<ParamSpec> = params
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if (3..6).contains(&k) {
                p.clone()
            } else {
                ParamSpec {
                    fixed: true,
                    ..p.clone()
                }
            }
        })
        .collect();
    let stage_two = fit_curve(&FitProblem {
        model: &model,
        data,
        params: mechanical_only,
        exclusions: exclusions.to_vec(),
        residual_mode: options.residual_mode,
        options: options.lm,
    })?;
    for (p, v) in params.iter_mut().zip(&stage_two.estimates) {
        p.initial = v.clamp(p.lower, p.upper);
    }
    fit_curve(&FitProblem {
        model: &model,
        data,
        params,
        exclusions: exclusions.to_vec(),
        residual_mode: options.residual_mode,
        options: options.lm,
    })
}
