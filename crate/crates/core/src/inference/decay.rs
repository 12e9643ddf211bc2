//! Exponential fits for ring-down traces.
//!
//! Times are shifted so the first sample sits at t = 0; amplitudes refer to that instant.

use alloc::vec::Vec;

use super::{
    fit_curve, ExponentialDecay, FitProblem, FitResult, LmOptions, Observations, ParamSpec,
    ResidualMode, TwoExponential,
};
use crate::error::{Error, Result};

fn shifted(t: &[f64]) -> Result<Vec<f64>> {
    let t0 = *t
        .first()
        .ok_or_else(|| Error::Setup("trace is empty".into()))?;
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Setup("time grid must be strictly increasing".into()));
    }
    Ok(t.iter().map(|v| v - t0).collect())
}

/// Least-squares line through (x, y) with weights w; returns (slope, intercept).
fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx) * (a - mx)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| b * (a - mx) * (c - my))
        .sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Rate and amplitude of `y ≈ A e^{−rt}` from a log-linear fit over positive samples above
/// `floor`. Weights y² undo the noise stretching of the logarithm.
fn log_linear(t: &[f64], y: &[f64], floor: f64) -> Option<(f64, f64)> {
    let (mut xs, mut ls, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for (&ti, &yi) in t.iter().zip(y) {
        if yi > floor && yi > 0.0 {
            xs.push(ti);
            ls.push(libm::log(yi));
            ws.push(yi * yi);
        }
    }
    if xs.len() < 2 {
        return None;
    }
    let (slope, intercept) = weighted_line(&xs, &ls, &ws)?;
    Some((-slope, libm::exp(intercept)))
}

fn decay_guess(t: &[f64], y: &[f64]) -> [f64; 3] {
    let n = y.len();
    let tail = &y[n - (n / 10).max(1)..];
    let offset = tail.iter().sum::<f64>() / tail.len() as f64;
    let excess: Vec<f64> = y.iter().map(|v| v - offset).collect();
    let peak = excess.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let span = t[n - 1] - t[0];
    let sign = if excess[0] < 0.0 { -1.0 } else { 1.0 };
    let flipped: Vec<f64> = excess.iter().map(|v| sign * v).collect();
    match log_linear(t, &flipped, 0.05 * peak) {
        Some((rate, amp)) if rate > 0.0 && rate.is_finite() => [sign * amp, rate, offset],
        _ => [excess[0], 3.0 / span, offset],
    }
}

/// Fit `A e^{−r t} + c` to a real time trace.
///
/// Parameters in the result: `amplitude, rate, offset`. The rate is bounded at zero.
pub fn fit_exponential_decay(t: &[f64], y: &[f64]) -> Result<FitResult> {
    let ts = shifted(t)?;
    if ts.len() != y.len() {
        return Err(Error::Setup("time and sample counts differ".into()));
    }
    if ts.len() < 9 {
        return Err(Error::Setup("need at least nine samples".into()));
    }
    let g = decay_guess(&ts, y);
    let data = Observations::real(ts, y.to_vec());
    fit_curve(&FitProblem {
        model: &ExponentialDecay,
        data: &data,
        params: alloc::vec![
            ParamSpec::free("amplitude", g[0]),
            ParamSpec::bounded("rate", g[1], 0.0, f64::INFINITY),
            ParamSpec::free("offset", g[2]),
        ],
        exclusions: Vec::new(),
        residual_mode: ResidualMode::Magnitude,
        options: LmOptions::default(),
    })
}

/// Result of [`fit_two_exponential`] with the rates pulled out.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoExponentialFit {
    pub fast_rate: f64,
    pub slow_rate: f64,
    pub fit: FitResult,
}

/// Fit a fast plus a slow exponential and an offset to a real time trace whose two rates
/// are well separated.
///
/// The slow part is fitted first on the second half of the time span, the fast part is
/// seeded from the log of what remains early on, and a joint fit refines all five
/// parameters.
pub fn fit_two_exponential(t: &[f64], y: &[f64]) -> Result<TwoExponentialFit> {
    let ts = shifted(t)?;
    if ts.len() != y.len() {
        return Err(Error::Setup("time and sample counts differ".into()));
    }
    let half = ts[ts.len() - 1] / 2.0;
    let split = ts.iter().position(|&v| v >= half).unwrap_or(0);
    if split < 3 || ts.len() - split < 9 {
        return Err(Error::Setup(
            "too few samples on either side of the split".into(),
        ));
    }
    let tail = fit_exponential_decay(&ts[split..], &y[split..])?;
    // tail amplitude is referenced to ts[split]
    let slow_rate = tail.estimates[1];
    let slow_amp = tail.estimates[0] * libm::exp(slow_rate * ts[split]);
    let offset = tail.estimates[2];
    let rest: Vec<f64> = ts[..split]
        .iter()
        .zip(&y[..split])
        .map(|(&ti, &yi)| yi - slow_amp * libm::exp(-slow_rate * ti) - offset)
        .collect();
    let peak = rest.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sign = if rest[0] < 0.0 { -1.0 } else { 1.0 };
    let flipped: Vec<f64> = rest.iter().map(|v| sign * v).collect();
    let (fast_rate, fast_amp) = log_linear(&ts[..split], &flipped, 0.01 * peak)
        .filter(|(r, _)| *r > slow_rate)
        .ok_or_else(|| {
            Error::FeatureNotFound("no fast component ahead of the slow decay".into())
        })?;

    let data = Observations::real(ts, y.to_vec());
    let fit = fit_curve(&FitProblem {
        model: &TwoExponential,
        data: &data,
        params: alloc::vec![
            ParamSpec::free("fast_amplitude", sign * fast_amp),
            ParamSpec::bounded("fast_rate", fast_rate, 0.0, f64::INFINITY),
            ParamSpec::free("slow_amplitude", slow_amp),
            ParamSpec::bounded("slow_rate", slow_rate, 0.0, f64::INFINITY),
            ParamSpec::free("offset", offset),
        ],
        exclusions: Vec::new(),
        residual_mode: ResidualMode::Magnitude,
        options: LmOptions::default(),
    })?;
    Ok(TwoExponentialFit {
        fast_rate: fit.estimates[1],
        slow_rate: fit.estimates[3],
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_single_decay() {
        let t: Vec<f64> = (0..200).map(|k| 3.0 + k as f64 * 0.02).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|v| 800.0 * libm::exp(-4.5 * (v - 3.0)) + 12.0)
            .collect();
        let fit = fit_exponential_decay(&t, &y).unwrap();
        assert!(fit.converged());
        assert!((fit.estimates[1] - 4.5).abs() < 1e-8 * 4.5);
        assert!((fit.estimates[0] - 800.0).abs() < 1e-6);
        assert!((fit.estimates[2] - 12.0).abs() < 1e-6);
    }

    #[test]
    fn separated_rates() {
        // κ-like fast leak ahead of a slow mechanical decay
        let mut t: Vec<f64> = (0..60)
            .map(|k| 1e-9 * 10f64.powf(k as f64 / 10.0))
            .collect();
        t.insert(0, 0.0);
        t.extend((1..400).map(|k| k as f64 * 0.01));
        let y: Vec<f64> = t
            .iter()
            .map(|v| 5e4 * libm::exp(-2.8e7 * v) + 900.0 * libm::exp(-4.5 * v) + 2.0)
            .collect();
        let f = fit_two_exponential(&t, &y).unwrap();
        assert!(f.fit.converged());
        assert!((f.slow_rate - 4.5).abs() < 1e-6 * 4.5);
        assert!((f.fast_rate - 2.8e7).abs() < 1e-6 * 2.8e7);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(fit_exponential_decay(&[], &[]).is_err());
        assert!(fit_exponential_decay(&[0.0, 0.0, 1.0], &[1.0, 1.0, 1.0]).is_err());
    }
}
