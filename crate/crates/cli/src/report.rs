//! Fit reports: JSON with every rate converted to Hz.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use emech_core::inference::{FitResult, ResidualMode, Termination};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub name: String,
    pub estimate: f64,
    /// Half-width of the 95% interval; null when the data do not constrain the parameter.
    pub ci95: Option<f64>,
    pub free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveReport {
    pub drive_hz: f64,
    pub photons: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitReport {
    pub kind: String,
    pub trace: String,
    pub converged: bool,
    pub termination: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_mode: Option<String>,
    pub parameters: Vec<ParamReport>,
    /// Row-major over `parameters`, in the same units.
    pub covariance: Vec<Vec<f64>>,
    pub reduced_chi_square: Option<f64>,
    pub cost: Option<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub n_residuals: usize,
    /// Exclusion windows as given on the command line.
    pub exclusions_hz: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveReport>,
    pub derived: BTreeMap<String, Option<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Report name and factor taking an internal parameter to its reported unit.
pub fn reported_unit(name: &str) -> (String, f64) {
    match name {
        "kappa_i" | "kappa_e" | "omega_r" | "gamma_i" | "omega_m" | "coupling" | "jitter_sigma"
        | "rate" | "fast_rate" | "slow_rate" | "center" | "width" => {
            (format!("{name}_hz"), 1.0 / TWO_PI)
        }
        // per rad/s → per Hz
        "slope" => ("slope_per_hz".to_string(), TWO_PI),
        _ => (name.to_string(), 1.0),
    }
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::CostConverged => "cost_converged",
        Termination::GradientConverged => "gradient_converged",
        Termination::Stalled => "stalled",
        Termination::MaxIterations => "max_iterations",
        Termination::NotConverged => "not_converged",
    }
}

impl FitReport {
    pub fn from_fit(kind: &str, trace: &str, fit: &FitResult) -> Self {
        let n = fit.names.len();
        let factors: Vec<(String, f64)> = fit.names.iter().map(|s| reported_unit(s)).collect();
        let parameters = (0..n)
            .map(|k| ParamReport {
                name: factors[k].0.clone(),
                estimate: fit.estimates[k] * factors[k].1,
                ci95: finite(fit.ci95[k] * factors[k].1),
                free: fit.free[k],
            })
            .collect();
        let covariance = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| fit.covariance[i * n + j] * factors[i].1 * factors[j].1)
                    .collect()
            })
            .collect();
        FitReport {
            kind: kind.to_string(),
            trace: trace.to_string(),
            converged: fit.converged(),
            termination: termination_name(fit.termination).to_string(),
            error: None,
            residual_mode: Some(
                match fit.residual_mode {
                    ResidualMode::Complex => "complex",
                    ResidualMode::Magnitude => "magnitude",
                }
                .to_string(),
            ),
            parameters,
            covariance,
            reduced_chi_square: finite(fit.reduced_chi_square),
            cost: finite(fit.cost),
            iterations: fit.iterations,
            evaluations: fit.evaluations,
            n_residuals: fit.n_residuals,
            exclusions_hz: Vec::new(),
            drive: None,
            derived: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    /// Report of a fit that could not run or could not locate its feature.
    pub fn failed(kind: &str, trace: &str, error: &str) -> Self {
        FitReport {
            kind: kind.to_string(),
            trace: trace.to_string(),
            converged: false,
            termination: "failed".to_string(),
            error: Some(error.to_string()),
            ..Default::default()
        }
    }

    pub fn param(&self, name: &str) -> Option<&ParamReport> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn derive(&mut self, key: &str, value: f64) {
        self.derived.insert(key.to_string(), finite(value));
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: not a fit report: {e}", path.display())))
    }
}
