//! Nonlinear least squares and the adapters that turn traces into device parameters.
//!
//! [`fit_curve`] is a bounded Levenberg–Marquardt solver over any [`TraceModel`]. The
//! adapters build on it: [`fit_eit_trace`] (two-stage transparency fit),
//! [`fit_noise_spectrum`] (bath occupancies from the linearized noise model),
//! [`extract_g0`] and [`cooling_curve_analysis`] (sweep-level quantities), and the
//! exponential fits used on ring-down traces.

use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::physics::hz_to_rad;

mod decay;
mod eit;
mod lm;
mod models;
mod noise;
mod quadrature;
mod sweep;

pub use decay::{fit_exponential_decay, fit_two_exponential, TwoExponentialFit};
pub use eit::{fit_eit_trace, EitFitOptions, EitGuess, JitterMode};
pub use lm::{check_jacobian, fit_curve};
pub use models::{
    CavityModel, EitModel, ExponentialDecay, LorentzianModel, TraceModel, TwoExponential,
};
pub use noise::{fit_noise_spectrum, NoiseFitOptions, NoiseFitReport, NoiseModel};
pub use quadrature::gauss_hermite;
pub use sweep::{
    cooling_curve_analysis, extract_g0, CoolingPoint, CoolingRow, G0Estimate, SweepPoint,
};

/// Two-sided 95% quantile of the standard normal.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Measured samples on a strictly increasing grid (rad/s for spectra, s for time series).
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub x: Vec<f64>,
    pub samples: Samples,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Complex(Vec<Complex64>),
    Real(Vec<f64>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Complex(v) => v.len(),
            Samples::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, k: usize) -> Complex64 {
        match self {
            Samples::Complex(v) => v[k],
            Samples::Real(v) => Complex64::new(v[k], 0.0),
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, Samples::Complex(_))
    }
}

impl Observations {
    pub fn complex(x: Vec<f64>, y: Vec<Complex64>) -> Self {
        Observations {
            x,
            samples: Samples::Complex(y),
        }
    }

    pub fn real(x: Vec<f64>, y: Vec<f64>) -> Self {
        Observations {
            x,
            samples: Samples::Real(y),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// A band of the grid left out of a fit, stored in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExclusionWindow {
    pub lo: f64,
    pub hi: f64,
}

impl ExclusionWindow {
    pub fn from_hz(lo_hz: f64, hi_hz: f64) -> Self {
        ExclusionWindow {
            lo: hz_to_rad(lo_hz),
            hi: hz_to_rad(hi_hz),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn shifted(&self, by: f64) -> Self {
        ExclusionWindow {
            lo: self.lo + by,
            hi: self.hi + by,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualMode {
    /// Real and imaginary parts stacked; needs complex samples.
    Complex,
    /// |y| − |model| for complex samples, y − model for real samples.
    Magnitude,
}

/// One model parameter as seen by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub initial: f64,
    pub lower: f64,
    pub upper: f64,
    pub fixed: bool,
}

impl ParamSpec {
    pub fn free(name: &str, initial: f64) -> Self {
        ParamSpec {
            name: name.into(),
            initial,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            fixed: false,
        }
    }

    pub fn bounded(name: &str, initial: f64, lower: f64, upper: f64) -> Self {
        ParamSpec {
            name: name.into(),
            initial,
            lower,
            upper,
            fixed: false,
        }
    }

    pub fn fixed(name: &str, value: f64) -> Self {
        ParamSpec {
            fixed: true,
            ..ParamSpec::free(name, value)
        }
    }
}

/// Solver settings. The defaults are the documented ones: λ₀ = 1e-3 (×10 on rejection,
/// ÷10 on acceptance), stop on relative cost change < 1e-10 or scaled gradient < 1e-12,
/// at most 200 iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub cost_tolerance: f64,
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// λ past this value means damping can no longer rescue the step.
    pub max_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            initial_lambda: 1e-3,
            lambda_up: 10.0,
            lambda_down: 10.0,
            cost_tolerance: 1e-10,
            gradient_tolerance: 1e-12,
            max_iterations: 200,
            max_lambda: 1e16,
        }
    }
}

/// Everything [`fit_curve`] needs.
pub struct FitProblem<'a> {
    pub model: &'a dyn TraceModel,
    pub data: &'a Observations,
    pub params: Vec<ParamSpec>,
    pub exclusions: Vec<ExclusionWindow>,
    pub residual_mode: ResidualMode,
    pub options: LmOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative cost decrease fell below tolerance.
    CostConverged,
    /// Scaled gradient fell below tolerance (includes an exact zero residual).
    GradientConverged,
    /// No damped step lowers the cost further, and the gradient is already negligible.
    Stalled,
    /// Iteration budget exhausted.
    MaxIterations,
    /// The normal equations stayed singular or uphill at maximum damping.
    NotConverged,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(
            self,
            Termination::CostConverged | Termination::GradientConverged | Termination::Stalled
        )
    }
}

/// Estimates, uncertainties and diagnostics of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub free: Vec<bool>,
    /// Row-major over all parameters; rows and columns of fixed parameters are zero.
    pub covariance: Vec<f64>,
    /// Half-width of the 95% interval, 1.96·σ. Infinite for parameters the data do not
    /// constrain at all.
    pub ci95: Vec<f64>,
    pub reduced_chi_square: f64,
    /// Σ r² at the estimate.
    pub cost: f64,
    /// Σ r² after each accepted iteration, starting with the initial point.
    pub cost_history: Vec<f64>,
    /// data − model at every grid point, excluded points included.
    pub residual_trace: Vec<Complex64>,
    pub included: Vec<bool>,
    pub n_residuals: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub exclusions: Vec<ExclusionWindow>,
    pub residual_mode: ResidualMode,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.index(name).map(|k| self.estimates[k])
    }

    pub fn ci(&self, name: &str) -> Option<f64> {
        self.index(name).map(|k| self.ci95[k])
    }

    /// Whether `value` lies inside the 95% interval of parameter `name`.
    pub fn covers(&self, name: &str, value: f64) -> bool {
        self.index(name)
            .map(|k| (self.estimates[k] - value).abs() <= self.ci95[k])
            .unwrap_or(false)
    }

    pub fn dof(&self) -> usize {
        let nfree = self.free.iter().filter(|f| **f).count();
        self.n_residuals.saturating_sub(nfree)
    }
}
