use alloc::vec::Vec;

use num_complex::Complex64;

use super::quadrature::gauss_hermite;

/// A parameterized curve with an analytic gradient.
///
/// Real-valued models return a zero imaginary part.
pub trait TraceModel {
    fn parameter_names(&self) -> Vec<&'static str>;

    fn value(&self, params: &[f64], x: f64) -> Complex64;

    /// ∂value/∂params at `x`, written into `grad` (one entry per parameter).
    fn gradient(&self, params: &[f64], x: f64, grad: &mut [Complex64]);
}

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Bare cavity reflection over absolute probe frequency.
///
/// Parameters: `kappa_i, kappa_e, omega_r, amplitude, phase, slope`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CavityModel;

impl CavityModel {
    pub const NAMES: [&'static str; 6] = [
        "kappa_i",
        "kappa_e",
        "omega_r",
        "amplitude",
        "phase",
        "slope",
    ];
}

impl TraceModel for CavityModel {
    fn parameter_names(&self) -> Vec<&'static str> {
        Self::NAMES.to_vec()
    }

    fn value(&self, p: &[f64], x: f64) -> Complex64 {
        let delta = x - p[2];
        let bg = Complex64::from_polar(p[3], p[4]) * (1.0 + p[5] * delta);
        let d = Complex64::new((p[0] + p[1]) / 2.0, delta);
        bg * (1.0 - p[1] / d)
    }

    fn gradient(&self, p: &[f64], x: f64, g: &mut [Complex64]) {
        let (ke, wr, a, th, b) = (p[1], p[2], p[3], p[4], p[5]);
        let delta = x - wr;
        let rot = Complex64::from_polar(1.0, th);
        let bg = a * rot * (1.0 + b * delta);
        let d = Complex64::new((p[0] + ke) / 2.0, delta);
        let r = 1.0 - ke / d;
        let dr_dd = ke / (d * d);
        g[0] = bg * dr_dd * 0.5;
        g[1] = bg * (dr_dd * 0.5 - 1.0 / d);
        g[2] = -a * rot * b * r + bg * dr_dd * (-I);
        g[3] = rot * (1.0 + b * delta) * r;
        g[4] = I * bg * r;
        g[5] = a * rot * delta * r;
    }
}

/// Transparency spectrum over absolute probe frequency for a drive at `omega_d`.
///
/// Parameters: `kappa_i, kappa_e, omega_r, gamma_i, omega_m, coupling, amplitude, phase,
/// slope` and, with jitter enabled, `jitter_sigma` (rad/s std of ω_m). Jitter averages the
/// spectrum over a Gaussian spread of ω_m with Gauss–Hermite quadrature.
#[derive(Debug, Clone)]
pub struct EitModel {
    pub omega_d: f64,
    jitter_nodes: Option<(Vec<f64>, Vec<f64>)>,
}

impl EitModel {
    pub const NAMES: [&'static str; 9] = [
        "kappa_i",
        "kappa_e",
        "omega_r",
        "gamma_i",
        "omega_m",
        "coupling",
        "amplitude",
        "phase",
        "slope",
    ];

    pub fn new(omega_d: f64) -> Self {
        EitModel {
            omega_d,
            jitter_nodes: None,
        }
    }

    /// Enable the jitter blur with an `order`-point quadrature.
    pub fn with_jitter(omega_d: f64, order: usize) -> Self {
        EitModel {
            omega_d,
            jitter_nodes: Some(gauss_hermite(order)),
        }
    }

    pub fn has_jitter(&self) -> bool {
        self.jitter_nodes.is_some()
    }

    /// Value and, if `grad` is given, the gradient for a fixed ω_m.
    fn point(&self, p: &[f64], x: f64, omega_m: f64, grad: Option<&mut [Complex64]>) -> Complex64 {
        let (ki, ke, wr, gamma, _, gc, a, th, b) =
            (p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8]);
        let delta = x - wr;
        let u = x - self.omega_d - omega_m;
        let e = Complex64::new(gamma, 2.0 * u);
        let rot = Complex64::from_polar(1.0, th);
        let bg = a * rot * (1.0 + b * delta);
        if e.re == 0.0 && e.im == 0.0 {
            if let Some(g) = grad {
                g.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            }
            return bg;
        }
        let sigma = 2.0 * gc * gc / e;
        let d = Complex64::new((ki + ke) / 2.0, delta) + sigma;
        let r = 1.0 - ke / d;
        if let Some(g) = grad {
            let dr_dd = ke / (d * d);
            let e2 = e * e;
            g[0] = bg * dr_dd * 0.5;
            g[1] = bg * (dr_dd * 0.5 - 1.0 / d);
            g[2] = -a * rot * b * r + bg * dr_dd * (-I);
            g[3] = bg * dr_dd * (-2.0 * gc * gc / e2);
            g[4] = bg * dr_dd * (4.0 * gc * gc * I / e2);
            g[5] = bg * dr_dd * (4.0 * gc / e);
            g[6] = rot * (1.0 + b * delta) * r;
            g[7] = I * bg * r;
            g[8] = a * rot * delta * r;
        }
        bg * r
    }
}

impl TraceModel for EitModel {
    fn parameter_names(&self) -> Vec<&'static str> {
        let mut v = Self::NAMES.to_vec();
        if self.has_jitter() {
            v.push("jitter_sigma");
        }
        v
    }

    fn value(&self, p: &[f64], x: f64) -> Complex64 {
        match &self.jitter_nodes {
            None => self.point(p, x, p[4], None),
            Some((nodes, weights)) => nodes
                .iter()
                .zip(weights)
                .map(|(t, w)| {
                    *w * self.point(p, x, p[4] + core::f64::consts::SQRT_2 * p[9] * t, None)
                })
                .sum(),
        }
    }

    fn gradient(&self, p: &[f64], x: f64, g: &mut [Complex64]) {
        match &self.jitter_nodes {
            None => {
                self.point(p, x, p[4], Some(g));
            }
            Some((nodes, weights)) => {
                g.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                let mut tmp = [Complex64::new(0.0, 0.0); 9];
                for (t, w) in nodes.iter().zip(weights) {
                    let shift = core::f64::consts::SQRT_2 * t;
                    self.point(p, x, p[4] + shift * p[9], Some(&mut tmp));
                    for k in 0..9 {
                        g[k] += *w * tmp[k];
                    }
                    g[9] += *w * shift * tmp[4];
                }
            }
        }
    }
}

/// Flat background plus a Lorentzian peak: `background + height·(w/2)²/((x − center)² + (w/2)²)`.
///
/// Parameters: `background, height, center, width`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LorentzianModel;

impl LorentzianModel {
    /// Area under the peak, ∫ dx, for parameters `p`.
    pub fn area(p: &[f64]) -> f64 {
        core::f64::consts::FRAC_PI_2 * p[1] * p[3]
    }
}

impl TraceModel for LorentzianModel {
    fn parameter_names(&self) -> Vec<&'static str> {
        ["background", "height", "center", "width"].to_vec()
    }

    fn value(&self, p: &[f64], x: f64) -> Complex64 {
        let h = p[3] / 2.0;
        let dx = x - p[2];
        Complex64::new(p[0] + p[1] * h * h / (dx * dx + h * h), 0.0)
    }

    fn gradient(&self, p: &[f64], x: f64, g: &mut [Complex64]) {
        let h = p[3] / 2.0;
        let dx = x - p[2];
        let den = dx * dx + h * h;
        let shape = h * h / den;
        g[0] = Complex64::new(1.0, 0.0);
        g[1] = Complex64::new(shape, 0.0);
        g[2] = Complex64::new(p[1] * h * h * 2.0 * dx / (den * den), 0.0);
        // ∂/∂w = ½ ∂/∂h, ∂shape/∂h = 2h dx²/den²
        g[3] = Complex64::new(p[1] * h * dx * dx / (den * den), 0.0);
    }
}

/// `amplitude·e^{−rate·t} + offset`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExponentialDecay;

impl TraceModel for ExponentialDecay {
    fn parameter_names(&self) -> Vec<&'static str> {
        ["amplitude", "rate", "offset"].to_vec()
    }

    fn value(&self, p: &[f64], t: f64) -> Complex64 {
        Complex64::new(p[0] * libm::exp(-p[1] * t) + p[2], 0.0)
    }

    fn gradient(&self, p: &[f64], t: f64, g: &mut [Complex64]) {
        let e = libm::exp(-p[1] * t);
        g[0] = Complex64::new(e, 0.0);
        g[1] = Complex64::new(-p[0] * t * e, 0.0);
        g[2] = Complex64::new(1.0, 0.0);
    }
}

/// `fast_amplitude·e^{−fast_rate·t} + slow_amplitude·e^{−slow_rate·t} + offset`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoExponential;

impl TraceModel for TwoExponential {
    fn parameter_names(&self) -> Vec<&'static str> {
        [
            "fast_amplitude",
            "fast_rate",
            "slow_amplitude",
            "slow_rate",
            "offset",
        ]
        .to_vec()
    }

    fn value(&self, p: &[f64], t: f64) -> Complex64 {
        Complex64::new(
            p[0] * libm::exp(-p[1] * t) + p[2] * libm::exp(-p[3] * t) + p[4],
            0.0,
        )
    }

    fn gradient(&self, p: &[f64], t: f64, g: &mut [Complex64]) {
        let ef = libm::exp(-p[1] * t);
        let es = libm::exp(-p[3] * t);
        g[0] = Complex64::new(ef, 0.0);
        g[1] = Complex64::new(-p[0] * t * ef, 0.0);
        g[2] = Complex64::new(es, 0.0);
        g[3] = Complex64::new(-p[2] * t * es, 0.0);
        g[4] = Complex64::new(1.0, 0.0);
    }
}
