//! Mechanical occupancy dynamics and microwave output noise.
//!
//! Two descriptions live here. The rate equations (adiabatically eliminated cavity) give
//! scattering rates, steady-state cooling and ring-down trajectories in closed form. The
//! linearized input-output solver keeps the full (a, a†, b, b†) response and yields the
//! normal-ordered reflected noise spectrum, where squashing of the mechanical feature
//! comes out of the waveguide-noise correlations on its own.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::linalg::solve_complex;
use crate::response::{backaction_damping, intracavity_photons, CavityPort, DriveTone};

/// Default occupancy above which a growing segment is reported as unstable.
pub const DEFAULT_OCCUPANCY_CAP: f64 = 1e12;

/// Bath occupancies seen by the device and the detection chain.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseBaths {
    /// input waveguide (external port)
    pub n_wg: f64,
    /// cavity internal-loss port
    pub n_cav: f64,
    /// mechanical bath (n_f,m)
    pub n_mech: f64,
    /// amplifier added noise referred to the device plane
    pub n_add: f64,
}

impl NoiseBaths {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_wg", self.n_wg),
            ("n_cav", self.n_cav),
            ("n_mech", self.n_mech),
            ("n_add", self.n_add),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(domain(name, "occupancy must be non-negative"));
            }
        }
        Ok(())
    }

    /// Occupancy of the intracavity field fed by both microwave ports.
    pub fn cavity_occupancy(&self, kappa_i: f64, kappa_e: f64) -> f64 {
        (kappa_e * self.n_wg + kappa_i * self.n_cav) / (kappa_i + kappa_e)
    }
}

/// Cavity port, mechanical mode and vacuum coupling rate (all rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Device {
    pub port: CavityPort,
    pub omega_m: f64,
    pub gamma_i: f64,
    pub g0: f64,
}

impl Device {
    pub fn validate(&self) -> Result<()> {
        self.port.validate()?;
        if !(self.omega_m > 0.0) {
            return Err(domain("omega_m", "must be positive"));
        }
        if !(self.gamma_i > 0.0) {
            return Err(domain("gamma_i", "must be positive"));
        }
        if !(self.g0 >= 0.0) {
            return Err(domain("g0", "must be non-negative"));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.port.kappa()
    }

    /// Sideband of a tone relative to this cavity.
    pub fn sideband(&self, tone: &DriveTone) -> Sideband {
        if self.port.omega_r - tone.omega_d >= 0.0 {
            Sideband::Red
        } else {
            Sideband::Blue
        }
    }

    /// γ_EM = 4 n g₀²/κ of a tone, using its calibrated photon number.
    pub fn tone_damping(&self, tone: &DriveTone) -> Result<f64> {
        let n = intracavity_photons(tone, &self.port)?;
        Ok(backaction_damping(n, self.g0, self.kappa()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sideband {
    Red,
    Blue,
}

/// Stokes suppression (κ/4ω_m)², the resolved-sideband cooling floor.
pub fn stokes_suppression(kappa: f64, omega_m: f64) -> f64 {
    let r = kappa / (4.0 * omega_m);
    r * r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringRates {
    pub anti_stokes: f64,
    pub stokes: f64,
}

/// Anti-Stokes and Stokes scattering rates (1/s) of a drive with `n_drive` photons.
///
/// On the red sideband the anti-Stokes process is cavity enhanced and the Stokes process is
/// suppressed by (κ/4ω_m)²; on the blue sideband the roles swap.
pub fn scattering_rates(
    n_drive: f64,
    g0: f64,
    kappa: f64,
    omega_m: f64,
    n_m: f64,
    sideband: Sideband,
) -> ScatteringRates {
    let gamma = backaction_damping(n_drive, g0, kappa);
    let floor = stokes_suppression(kappa, omega_m);
    match sideband {
        Sideband::Red => ScatteringRates {
            anti_stokes: gamma * n_m,
            stokes: gamma * floor * (n_m + 1.0),
        },
        Sideband::Blue => ScatteringRates {
            anti_stokes: gamma * floor * n_m,
            stokes: gamma * (n_m + 1.0),
        },
    }
}

/// Rates entering the steady-state occupancy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackactionRates {
    pub gamma_i: f64,
    pub gamma_em: f64,
    pub kappa_i: f64,
    pub kappa_e: f64,
    pub omega_m: f64,
}

impl BackactionRates {
    pub fn kappa(&self) -> f64 {
        self.kappa_i + self.kappa_e
    }
}

/// The ideal cooling law n_f,m/(1 + C).
pub fn ideal_cooling(n_thermal: f64, cooperativity: f64) -> f64 {
    n_thermal / (1.0 + cooperativity)
}

/// Steady-state phonon occupancy under a single drive.
///
/// Red: `(γ_i n_f,m + γ_EM (n_c + n_min(1 + 2n_c))) / (γ_i + γ_EM)` with n_min = (κ/4ω_m)²
/// and n_c the intracavity bath occupancy. Blue: `(γ_i n_f,m + γ_EM (n_c + 1)) / (γ_i − γ_EM)`,
/// which has no steady state once γ_EM ≥ γ_i.
pub fn cooling_steady_state(
    baths: &NoiseBaths,
    rates: &BackactionRates,
    sideband: Sideband,
) -> Result<f64> {
    if !(rates.gamma_i > 0.0) {
        return Err(domain("gamma_i", "must be positive"));
    }
    if !(rates.gamma_em >= 0.0) {
        return Err(domain("gamma_em", "must be non-negative"));
    }
    let n_c = baths.cavity_occupancy(rates.kappa_i, rates.kappa_e);
    let n_min = stokes_suppression(rates.kappa(), rates.omega_m);
    let (gi, ge) = (rates.gamma_i, rates.gamma_em);
    match sideband {
        Sideband::Red => {
            // n_f + γ_EM (n_ba − n_f)/(γ_i + γ_EM), exact at γ_EM = 0
            let n_ba = n_c + n_min * (1.0 + 2.0 * n_c);
            Ok(baths.n_mech + ge * (n_ba - baths.n_mech) / (gi + ge))
        }
        Sideband::Blue => {
            if ge >= gi {
                return Err(domain(
                    "gamma_em",
                    "blue drive exceeds intrinsic damping; no steady state",
                ));
            }
            Ok((gi * baths.n_mech + ge * (n_c + 1.0)) / (gi - ge))
        }
    }
}

/// One piece of a pulse schedule; `pump` is the extra tone active during it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub duration: f64,
    pub pump: Option<DriveTone>,
}

/// Piecewise-constant tone schedule with a probe held on throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    pub probe: Option<DriveTone>,
    pub segments: Vec<Segment>,
    pub initial_occupancy: f64,
    /// evenly spaced samples per segment
    pub samples_per_segment: usize,
    /// extra log-spaced samples resolving the cavity transient after each boundary
    pub transient_samples: usize,
    /// `None` disables the runaway check
    pub occupancy_cap: Option<f64>,
}

impl PulseSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(domain("segments", "schedule has no segments"));
        }
        if self
            .segments
            .iter()
            .any(|s| !(s.duration > 0.0 && s.duration.is_finite()))
        {
            return Err(domain("duration", "segment durations must be positive"));
        }
        if !(self.initial_occupancy >= 0.0) {
            return Err(domain("initial_occupancy", "must be non-negative"));
        }
        if self.samples_per_segment < 2 {
            return Err(domain("samples_per_segment", "need at least two samples"));
        }
        Ok(())
    }
}

/// Sampled mechanical occupancy and the scattered-photon rate near the cavity resonance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OccupancyTrajectory {
    pub time: Vec<f64>,
    pub occupancy: Vec<f64>,
    /// photons/s scattered to the cavity frequency by all tones
    pub scattered: Vec<f64>,
}

struct ToneState {
    gamma_em: f64,
    sideband: Sideband,
}

/// Integrate `dn/dt = −γ_eff (n − n_target)` segment by segment in closed form.
///
/// Each tone contributes ±γ_EM to γ_eff (+ red, − blue). The cavity is adiabatically
/// eliminated for the mechanics; its κ-rate ring-up/ring-down only shapes the scattered
/// channel, where a tone's photon number follows `(1 − e^{−κτ/2})²` after switch-on and
/// `e^{−κτ}` after switch-off.
pub fn ringdown_simulate(
    schedule: &PulseSchedule,
    device: &Device,
    baths: &NoiseBaths,
) -> Result<OccupancyTrajectory> {
    schedule.validate()?;
    device.validate()?;
    baths.validate()?;
    let kappa = device.kappa();
    let n_c = baths.cavity_occupancy(device.port.kappa_i, device.port.kappa_e);
    let n_min = stokes_suppression(kappa, device.omega_m);
    let tone_state = |tone: &DriveTone| -> Result<ToneState> {
        Ok(ToneState {
            gamma_em: device.tone_damping(tone)?,
            sideband: device.sideband(tone),
        })
    };
    let probe = schedule.probe.as_ref().map(&tone_state).transpose()?;
    let pumps = schedule
        .segments
        .iter()
        .map(|s| s.pump.as_ref().map(&tone_state).transpose())
        .collect::<Result<Vec<_>>>()?;

    let scatter = |t: &ToneState, n: f64, fill: f64| match t.sideband {
        Sideband::Red => fill * t.gamma_em * n,
        Sideband::Blue => fill * t.gamma_em * (n + 1.0),
    };

    let mut out = OccupancyTrajectory::default();
    let mut n0 = schedule.initial_occupancy;
    let mut t0 = 0.0;
    for (idx, seg) in schedule.segments.iter().enumerate() {
        let mut gamma_eff = device.gamma_i;
        let mut source = device.gamma_i * baths.n_mech;
        for t in probe.iter().chain(pumps[idx].iter()) {
            match t.sideband {
                Sideband::Red => {
                    gamma_eff += t.gamma_em;
                    source += t.gamma_em * (n_c + n_min * (1.0 + 2.0 * n_c));
                }
                Sideband::Blue => {
                    gamma_eff -= t.gamma_em;
                    source += t.gamma_em * (n_c + 1.0);
                }
            }
        }
        let occupancy_at = |tau: f64| -> f64 {
            if gamma_eff == 0.0 {
                n0 + source * tau
            } else {
                let target = source / gamma_eff;
                target + (n0 - target) * libm::exp(-gamma_eff * tau)
            }
        };
        let n_end = occupancy_at(seg.duration);
        if let Some(cap) = schedule.occupancy_cap {
            if !(n_end <= cap) {
                return Err(Error::Instability {
                    segment: idx,
                    occupancy: n_end,
                    cap,
                });
            }
        }

        let prev = if idx > 0 {
            pumps[idx - 1].as_ref()
        } else {
            None
        };
        let cur = pumps[idx].as_ref();
        for tau in segment_samples(seg.duration, kappa, schedule) {
            if idx > 0 && tau == 0.0 {
                // the previous segment already emitted this instant
                continue;
            }
            let n = occupancy_at(tau);
            let mut rate = probe.as_ref().map_or(0.0, |p| scatter(p, n, 1.0));
            if let Some(p) = cur {
                let rise = 1.0 - libm::exp(-kappa * tau / 2.0);
                rate += scatter(p, n, rise * rise);
            }
            if let Some(p) = prev {
                rate += scatter(p, n, libm::exp(-kappa * tau));
            }
            out.time.push(t0 + tau);
            out.occupancy.push(n.max(0.0));
            out.scattered.push(rate);
        }
        n0 = n_end;
        t0 += seg.duration;
    }
    Ok(out)
}

fn segment_samples(duration: f64, kappa: f64, schedule: &PulseSchedule) -> Vec<f64> {
    let n = schedule.samples_per_segment;
    let mut taus: Vec<f64> = (0..n)
        .map(|k| duration * k as f64 / (n - 1) as f64)
        .collect();
    let m = schedule.transient_samples;
    if m > 0 {
        let lo = 1e-2 / kappa;
        let hi = (30.0 / kappa).min(duration);
        if hi > lo {
            let (llo, lhi) = (libm::log(lo), libm::log(hi));
            let denom = (m.max(2) - 1) as f64;
            taus.extend((0..m).map(|k| libm::exp(llo + (lhi - llo) * k as f64 / denom)));
        }
    }
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus
}

/// The linearized (cavity, mechanics) system in the frame of a single drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedSystem {
    pub kappa_i: f64,
    pub kappa_e: f64,
    /// Δ = ω_r − ω_d
    pub detuning: f64,
    pub omega_m: f64,
    pub gamma_i: f64,
    /// G = √n_d g₀
    pub coupling: f64,
}

impl LinearizedSystem {
    pub fn from_drive(device: &Device, drive: &DriveTone) -> Result<Self> {
        device.validate()?;
        let n_d = intracavity_photons(drive, &device.port)?;
        Ok(LinearizedSystem {
            kappa_i: device.port.kappa_i,
            kappa_e: device.port.kappa_e,
            detuning: device.port.omega_r - drive.omega_d,
            omega_m: device.omega_m,
            gamma_i: device.gamma_i,
            coupling: libm::sqrt(n_d) * device.g0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_i > 0.0) || !(self.kappa_e >= 0.0) {
            return Err(domain("kappa", "loss rates must be positive"));
        }
        if !(self.gamma_i > 0.0) {
            return Err(domain("gamma_i", "must be positive"));
        }
        if !(self.omega_m > 0.0) {
            return Err(domain("omega_m", "must be positive"));
        }
        if !(self.coupling >= 0.0) {
            return Err(domain("coupling", "must be non-negative"));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.kappa_i + self.kappa_e
    }

    /// Back-action damping at this detuning, G²κ/((κ/2)² + (Δ − ω_m)²).
    pub fn backaction_damping(&self) -> f64 {
        let k = self.kappa();
        let d = self.detuning - self.omega_m;
        self.coupling * self.coupling * k / (k * k / 4.0 + d * d)
    }

    /// Drift matrix of (a, a†, b, b†), row-major.
    fn drift(&self) -> [Complex64; 16] {
        let c = Complex64::new;
        let k2 = self.kappa() / 2.0;
        let g2 = self.gamma_i / 2.0;
        let ig = c(0.0, self.coupling);
        let z = c(0.0, 0.0);
        [
            c(-k2, -self.detuning),
            z,
            -ig,
            -ig,
            z,
            c(-k2, self.detuning),
            ig,
            ig,
            -ig,
            -ig,
            c(-g2, -self.omega_m),
            z,
            ig,
            ig,
            z,
            c(-g2, self.omega_m),
        ]
    }

    /// Per-bath weights of the output spectrum at probe offset `delta` from ω_r.
    pub fn noise_weights(&self, delta: f64) -> Result<NoiseWeights> {
        let omega = delta + self.detuning;
        let m = self.drift();
        // transpose of (−iω − M); its solution against e₀ is the cavity row of the inverse
        let mut at = [Complex64::new(0.0, 0.0); 16];
        for i in 0..4 {
            for j in 0..4 {
                let diag = if i == j {
                    Complex64::new(0.0, -omega)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                at[j * 4 + i] = diag - m[i * 4 + j];
            }
        }
        let mut row = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        solve_complex(&mut at, &mut row, 4, 1)?;
        let (se, si, sg) = (
            libm::sqrt(self.kappa_e),
            libm::sqrt(self.kappa_i),
            libm::sqrt(self.gamma_i),
        );
        // output = a_e − √κ_e a ; inputs (a_e, a_e†, a_i, a_i†, b, b†)
        let c_ae = 1.0 - se * row[0] * se;
        let c_ae_dag = -se * row[1] * se;
        let c_ai = -se * row[0] * si;
        let c_ai_dag = -se * row[1] * si;
        let c_b = -se * row[2] * sg;
        let c_b_dag = -se * row[3] * sg;
        Ok(NoiseWeights {
            waveguide: c_ae.norm_sqr() + c_ae_dag.norm_sqr(),
            cavity: c_ai.norm_sqr() + c_ai_dag.norm_sqr(),
            mechanical: c_b.norm_sqr() + c_b_dag.norm_sqr(),
            vacuum: c_ae_dag.norm_sqr() + c_ai_dag.norm_sqr() + c_b_dag.norm_sqr(),
        })
    }

    /// Detected spectrum in quanta: normal-ordered reflected flux plus n_add + 1.
    pub fn spectrum(&self, baths: &NoiseBaths, delta_grid: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        baths.validate()?;
        delta_grid
            .iter()
            .map(|&d| self.noise_weights(d).map(|w| w.level(baths)))
            .collect()
    }

    /// Steady-state ⟨b†b⟩ from the Lyapunov equation M V + V M† + Q = 0.
    ///
    /// Assumes the linear system is stable.
    pub fn mechanical_occupancy(&self, baths: &NoiseBaths) -> Result<f64> {
        self.validate()?;
        baths.validate()?;
        let m = self.drift();
        let (ki, ke, g) = (self.kappa_i, self.kappa_e, self.gamma_i);
        let q = [
            ke * (baths.n_wg + 1.0) + ki * (baths.n_cav + 1.0),
            ke * baths.n_wg + ki * baths.n_cav,
            g * (baths.n_mech + 1.0),
            g * baths.n_mech,
        ];
        let mut a = vec![Complex64::new(0.0, 0.0); 256];
        let mut rhs = vec![Complex64::new(0.0, 0.0); 16];
        for i in 0..4 {
            for j in 0..4 {
                let row = i * 4 + j;
                for k in 0..4 {
                    a[row * 16 + k * 4 + j] += m[i * 4 + k];
                    a[row * 16 + i * 4 + k] += m[j * 4 + k].conj();
                }
                if i == j {
                    rhs[row] = Complex64::new(-q[i], 0.0);
                }
            }
        }
        solve_complex(&mut a, &mut rhs, 16, 1)?;
        Ok(rhs[3 * 4 + 3].re)
    }
}

/// Decomposition of the output spectrum: level = n_add + 1 + vacuum + Σ n_k·w_k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseWeights {
    pub waveguide: f64,
    pub cavity: f64,
    pub mechanical: f64,
    pub vacuum: f64,
}

impl NoiseWeights {
    pub fn level(&self, baths: &NoiseBaths) -> f64 {
        baths.n_add
            + 1.0
            + self.vacuum
            + baths.n_wg * self.waveguide
            + baths.n_cav * self.cavity
            + baths.n_mech * self.mechanical
    }
}

/// Output noise of `device` under `drive` on a grid of offsets from ω_r (rad/s).
pub fn noise_spectrum(
    device: &Device,
    baths: &NoiseBaths,
    drive: &DriveTone,
    delta_grid: &[f64],
) -> Result<Vec<f64>> {
    LinearizedSystem::from_drive(device, drive)?.spectrum(baths, delta_grid)
}

/// Trapezoid integral of `psd − baseline` over the grid, per unit cyclic frequency:
/// `∫ (S(ω) − S₀(ω)) dω/2π`, a photon flux in 1/s.
pub fn feature_area(delta_grid: &[f64], psd: &[f64], baseline: &[f64]) -> f64 {
    let excess = |k: usize| psd[k] - baseline[k];
    let sum: f64 = (1..delta_grid.len())
        .map(|k| 0.5 * (excess(k) + excess(k - 1)) * (delta_grid[k] - delta_grid[k - 1]))
        .sum();
    sum / (2.0 * core::f64::consts::PI)
}

/// Phonon occupancy implied by the area of the anti-Stokes feature: the feature carries
/// a flux (κ_e/κ)·γ_EM·n_m.
pub fn occupancy_from_area(area: f64, system: &LinearizedSystem) -> f64 {
    area / (system.kappa_e / system.kappa() * system.backaction_damping())
}

/// Offsets `center + (width/2)·tan θ` for θ evenly spaced in ±`coverage`·π/2. Points
/// crowd the line centre while the tails reach far out; a Lorentzian of FWHM `width`
/// keeps a fraction `coverage` of its area inside the grid.
pub fn lorentzian_grid(center: f64, width: f64, points: usize, coverage: f64) -> Vec<f64> {
    let half = coverage * core::f64::consts::FRAC_PI_2;
    (0..points)
        .map(|k| {
            let theta = -half + 2.0 * half * k as f64 / (points - 1) as f64;
            center + 0.5 * width * libm::tan(theta)
        })
        .collect()
}
