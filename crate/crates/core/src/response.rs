//! Frequency-domain reflection models.
//!
//! Detunings `delta` are probe offsets from the cavity resonance, ω_p − ω_r, in rad/s.

use num_complex::Complex64;

use crate::error::{domain, Result};
use crate::physics::{apply_attenuation, dbm_to_watts, HBAR};

/// Slowly varying complex baseline `a₀·e^{iθ}·(1 + b·δ)` multiplying the cavity response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Background {
    pub amplitude: f64,
    pub phase: f64,
    /// per rad/s
    pub slope: f64,
}

impl Background {
    pub const IDEAL: Background = Background {
        amplitude: 1.0,
        phase: 0.0,
        slope: 0.0,
    };

    pub fn factor(&self, delta: f64) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase) * (1.0 + self.slope * delta)
    }
}

impl Default for Background {
    fn default() -> Self {
        Background::IDEAL
    }
}

/// A single-port cavity seen in reflection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityPort {
    pub omega_r: f64,
    pub kappa_i: f64,
    pub kappa_e: f64,
    pub background: Background,
}

impl CavityPort {
    pub fn new(omega_r: f64, kappa_i: f64, kappa_e: f64) -> Result<Self> {
        let p = CavityPort {
            omega_r,
            kappa_i,
            kappa_e,
            background: Background::IDEAL,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_r > 0.0) {
            return Err(domain("omega_r", "must be positive"));
        }
        if !(self.kappa_i > 0.0) {
            return Err(domain("kappa_i", "must be positive"));
        }
        if !(self.kappa_e >= 0.0) {
            return Err(domain("kappa_e", "must be non-negative"));
        }
        if !(self.background.amplitude > 0.0) {
            return Err(domain("background.amplitude", "must be positive"));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        self.kappa_i + self.kappa_e
    }

    pub fn is_overcoupled(&self) -> bool {
        self.kappa_e > self.kappa_i
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToneRole {
    Pump,
    Probe,
    Pulse,
}

/// A microwave tone as set at the generator, before the input line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveTone {
    pub generator_power_dbm: f64,
    /// dB, ≤ 0
    pub attenuation_db: f64,
    pub omega_d: f64,
    pub role: ToneRole,
}

/// One mechanical branch of the transparency self-energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EitMode {
    pub omega_m: f64,
    pub gamma_i: f64,
    /// Drive-enhanced coupling G = √n_d·g₀.
    pub coupling: f64,
}

/// Parameters of the two-tone transparency spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EitParams {
    pub port: CavityPort,
    pub mode: EitMode,
    /// Optional weakly coupled spurious mode, added to the self-energy.
    pub spurious: Option<EitMode>,
    /// Drive detuning ω_r − ω_d.
    pub delta_rd: f64,
}

impl EitParams {
    pub fn validate(&self) -> Result<()> {
        self.port.validate()?;
        for m in core::iter::once(&self.mode).chain(self.spurious.iter()) {
            if !(m.coupling >= 0.0) {
                return Err(domain("coupling", "G must be non-negative"));
            }
            if !(m.gamma_i >= 0.0) {
                return Err(domain("gamma_i", "must be non-negative"));
            }
        }
        Ok(())
    }

    /// ω_m/κ. The transparency formula assumes this is well above one.
    pub fn sideband_ratio(&self) -> f64 {
        self.mode.omega_m / self.port.kappa()
    }

    pub fn is_sideband_resolved(&self) -> bool {
        self.sideband_ratio() > 1.0
    }
}

/// `2G² / (γ + 2i(δ − (ω_m − Δ)))` for one branch. A lossless branch exactly on resonance
/// has an infinite self-energy; `None` is returned in that case.
pub(crate) fn self_energy(mode: &EitMode, delta_rd: f64, delta: f64) -> Option<Complex64> {
    let den = Complex64::new(mode.gamma_i, 2.0 * (delta - (mode.omega_m - delta_rd)));
    if den.re == 0.0 && den.im == 0.0 {
        if mode.coupling == 0.0 {
            return Some(Complex64::new(0.0, 0.0));
        }
        return None;
    }
    Some(2.0 * mode.coupling * mode.coupling / den)
}

/// Reflection with the mechanically induced transparency window:
/// `S₁₁(δ) = 1 − κ_e / (κ/2 + iδ + Σ_k 2G_k²/(γ_k + 2i(δ − (ω_{m,k} − Δ))))`,
/// multiplied by the port background.
pub fn eit_reflection(params: &EitParams, delta: f64) -> Complex64 {
    let port = &params.port;
    let bg = port.background.factor(delta);
    let mut den = Complex64::new(port.kappa() / 2.0, delta);
    for m in core::iter::once(&params.mode).chain(params.spurious.iter()) {
        match self_energy(m, params.delta_rd, delta) {
            Some(s) => den += s,
            None => return bg,
        }
    }
    bg * (1.0 - port.kappa_e / den)
}

/// Bare cavity: `a₀e^{iθ}(1 + bδ)·(1 − κ_e/(κ/2 + iδ))`.
pub fn cavity_reflection(port: &CavityPort, delta: f64) -> Complex64 {
    let den = Complex64::new(port.kappa() / 2.0, delta);
    port.background.factor(delta) * (1.0 - port.kappa_e / den)
}

/// Power reaching the device after the input line, W.
pub fn device_plane_power(tone: &DriveTone) -> Result<f64> {
    apply_attenuation(dbm_to_watts(tone.generator_power_dbm), tone.attenuation_db)
}

/// Intracavity photon number `P κ_e / (ħω_d ((ω_r − ω_d)² + (κ/2)²))` for a tone.
pub fn intracavity_photons(tone: &DriveTone, port: &CavityPort) -> Result<f64> {
    if !(tone.omega_d > 0.0) {
        return Err(domain("omega_d", "must be positive"));
    }
    let p = device_plane_power(tone)?;
    let detuning = port.omega_r - tone.omega_d;
    let k2 = port.kappa() / 2.0;
    Ok(p * port.kappa_e / (HBAR * tone.omega_d * (detuning * detuning + k2 * k2)))
}

/// Back-action damping γ_EM = 4·n·g₀²/κ.
pub fn backaction_damping(n_photons: f64, g0: f64, kappa: f64) -> f64 {
    4.0 * n_photons * g0 * g0 / kappa
}

/// C = γ_EM/γ_i.
pub fn cooperativity(gamma_em: f64, gamma_i: f64) -> Result<f64> {
    if !(gamma_i > 0.0) {
        return Err(domain("gamma_i", "must be positive"));
    }
    Ok(gamma_em / gamma_i)
}

/// Full width of the transparency window in the weak-coupling resolved-sideband limit,
/// γ_i + 4G²/κ.
pub fn transparency_linewidth(gamma_i: f64, coupling: f64, kappa: f64) -> f64 {
    gamma_i + 4.0 * coupling * coupling / kappa
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::hz_to_rad;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn port() -> CavityPort {
        CavityPort::new(hz_to_rad(8.872e9), hz_to_rad(1.8e6), hz_to_rad(2.7e6)).unwrap()
    }

    fn eit(g_hz: f64, gamma_hz: f64) -> EitParams {
        EitParams {
            port: port(),
            mode: EitMode {
                omega_m: hz_to_rad(9.685e6),
                gamma_i: hz_to_rad(gamma_hz),
                coupling: hz_to_rad(g_hz),
            },
            spurious: None,
            delta_rd: hz_to_rad(9.685e6),
        }
    }

    #[test]
    fn on_resonance_reflection() {
        let p = eit(0.0, 25.0);
        let s = eit_reflection(&p, 0.0);
        assert!((s - Complex64::new(-0.2, 0.0)).norm() < 1e-14);
        assert!((cavity_reflection(&p.port, 0.0) - Complex64::new(-0.2, 0.0)).norm() < 1e-14);
        assert!(p.port.is_overcoupled());
        assert!(p.is_sideband_resolved());
    }

    #[test]
    fn far_off_resonance_is_unity() {
        let p = eit(500.0, 25.0);
        let s = eit_reflection(&p, 1e15);
        assert!((s - 1.0).norm() < 1e-7);
        assert!((cavity_reflection(&p.port, -1e15) - 1.0).norm() < 1e-7);
    }

    #[test]
    fn center_reflection_follows_cooperativity() {
        let mut last = f64::NEG_INFINITY;
        for g_hz in [0.0, 100.0, 300.0, 1000.0, 3000.0] {
            let p = eit(g_hz, 25.0);
            let kappa = p.port.kappa();
            let c = 4.0 * p.mode.coupling.powi(2) / (kappa * p.mode.gamma_i);
            let s = eit_reflection(&p, 0.0);
            let expected = 1.0 - p.port.kappa_e / (kappa / 2.0 * (1.0 + c));
            assert!((s.re - expected).abs() < 1e-12 && s.im.abs() < 1e-12);
            assert!(s.re > last);
            last = s.re;
        }
        assert!(last > 0.0, "large C turns the dip into a peak");
    }

    #[test]
    fn background_model() {
        let mut p = port();
        p.background = Background {
            amplitude: 0.98,
            phase: 0.2,
            slope: 1e-9,
        };
        let d = 3e6;
        let ideal = CavityPort {
            background: Background::IDEAL,
            ..p
        };
        let ratio = cavity_reflection(&p, d) / cavity_reflection(&ideal, d);
        let expected = Complex64::from_polar(0.98, 0.2) * (1.0 + 1e-9 * d);
        assert!((ratio - expected).norm() < 1e-14);
    }

    #[test]
    fn photon_calibration_anchors() {
        let port = CavityPort::new(hz_to_rad(8.872e9), hz_to_rad(1.8e6), hz_to_rad(2.7e6)).unwrap();
        let wd = port.omega_r - hz_to_rad(9.685e6);
        let pump = DriveTone {
            generator_power_dbm: 22.0,
            attenuation_db: -73.9,
            omega_d: wd,
            role: ToneRole::Pump,
        };
        let n = intracavity_photons(&pump, &port).unwrap();
        assert!(((n - 4.75e6) / 4.75e6).abs() < 0.03, "{n}");
        let probe = DriveTone {
            generator_power_dbm: -20.0,
            ..pump
        };
        let np = intracavity_photons(&probe, &port).unwrap();
        assert!((np - 300.0).abs() / 300.0 < 0.05, "{np}");
        let off = DriveTone {
            generator_power_dbm: f64::NEG_INFINITY,
            ..pump
        };
        assert_eq!(intracavity_photons(&off, &port).unwrap(), 0.0);
        let gain = DriveTone {
            attenuation_db: 10.0,
            ..pump
        };
        assert!(intracavity_photons(&gain, &port).is_err());
    }

    #[test]
    fn backaction_and_cooperativity() {
        let k = hz_to_rad(4.5e6);
        let g = backaction_damping(300.0, hz_to_rad(24.6), k);
        assert!((g / hz_to_rad(1.0) - 0.161).abs() < 5e-4);
        assert_eq!(backaction_damping(0.0, 1.0, 1.0), 0.0);
        let g_hi = backaction_damping(4.75e6, hz_to_rad(25.1), k) / hz_to_rad(1.0);
        assert!((g_hi - 2661.0).abs() < 1.0, "{g_hi}");
        let c = cooperativity(hz_to_rad(0.161), hz_to_rad(0.56)).unwrap();
        assert!((c - 0.2875).abs() < 1e-3);
        assert_eq!(cooperativity(0.0, 1.0).unwrap(), 0.0);
        let c_hi = cooperativity(hz_to_rad(2661.0), hz_to_rad(25.7)).unwrap();
        assert!((c_hi - 103.5).abs() < 0.1);
        assert!(cooperativity(1.0, 0.0).is_err());
    }

    #[test]
    fn transparency_window_width() {
        // half-power points of |S_eit − S_bare|² against γ_i + 4G²/κ
        for (g_hz, gamma_hz) in [
            (500.0, 25.0),
            (5000.0, 100.0),
            (90_000.0, 100.0),
            (200.0, 5.0),
        ] {
            let p = eit(g_hz, gamma_hz);
            let expected = transparency_linewidth(p.mode.gamma_i, p.mode.coupling, p.port.kappa());
            let dev = |d: f64| (eit_reflection(&p, d) - cavity_reflection(&p.port, d)).norm_sqr();
            let peak = dev(0.0);
            let half = |sign: f64| {
                let (mut lo, mut hi) = (0.0, 10.0 * expected);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if dev(sign * mid) > 0.5 * peak {
                        lo = mid
                    } else {
                        hi = mid
                    }
                }
                0.5 * (lo + hi)
            };
            let width = half(1.0) + half(-1.0);
            assert!(
                ((width - expected) / expected).abs() < 0.01,
                "{g_hz}: {width} vs {expected}"
            );
        }
    }

    #[test]
    fn spurious_mode_adds_second_feature() {
        let mut p = eit(2000.0, 25.0);
        let single = eit_reflection(&p, -hz_to_rad(2.4e3));
        p.spurious = Some(EitMode {
            omega_m: p.mode.omega_m - hz_to_rad(2.4e3),
            gamma_i: hz_to_rad(25.0),
            coupling: hz_to_rad(400.0),
        });
        let double = eit_reflection(&p, -hz_to_rad(2.4e3));
        assert!((double - single).norm() > 1e-3);
    }

    #[test]
    fn lossless_branch_on_resonance() {
        let p = eit(100.0, 0.0);
        assert_eq!(eit_reflection(&p, 0.0), Complex64::new(1.0, 0.0));
    }

    proptest! {
        #[test]
        fn zero_coupling_reduces_to_cavity(
            ki in 1e3f64..1e8, ke in 0.0f64..1e8, gamma in 0.0f64..1e4, d in -1e9f64..1e9, wm in 1e6f64..1e8
        ) {
            let p = EitParams {
                port: CavityPort::new(5e10, ki, ke).unwrap(),
                mode: EitMode { omega_m: wm, gamma_i: gamma + 1e-3, coupling: 0.0 },
                spurious: None,
                delta_rd: wm,
            };
            prop_assert_eq!(eit_reflection(&p, d), cavity_reflection(&p.port, d));
        }

        #[test]
        fn passive_under_ideal_background(
            ki in 1e2f64..1e8, ke in 0.0f64..1e8, gamma in 1e-3f64..1e4, g in 0.0f64..1e6,
            d in -1e8f64..1e8, wm in 1e6f64..1e8, det in 0.5f64..1.5
        ) {
            let p = EitParams {
                port: CavityPort::new(5e10, ki, ke).unwrap(),
                mode: EitMode { omega_m: wm, gamma_i: gamma, coupling: g },
                spurious: None,
                delta_rd: wm * det,
            };
            prop_assert!(eit_reflection(&p, d).norm() <= 1.0 + 1e-12);
        }

        #[test]
        fn magnitude_symmetric_at_two_photon_resonance(frac in 0.0f64..1.0, g_hz in 0.0f64..3e3) {
            let p = eit(g_hz, 25.0);
            let width = transparency_linewidth(p.mode.gamma_i, p.mode.coupling, p.port.kappa());
            let d = frac * width;
            let a = eit_reflection(&p, d).norm();
            let b = eit_reflection(&p, -d).norm();
            prop_assert!((a - b).abs() < 1e-3);
        }

        #[test]
        fn photons_linear_in_power(p_dbm in -60.0f64..20.0, extra_db in 0.0f64..20.0) {
            let port = port();
            let tone = DriveTone { generator_power_dbm: p_dbm, attenuation_db: -70.0, omega_d: port.omega_r - 6e7, role: ToneRole::Pump };
            let louder = DriveTone { generator_power_dbm: p_dbm + extra_db, ..tone };
            let ratio = intracavity_photons(&louder, &port).unwrap() / intracavity_photons(&tone, &port).unwrap();
            let factor = device_plane_power(&louder).unwrap() / device_plane_power(&tone).unwrap();
            prop_assert!(((ratio - factor) / factor).abs() < 1e-12);
        }
    }

    #[test]
    fn passivity_dense_grid() {
        let p = eit(3000.0, 25.0);
        let grid: Vec<f64> = (-2000..=2000).map(|k| k as f64 * 1e3).collect();
        assert!(grid
            .iter()
            .all(|&d| eit_reflection(&p, d).norm() <= 1.0 + 1e-12));
    }
}
