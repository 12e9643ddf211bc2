//! Synthetic traces with seeded measurement noise.
//!
//! Every trace draws from its own ChaCha8 stream (`seed`, item index), so a sweep gives the
//! same files whatever the thread count or the order in which items run.

use emech_core::langevin::{
    lorentzian_grid, ringdown_simulate, LinearizedSystem, PulseSchedule, Segment,
    DEFAULT_OCCUPANCY_CAP,
};
use emech_core::physics::{hz_to_rad, rad_to_hz};
use emech_core::response::{
    cavity_reflection, eit_reflection, intracavity_photons, EitMode, EitParams, ToneRole,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::config::DeviceConfig;
use crate::error::{CliError, Result};
use crate::jitter::JitterModel;
use crate::trace::{Trace, TraceKind};

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Drive strength of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivePoint {
    /// Generator power, when the point was specified by power.
    pub power_dbm: Option<f64>,
    pub photons: f64,
}

/// Turn a power list or a photon-number list into drive points for a tone detuned by
/// `detuning` (rad/s) below the cavity.
pub fn drive_points(
    cfg: &DeviceConfig,
    powers_dbm: Option<&[f64]>,
    photons: Option<&[f64]>,
    detuning: f64,
) -> Result<Vec<DrivePoint>> {
    match (powers_dbm, photons) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "give either --powers-dbm or --photons, not both".into(),
        )),
        (Some(p), None) => {
            let port = cfg.port();
            p.iter()
                .map(|&dbm| {
                    let tone = cfg.tone(dbm, port.omega_r - detuning, ToneRole::Pump);
                    Ok(DrivePoint {
                        power_dbm: Some(dbm),
                        photons: intracavity_photons(&tone, &port)?,
                    })
                })
                .collect()
        }
        (None, Some(n)) => {
            if let Some(v) = n.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(CliError::Usage(format!(
                    "invalid --photons: {v} is not a non-negative photon number"
                )));
            }
            Ok(n.iter()
                .map(|&photons| DrivePoint {
                    power_dbm: None,
                    photons,
                })
                .collect())
        }
        (None, None) => Err(CliError::Usage(
            "a sweep needs --powers-dbm or --photons".into(),
        )),
    }
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct EitSynth {
    /// Drive detuning below the cavity, rad/s.
    pub detuning: f64,
    /// Std of the Gaussian noise on re and im.
    pub noise: f64,
    /// Duration of one frequency sweep, s; used by the jitter process.
    pub sweep_s: f64,
    pub jitter: Option<JitterModel>,
    /// Offset (Hz) and coupling ratio G₂/G of a spurious mechanical mode.
    pub spurious: Option<(f64, f64)>,
}

/// Probe frequencies (Hz) of a transparency trace: a broad cavity sweep, a band reaching
/// 3 kHz below the feature (where spurious modes sit), and a dense window across the
/// feature itself.
pub fn eit_grid_hz(cavity_hz: f64, feature_offset_hz: f64, width_hz: f64) -> Vec<f64> {
    let dense = (12.0 * width_hz).max(300.0);
    let mut f: Vec<f64> = (0..301).map(|k| -10e6 + 20e6 * k as f64 / 300.0).collect();
    f.extend((0..1501).map(|k| feature_offset_hz - 3000.0 + 3300.0 * k as f64 / 1500.0));
    f.extend((0..4001).map(|k| feature_offset_hz - dense + 2.0 * dense * k as f64 / 4000.0));
    sorted_unique(
        sorted_unique(f)
            .into_iter()
            .map(|v| cavity_hz + v)
            .collect(),
    )
}

pub fn eit_trace(
    cfg: &DeviceConfig,
    drive: DrivePoint,
    opts: &EitSynth,
    seed: u64,
    stream: u64,
) -> Result<Trace> {
    let dev = cfg.device()?;
    let port = dev.port;
    let coupling = drive.photons.sqrt() * dev.g0;
    let mode = EitMode {
        omega_m: dev.omega_m,
        gamma_i: dev.gamma_i,
        coupling,
    };
    let spurious = opts.spurious.map(|(offset_hz, ratio)| EitMode {
        omega_m: dev.omega_m + hz_to_rad(offset_hz),
        gamma_i: dev.gamma_i,
        coupling: ratio * coupling,
    });
    let params = EitParams {
        port,
        mode,
        spurious,
        delta_rd: opts.detuning,
    };
    params.validate()?;

    let fr = cfg.cavity.frequency_hz;
    let width = rad_to_hz(dev.gamma_i + 4.0 * coupling * coupling / port.kappa());
    let grid = eit_grid_hz(fr, rad_to_hz(dev.omega_m - opts.detuning), width);
    let mut rng = rng(seed, stream);
    let jitter = match &opts.jitter {
        Some(j) => {
            let n = grid.len();
            let times: Vec<f64> = (0..n)
                .map(|k| opts.sweep_s * k as f64 / (n - 1) as f64)
                .collect();
            j.sample(&mut rng, &times)
        }
        None => vec![0.0; grid.len()],
    };
    let noise = normal(opts.noise)?;
    let y = grid
        .iter()
        .zip(&jitter)
        .map(|(&f, &dj)| {
            let mut p = params;
            p.mode.omega_m += hz_to_rad(dj);
            if let Some(s) = p.spurious.as_mut() {
                s.omega_m += hz_to_rad(dj);
            }
            let s = eit_reflection(&p, hz_to_rad(f - fr));
            s + Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng))
        })
        .collect();
    let mut t = Trace::complex(grid, y)
        .with_meta("drive_hz", fr - rad_to_hz(opts.detuning))
        .with_meta("photons", drive.photons)
        .with_meta("coupling_hz", rad_to_hz(coupling))
        .with_meta("noise_std", opts.noise)
        .with_meta("seed", seed)
        .with_meta("stream", stream);
    if let Some(p) = drive.power_dbm {
        t = t.with_meta("drive_power_dbm", p);
    }
    if opts.jitter.is_some() {
        t = t.with_meta("jitter_sweep_s", opts.sweep_s);
    }
    if let Some((offset, ratio)) = opts.spurious {
        t = t
            .with_meta("spurious_offset_hz", offset)
            .with_meta("spurious_ratio", ratio);
    }
    Ok(t)
}

fn normal(std: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, std).map_err(|_| {
        CliError::Usage(format!(
            "invalid --noise: {std} is not a valid standard deviation"
        ))
    })
}

pub fn cavity_trace(cfg: &DeviceConfig, noise_std: f64, seed: u64) -> Result<Trace> {
    let port = cfg.port();
    port.validate()?;
    let fr = cfg.cavity.frequency_hz;
    let grid = sorted_unique(
        (0..1001)
            .map(|k| fr - 10e6 + 20e6 * k as f64 / 1000.0)
            .collect(),
    );
    let noise = normal(noise_std)?;
    let mut rng = rng(seed, 0);
    let y = grid
        .iter()
        .map(|&f| {
            cavity_reflection(&port, hz_to_rad(f - fr))
                + Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng))
        })
        .collect();
    Ok(Trace::complex(grid, y)
        .with_meta("noise_std", noise_std)
        .with_meta("seed", seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsdNoise {
    /// Additive Gaussian with this std (quanta).
    Gaussian(f64),
    /// Mean of this many exponentially distributed periodogram samples.
    Periodogram(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSynth {
    pub detuning: f64,
    pub noise: PsdNoise,
    pub rbw_hz: f64,
}

/// The linearized system of the configured device under a drive of `photons`.
pub fn linearized(cfg: &DeviceConfig, photons: f64, detuning: f64) -> Result<LinearizedSystem> {
    let dev = cfg.device()?;
    let sys = LinearizedSystem {
        kappa_i: dev.port.kappa_i,
        kappa_e: dev.port.kappa_e,
        detuning,
        omega_m: dev.omega_m,
        gamma_i: dev.gamma_i,
        coupling: photons.sqrt() * dev.g0,
    };
    sys.validate()?;
    Ok(sys)
}

pub fn noise_trace(
    cfg: &DeviceConfig,
    drive: DrivePoint,
    opts: &NoiseSynth,
    seed: u64,
    stream: u64,
) -> Result<Trace> {
    let sys = linearized(cfg, drive.photons, opts.detuning)?;
    let baths = cfg.baths()?;
    let fr = cfg.cavity.frequency_hz;
    let width = sys.gamma_i + sys.backaction_damping();
    let mut off: Vec<f64> = lorentzian_grid(sys.omega_m - sys.detuning, width, 801, 0.999)
        .into_iter()
        .map(rad_to_hz)
        .collect();
    off.extend((0..101).map(|k| -5e6 + 1e5 * k as f64));
    let grid = sorted_unique(sorted_unique(off).into_iter().map(|v| fr + v).collect());
    let delta: Vec<f64> = grid.iter().map(|&f| hz_to_rad(f - fr)).collect();
    let clean = sys.spectrum(&baths, &delta)?;
    let mut rng = rng(seed, stream);
    let y = match opts.noise {
        PsdNoise::Gaussian(std) => {
            let n = normal(std)?;
            clean.iter().map(|v| v + n.sample(&mut rng)).collect()
        }
        PsdNoise::Periodogram(avg) => {
            if avg == 0 {
                return Err(CliError::Usage(
                    "invalid --averages: must be at least 1".into(),
                ));
            }
            let k = f64::from(avg);
            clean
                .iter()
                .map(|&v| {
                    let g = Gamma::new(k, v / k).map_err(|_| {
                        CliError::Invariant(format!("spectrum level {v} is not positive"))
                    })?;
                    Ok(g.sample(&mut rng))
                })
                .collect::<Result<Vec<f64>>>()?
        }
    };
    let mut t = Trace::real(TraceKind::Psd, grid, y)
        .with_meta("drive_hz", fr - rad_to_hz(opts.detuning))
        .with_meta("photons", drive.photons)
        .with_meta("rbw_hz", opts.rbw_hz)
        .with_meta("added_noise", baths.n_add)
        .with_meta("seed", seed)
        .with_meta("stream", stream);
    t = match opts.noise {
        PsdNoise::Gaussian(s) => t.with_meta("noise_std", s),
        PsdNoise::Periodogram(a) => t.with_meta("averages", a),
    };
    if let Some(p) = drive.power_dbm {
        t = t.with_meta("drive_power_dbm", p);
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingdownSynth {
    pub probe_dbm: f64,
    pub pulse_dbm: f64,
    pub pulse_s: f64,
    pub decay_s: f64,
    pub samples: usize,
    /// Relative Gaussian noise on both channels.
    pub noise: f64,
}

impl Default for RingdownSynth {
    fn default() -> Self {
        RingdownSynth {
            probe_dbm: -20.0,
            pulse_dbm: -8.0,
            pulse_s: 1.0,
            decay_s: 6.0,
            samples: 600,
            noise: 0.0,
        }
    }
}

/// Blue pulse then probe only: returns (occupancy, scattered photon rate) traces.
pub fn ringdown_traces(
    cfg: &DeviceConfig,
    opts: &RingdownSynth,
    seed: u64,
) -> Result<(Trace, Trace)> {
    let dev = cfg.device()?;
    let baths = cfg.baths()?;
    let probe = cfg.tone(
        opts.probe_dbm,
        dev.port.omega_r - dev.omega_m,
        ToneRole::Probe,
    );
    let pulse = cfg.tone(
        opts.pulse_dbm,
        dev.port.omega_r + dev.omega_m,
        ToneRole::Pulse,
    );
    let schedule = PulseSchedule {
        probe: Some(probe),
        segments: vec![
            Segment {
                duration: opts.pulse_s,
                pump: Some(pulse),
            },
            Segment {
                duration: opts.decay_s,
                pump: None,
            },
        ],
        initial_occupancy: baths.n_mech,
        samples_per_segment: opts.samples,
        transient_samples: 80,
        occupancy_cap: Some(DEFAULT_OCCUPANCY_CAP),
    };
    let tr = ringdown_simulate(&schedule, &dev, &baths)?;
    let noise = normal(opts.noise)?;
    let mut rng = rng(seed, 0);
    let mut noisy = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|x| x * (1.0 + noise.sample(&mut rng)))
            .collect()
    };
    let occ = noisy(&tr.occupancy);
    let sc = noisy(&tr.scattered);
    let meta = |t: Trace, signal: &str| {
        t.with_meta("signal", signal)
            .with_meta("pulse_end_s", opts.pulse_s)
            .with_meta("probe_dbm", opts.probe_dbm)
            .with_meta("pulse_dbm", opts.pulse_dbm)
            .with_meta("noise_rel", opts.noise)
            .with_meta("seed", seed)
    };
    Ok((
        meta(
            Trace::real(TraceKind::Timeseries, tr.time.clone(), occ),
            "occupancy",
        ),
        meta(Trace::real(TraceKind::Timeseries, tr.time, sc), "scattered"),
    ))
}

/// Apply `f` to every item on a pool of `threads` workers (the global pool when `None`),
/// keeping the input order.
pub fn par_map<T, R, F>(threads: Option<usize>, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R> + Sync + Send,
{
    use rayon::prelude::*;
    let run = || {
        items
            .par_iter()
            .enumerate()
            .map(|(k, t)| f(k, t))
            .collect::<Result<Vec<R>>>()
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("invalid --threads: {e}")))?
            .install(run),
        None => Ok(run()?),
    }
}
