use emech_core::inference::{fit_exponential_decay, fit_two_exponential};
use emech_core::langevin::{
    ringdown_simulate, Device, NoiseBaths, PulseSchedule, Segment, DEFAULT_OCCUPANCY_CAP,
};
use emech_core::physics::{hz_to_rad, rad_to_hz};
use emech_core::response::{CavityPort, DriveTone, ToneRole};

fn device() -> Device {
    Device {
        port: CavityPort::new(hz_to_rad(8.872e9), hz_to_rad(1.8e6), hz_to_rad(2.7e6)).unwrap(),
        omega_m: hz_to_rad(9.685e6),
        gamma_i: hz_to_rad(0.56),
        g0: hz_to_rad(24.6),
    }
}

fn schedule(dev: &Device) -> PulseSchedule {
    let tone = |dbm: f64, omega_d: f64, role| DriveTone {
        generator_power_dbm: dbm,
        attenuation_db: -73.9,
        omega_d,
        role,
    };
    PulseSchedule {
        probe: Some(tone(-20.0, dev.port.omega_r - dev.omega_m, ToneRole::Probe)),
        segments: vec![
            Segment {
                duration: 1.0,
                pump: Some(tone(-8.0, dev.port.omega_r + dev.omega_m, ToneRole::Pulse)),
            },
            Segment {
                duration: 6.0,
                pump: None,
            },
        ],
        initial_occupancy: 23.2,
        samples_per_segment: 600,
        transient_samples: 80,
        occupancy_cap: Some(DEFAULT_OCCUPANCY_CAP),
    }
}

#[test]
fn decay_after_pulse_gives_total_damping() {
    let dev = device();
    let baths = NoiseBaths {
        n_mech: 23.2,
        ..Default::default()
    };
    let tr = ringdown_simulate(&schedule(&dev), &dev, &baths).unwrap();
    let start = tr.time.iter().position(|&t| t >= 1.0).unwrap();
    let fit = fit_exponential_decay(&tr.time[start..], &tr.occupancy[start..]).unwrap();
    let gamma_m = rad_to_hz(fit.estimates[1]);
    assert!((gamma_m - 0.72).abs() < 0.02 * 0.72, "{gamma_m}");
    // the pulse left the mode far above its bath
    assert!(tr.occupancy[start] > 10.0 * 23.2);
}

#[test]
fn scattered_power_separates_cavity_and_mechanics() {
    let dev = device();
    let baths = NoiseBaths {
        n_mech: 23.2,
        ..Default::default()
    };
    let tr = ringdown_simulate(&schedule(&dev), &dev, &baths).unwrap();
    let start = tr.time.iter().position(|&t| t >= 1.0).unwrap();
    let f = fit_two_exponential(&tr.time[start..], &tr.scattered[start..]).unwrap();
    assert!(f.fit.converged());
    assert!(
        (rad_to_hz(f.slow_rate) - 0.72).abs() < 0.02 * 0.72,
        "{}",
        rad_to_hz(f.slow_rate)
    );
    let kappa = dev.kappa();
    assert!(
        (f.fast_rate - kappa).abs() < 0.01 * kappa,
        "{} vs {kappa}",
        f.fast_rate
    );
}
