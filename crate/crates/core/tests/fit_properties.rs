use emech_core::inference::{
    check_jacobian, fit_curve, fit_eit_trace, CavityModel, EitFitOptions, EitGuess, EitModel,
    ExponentialDecay, FitProblem, LmOptions, LorentzianModel, NoiseModel, Observations, ParamSpec,
    ResidualMode, TwoExponential,
};
use emech_core::langevin::LinearizedSystem;
use emech_core::physics::hz_to_rad;
use emech_core::response::{eit_reflection, Background, CavityPort, EitMode, EitParams};
use proptest::prelude::*;

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cavity_gradient_matches_differences(
        ki in 0.5f64..3.0, ke in 0.5f64..3.0, wr in -1.0f64..1.0,
        a in 0.2f64..2.0, th in -3.0f64..3.0, b in -0.05f64..0.05,
    ) {
        let p = [ki, ke, wr, a, th, b];
        let xs = grid(-8.0, 8.0, 41);
        let err = check_jacobian(&CavityModel, &p, &[1e-3; 6], &xs, 1e-3);
        prop_assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn eit_gradient_matches_differences(
        ki in 50.0f64..200.0, ke in 50.0f64..200.0, gamma in 0.5f64..3.0,
        wm in 900.0f64..1100.0, g in 0.5f64..8.0, th in -3.0f64..3.0, b in -1e-4f64..1e-4,
        sigma in 0.2f64..2.0, jitter in any::<bool>(),
    ) {
        let wd = -1000.0;
        let (model, p) = if jitter {
            (EitModel::with_jitter(wd, 9), vec![ki, ke, 0.0, gamma, wm, g, 0.9, th, b, sigma])
        } else {
            (EitModel::new(wd), vec![ki, ke, 0.0, gamma, wm, g, 0.9, th, b])
        };
        let mut steps = vec![1e-3, 1e-3, 1e-3, 1e-3 * gamma, 1e-3 * gamma, 1e-3 * g, 1e-4, 1e-4, 1e-8];
        if jitter {
            steps.push(1e-3 * sigma);
        }
        let mut xs = grid(-300.0, 300.0, 31);
        xs.extend(grid(wm + wd - 10.0, wm + wd + 10.0, 41));
        // the blur derivative is cancellation- or truncation-limited depending on the draw
        let factors: &[f64] = if jitter { &[0.5, 1.0, 2.0, 4.0, 8.0, 16.0] } else { &[1.0] };
        let err = factors
            .iter()
            .map(|f| {
                let mut st = steps.clone();
                if let Some(last) = st.last_mut().filter(|_| jitter) {
                    *last *= f;
                }
                check_jacobian(&model, &p, &st, &xs, 1e-3)
            })
            .fold(f64::INFINITY, f64::min);
        prop_assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn real_model_gradients_match_differences(
        a in 0.5f64..5.0, r in 0.2f64..3.0, c in -1.0f64..1.0, r2 in 5.0f64..20.0,
        h in 0.5f64..4.0, w in 0.5f64..3.0,
    ) {
        let ts = grid(0.0, 3.0, 40);
        prop_assert!(check_jacobian(&ExponentialDecay, &[a, r, c], &[1e-3; 3], &ts, 1e-3) < 1e-6);
        prop_assert!(check_jacobian(&TwoExponential, &[a, r2, 2.0 * a, r, c], &[1e-3; 5], &ts, 1e-3) < 1e-6);
        let xs = grid(-6.0, 6.0, 61);
        prop_assert!(check_jacobian(&LorentzianModel, &[c, h, 0.3, w], &[1e-3; 4], &xs, 1e-3) < 1e-6);
    }

    #[test]
    fn noise_gradient_matches_differences(g in 0.0f64..3e5, tied in any::<bool>()) {
        let omega_m = hz_to_rad(9.685e6);
        let system = LinearizedSystem {
            kappa_i: hz_to_rad(1.8e6),
            kappa_e: hz_to_rad(2.7e6),
            detuning: omega_m,
            omega_m,
            gamma_i: hz_to_rad(25.7),
            coupling: g,
        };
        let model = NoiseModel { system, tied };
        let p: Vec<f64> = if tied { vec![300.0, 1.2, 20.0] } else { vec![300.0, 1.2, 0.7, 20.0] };
        let xs = grid(-2e4, 2e4, 21);
        // linear in the occupancies, so a unit step carries no truncation error
        let err = check_jacobian(&model, &p, &vec![1.0; p.len()], &xs, 1e-3);
        prop_assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn linear_model_matches_closed_form(a in -5.0f64..5.0, b in -5.0f64..5.0, seed in 0u64..1000) {
        struct Line;
        impl emech_core::inference::TraceModel for Line {
            fn parameter_names(&self) -> Vec<&'static str> { vec!["a", "b"] }
            fn value(&self, p: &[f64], x: f64) -> num_complex::Complex64 { (p[0] * x + p[1]).into() }
            fn gradient(&self, _p: &[f64], x: f64, g: &mut [num_complex::Complex64]) {
                g[0] = x.into();
                g[1] = 1.0.into();
            }
        }
        let xs = grid(-2.0, 3.0, 25);
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(k, x)| a * x + b + 0.1 * (((k as u64 * 2654435761 + seed) % 101) as f64 / 50.0 - 1.0))
            .collect();
        let n = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n;
        let data = Observations::real(xs, ys);
        let fit = fit_curve(&FitProblem {
            model: &Line,
            data: &data,
            params: vec![ParamSpec::free("a", 0.0), ParamSpec::free("b", 0.0)],
            exclusions: vec![],
            residual_mode: ResidualMode::Magnitude,
            options: LmOptions::default(),
        }).unwrap();
        prop_assert!(fit.converged());
        prop_assert!((fit.estimates[0] - slope).abs() <= 1e-10 * slope.abs().max(1.0));
        prop_assert!((fit.estimates[1] - intercept).abs() <= 1e-10 * intercept.abs().max(1.0));
        prop_assert!(fit.cost_history.windows(2).all(|w| w[1] <= w[0]));
        // covariance is symmetric
        prop_assert!((fit.covariance[1] - fit.covariance[2]).abs() <= 1e-12 * fit.covariance[0].abs());
    }
}

fn device() -> (EitParams, f64) {
    let port = CavityPort {
        omega_r: hz_to_rad(8.872e9),
        kappa_i: hz_to_rad(1.8e6),
        kappa_e: hz_to_rad(2.7e6),
        background: Background {
            amplitude: 1.0,
            phase: -0.4,
            slope: 0.0,
        },
    };
    let mode = EitMode {
        omega_m: hz_to_rad(9.685e6),
        gamma_i: hz_to_rad(25.0),
        coupling: hz_to_rad(2000.0),
    };
    (
        EitParams {
            port,
            mode,
            spurious: None,
            delta_rd: mode.omega_m,
        },
        port.omega_r - mode.omega_m,
    )
}

fn eit_grid(omega_r: f64, width_hz: f64) -> Vec<f64> {
    let mut x: Vec<f64> = grid(-10e6, 10e6, 301)
        .into_iter()
        .map(|f| omega_r + hz_to_rad(f))
        .collect();
    x.extend(
        grid(-20.0 * width_hz, 20.0 * width_hz, 401)
            .into_iter()
            .map(|f| omega_r + hz_to_rad(f)),
    );
    x.sort_by(f64::total_cmp);
    x.dedup();
    x
}

fn guess_for(p: &EitParams, omega_d: f64) -> EitGuess {
    let mut port = p.port;
    port.kappa_i *= 0.9;
    port.kappa_e *= 1.1;
    port.omega_r += hz_to_rad(30e3);
    EitGuess {
        port,
        omega_m: p.mode.omega_m,
        gamma_i: p.mode.gamma_i * 2.0,
        coupling: p.mode.coupling * 0.5,
        omega_d,
    }
}

#[test]
fn eit_exact_recovery() {
    let (p, omega_d) = device();
    let x = eit_grid(p.port.omega_r, 1200.0);
    let y = x
        .iter()
        .map(|&w| eit_reflection(&p, w - p.port.omega_r))
        .collect();
    let data = Observations::complex(x, y);
    let fit = fit_eit_trace(
        &data,
        &guess_for(&p, omega_d),
        &[],
        &EitFitOptions::default(),
    )
    .unwrap();
    assert!(fit.converged());
    for (name, v) in [
        ("kappa_i", p.port.kappa_i),
        ("kappa_e", p.port.kappa_e),
        ("gamma_i", p.mode.gamma_i),
        ("omega_m", p.mode.omega_m),
        ("coupling", p.mode.coupling),
        ("phase", p.port.background.phase),
    ] {
        let got = fit.estimate(name).unwrap();
        assert!((got - v).abs() <= 1e-8 * v.abs(), "{name}: {got} vs {v}");
    }
}

#[test]
fn estimates_follow_a_frequency_translation() {
    let (p, omega_d) = device();
    let shift = hz_to_rad(1.25e6);
    let run = |s: f64| {
        let mut q = p;
        q.port.omega_r += s;
        let x = eit_grid(q.port.omega_r, 1200.0);
        let y = x
            .iter()
            .map(|&w| eit_reflection(&q, w - q.port.omega_r))
            .collect();
        let data = Observations::complex(x, y);
        fit_eit_trace(
            &data,
            &guess_for(&q, omega_d + s),
            &[],
            &EitFitOptions::default(),
        )
        .unwrap()
    };
    let a = run(0.0);
    let b = run(shift);
    for name in [
        "kappa_i",
        "kappa_e",
        "gamma_i",
        "omega_m",
        "coupling",
        "amplitude",
        "phase",
    ] {
        let (u, v) = (a.estimate(name).unwrap(), b.estimate(name).unwrap());
        assert!((u - v).abs() <= 1e-8 * u.abs(), "{name}: {u} vs {v}");
    }
    let (u, v) = (
        a.estimate("omega_r").unwrap(),
        b.estimate("omega_r").unwrap() - shift,
    );
    assert!(
        (u - v).abs() <= 1e-8 * p.port.kappa_e,
        "omega_r: {u} vs {v}"
    );
}
