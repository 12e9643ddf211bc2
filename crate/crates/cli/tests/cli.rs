use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emech::config::DeviceConfig;
use emech::report::FitReport;
use emech::trace::{Table, Trace, TraceData};

fn sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/device_soi.json")
}

fn emech(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emech"))
        .arg("--config")
        .arg(sample())
        .arg("--out")
        .arg(dir)
        .args(args)
        .env_remove("EMECH_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "{}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn transparency_turns_from_dip_to_peak_with_power() {
    let dir = tempfile::tempdir().unwrap();
    ok(&emech(
        dir.path(),
        &[
            "simulate",
            "eit",
            "--photons",
            "484,1.2e5,2.38e6",
            "--noise",
            "0",
        ],
    ));
    let centre: Vec<f64> = (0..3)
        .map(|k| {
            let t = Trace::read(&dir.path().join(format!("eit_{k:03}.csv"))).unwrap();
            let target = t.meta_f64("drive_hz").unwrap().unwrap() + 9.685e6;
            let i = (0..t.len())
                .min_by(|&a, &b| {
                    (t.grid[a] - target)
                        .abs()
                        .total_cmp(&(t.grid[b] - target).abs())
                })
                .unwrap();
            let TraceData::Complex(y) = &t.data else {
                panic!()
            };
            y[i].norm()
        })
        .collect();
    assert!(centre[0] < centre[1] && centre[1] < centre[2], "{centre:?}");
}

#[test]
fn eit_round_trip_recovers_generating_parameters() {
    let dir = tempfile::tempdir().unwrap();
    ok(&emech(
        dir.path(),
        &["--seed", "3", "simulate", "eit", "--photons", "1.2e5"],
    ));
    ok(&emech(
        dir.path(),
        &[
            "fit",
            dir.path().join("eit_000.csv").to_str().unwrap(),
            "--kind",
            "eit",
        ],
    ));
    let r = FitReport::read(&dir.path().join("eit_000.fit.json")).unwrap();
    assert!(r.converged);
    let g = 1.2e5f64.sqrt() * 25.1;
    for (name, truth) in [
        ("kappa_i_hz", 1.8e6),
        ("kappa_e_hz", 2.7e6),
        ("omega_r_hz", 8.872e9),
        ("gamma_i_hz", 25.7),
        ("omega_m_hz", 9.685e6),
        ("coupling_hz", g),
    ] {
        let p = r.param(name).unwrap();
        assert!(
            (p.estimate - truth).abs() <= p.ci95.unwrap(),
            "{name}: {} ± {:?} vs {truth}",
            p.estimate,
            p.ci95
        );
    }
    let g0 = r.derived["g0_hz"].unwrap();
    assert!((g0 - 25.1).abs() < 0.2, "{g0}");
    // residuals keep the trace's grid
    let res = Trace::read(&dir.path().join("eit_000.residual.csv")).unwrap();
    let data = Trace::read(&dir.path().join("eit_000.csv")).unwrap();
    assert_eq!(res.grid, data.grid);
}

#[test]
fn exclusion_removes_spurious_mode() {
    let dir = tempfile::tempdir().unwrap();
    ok(&emech(
        dir.path(),
        &[
            "--seed",
            "4",
            "simulate",
            "eit",
            "--photons",
            "1.2e5",
            "--spurious",
        ],
    ));
    let trace = dir.path().join("eit_000.csv");
    ok(&emech(
        dir.path(),
        &[
            "--exclude",
            "9.6823e6:9.6835e6",
            "fit",
            trace.to_str().unwrap(),
            "--kind",
            "eit",
        ],
    ));
    let r = FitReport::read(&dir.path().join("eit_000.fit.json")).unwrap();
    assert_eq!(r.exclusions_hz, vec![[9.6823e6, 9.6835e6]]);
    let gamma = r.param("gamma_i_hz").unwrap();
    assert!(
        (gamma.estimate - 25.7).abs() <= gamma.ci95.unwrap(),
        "{gamma:?}"
    );
    let res = Trace::read(&dir.path().join("eit_000.residual.csv")).unwrap();
    let excluded: usize = res.metadata["excluded_points"].parse().unwrap();
    assert!(excluded > 100, "{excluded}");
}

#[test]
fn ringdown_trace_decays_at_total_damping() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/device_soi_11mk.json");
    let o = Command::new(env!("CARGO_BIN_EXE_emech"))
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "simulate",
            "ringdown",
        ])
        .output()
        .unwrap();
    ok(&o);
    let scattered = dir.path().join("ringdown_scattered.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_emech"))
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "fit",
        ])
        .arg(&scattered)
        .args(["--kind", "ringdown", "--two-exponential"])
        .output()
        .unwrap();
    ok(&o);
    let r = FitReport::read(&dir.path().join("ringdown_scattered.fit.json")).unwrap();
    let gm = r.derived["gamma_m_hz"].unwrap();
    assert!((gm - 0.72).abs() < 0.02 * 0.72, "{gm}");
    let kappa = r.derived["kappa_hz"].unwrap();
    assert!((kappa - 4.5e6).abs() < 0.01 * 4.5e6, "{kappa}");
}

#[test]
fn noise_round_trip_recovers_bath_temperature() {
    let dir = tempfile::tempdir().unwrap();
    ok(&emech(
        dir.path(),
        &["--seed", "9", "simulate", "noise", "--powers-dbm=10"],
    ));
    ok(&emech(
        dir.path(),
        &[
            "fit",
            dir.path().join("noise_000.csv").to_str().unwrap(),
            "--kind",
            "noise",
        ],
    ));
    let r = FitReport::read(&dir.path().join("noise_000.fit.json")).unwrap();
    let t = r.derived["mech_temperature_k"].unwrap();
    assert!((t - 0.211).abs() < 0.005, "{t}");
    let n_mech = r.param("n_mech").unwrap();
    assert!(
        (n_mech.estimate - 453.4).abs() <= n_mech.ci95.unwrap() * 1.5,
        "{n_mech:?}"
    );
    assert!(r.param("n_add").is_some_and(|p| !p.free));
}

#[test]
fn periodogram_noise_is_positive() {
    let dir = tempfile::tempdir().unwrap();
    ok(&emech(
        dir.path(),
        &["simulate", "noise", "--photons", "1e5", "--averages", "50"],
    ));
    let t = Trace::read(&dir.path().join("noise_000.csv")).unwrap();
    let TraceData::Real(y) = &t.data else {
        panic!()
    };
    assert!(y.iter().all(|v| *v > 0.0));
    assert_eq!(t.metadata["averages"], "50");
}

#[test]
fn manifest_echoes_configuration_and_options() {
    let dir = tempfile::tempdir().unwrap();
    ok(&emech(
        dir.path(),
        &[
            "--seed",
            "11",
            "simulate",
            "eit",
            "--powers-dbm=-10,0",
            "--jitter",
        ],
    ));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["seed"], 11);
    assert_eq!(m["kind"], "eit");
    assert_eq!(m["options"]["jitter"], true);
    assert_eq!(m["files"].as_array().unwrap().len(), 2);
    assert_eq!(m["files"][1]["power_dbm"], 0.0);
    let echoed: DeviceConfig = serde_json::from_value(m["config"].clone()).unwrap();
    assert_eq!(echoed, DeviceConfig::load(&sample()).unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "# emech-trace 1\n# kind=s11\n").unwrap();
    let o = emech(
        dir.path(),
        &["fit", empty.to_str().unwrap(), "--kind", "eit"],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = emech(
        dir.path(),
        &["fit", empty.to_str().unwrap(), "--kind", "noise"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("psd"));

    let o = emech(dir.path(), &["cooling-curve", "--powers-dbm=0,0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--powers-dbm"));

    let o = emech(dir.path(), &["simulate", "eit", "--photons", "-5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--photons"), "{}", stderr(&o));

    let o = emech(dir.path(), &["simulate", "eit"]);
    assert_eq!(o.status.code(), Some(2));

    let o = emech(dir.path(), &["--exclude", "3", "cooling-curve"]);
    assert_eq!(o.status.code(), Some(2));

    let o = emech(dir.path(), &["plot", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_emech"))
        .args(["calibrate-photons", "--power-dbm", "0"])
        .env_remove("EMECH_CONFIG")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_violations_exit_with_four_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(sample())
        .unwrap()
        .replace("\"kappa_e_hz\": 2700000.0", "\"kappa_e_hz\": -2.0");
    let bad = dir.path().join("bad.json");
    fs::write(&bad, text).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_emech"))
        .arg("--config")
        .arg(&bad)
        .args(["cooling-curve", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("cavity.kappa_e_hz"), "{}", stderr(&o));
}

#[test]
fn missing_feature_exits_with_three_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    ok(&emech(dir.path(), &["simulate", "eit", "--photons", "0"]));
    let o = emech(
        dir.path(),
        &[
            "fit",
            dir.path().join("eit_000.csv").to_str().unwrap(),
            "--kind",
            "eit",
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let r = FitReport::read(&dir.path().join("eit_000.fit.json")).unwrap();
    assert!(!r.converged);
    assert!(r.error.is_some());
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_emech"))
        .args(["calibrate-photons", "--power-dbm=-20", "--format", "json"])
        .env("EMECH_CONFIG", sample())
        .current_dir(dir.path())
        .output()
        .unwrap();
    ok(&o);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let n = v[0]["photons"].as_f64().unwrap();
    assert!((n - 300.0).abs() < 0.05 * 300.0, "{n}");
}

#[test]
fn calibration_off_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = emech(dir.path(), &["calibrate-photons", "--power-dbm", "off"]);
    ok(&o);
    let t = Table::parse_csv(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert_eq!(t.column("photons").unwrap(), vec![0.0]);
    assert_eq!(t.column("device_power_w").unwrap(), vec![0.0]);
}

#[test]
fn cooling_curve_table() {
    let dir = tempfile::tempdir().unwrap();
    ok(&emech(dir.path(), &["cooling-curve", "--svg"]));
    let t = Table::parse_csv(&fs::read_to_string(dir.path().join("cooling_curve.csv")).unwrap())
        .unwrap();
    let col = |n: &str| t.column(n).unwrap();
    let (n_d, c, ideal, full) = (
        col("n_d"),
        col("cooperativity"),
        col("n_m_ideal"),
        col("n_m_full"),
    );
    // lowest power: essentially the thermal occupancy
    assert!((full[0] - 453.4).abs() < 0.01 * 453.4, "{}", full[0]);
    let max = ideal.iter().cloned().fold(f64::MIN, f64::max);
    let min = ideal.iter().cloned().fold(f64::MAX, f64::min);
    assert!(max / min > 10.0);
    // C recomputed from the table's photon numbers
    let (g0, kappa, gamma) = (25.1, 4.5e6, 25.7);
    for (n, c) in n_d.iter().zip(&c) {
        let expect = 4.0 * n * g0 * g0 / (kappa * gamma);
        assert!(((c - expect) / expect).abs() < 1e-12, "{c} vs {expect}");
    }
    let langevin = col("n_m_langevin");
    for (a, b) in full.iter().zip(&langevin) {
        assert!(((a - b) / b).abs() < 0.05);
    }
}

#[test]
fn cooling_plot_has_points_and_dashed_ideal_line() {
    let dir = tempfile::tempdir().unwrap();
    ok(&emech(dir.path(), &["cooling-curve", "--svg"]));
    let svg = fs::read_to_string(dir.path().join("cooling_curve.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let groups: Vec<_> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("series"))
        .collect();
    assert_eq!(groups.len(), 2);
    let circles = groups[0]
        .descendants()
        .filter(|n| n.has_tag_name("circle"))
        .count();
    assert_eq!(circles, 22);
    let line = groups[1]
        .descendants()
        .find(|n| n.has_tag_name("polyline"))
        .unwrap();
    assert!(line.attribute("stroke-dasharray").is_some());

    let table = dir.path().join("cooling_curve.csv");
    ok(&emech(
        dir.path(),
        &["plot", table.to_str().unwrap(), "--style", "cooling"],
    ));
    let src = Table::parse_csv(&fs::read_to_string(&table).unwrap()).unwrap();
    let plotted =
        Table::parse_csv(&fs::read_to_string(dir.path().join("cooling_curve.plot.csv")).unwrap())
            .unwrap();
    assert_eq!(plotted.column("n_d"), src.column("n_d"));
    assert_eq!(plotted.column("n_m_ideal"), src.column("n_m_ideal"));
}

#[test]
fn trace_plots_are_xml_with_lossless_csv() {
    let dir = tempfile::tempdir().unwrap();
    ok(&emech(dir.path(), &["simulate", "cavity"]));
    ok(&emech(dir.path(), &["simulate", "ringdown"]));
    for stem in ["cavity", "ringdown_occupancy"] {
        let trace = dir.path().join(format!("{stem}.csv"));
        ok(&emech(dir.path(), &["plot", trace.to_str().unwrap()]));
        let svg = fs::read_to_string(dir.path().join(format!("{stem}.svg"))).unwrap();
        roxmltree::Document::parse(&svg).unwrap();
        let t = Trace::read(&trace).unwrap();
        let csv = Table::parse_csv(
            &fs::read_to_string(dir.path().join(format!("{stem}.plot.csv"))).unwrap(),
        )
        .unwrap();
        let y: Vec<f64> = match &t.data {
            TraceData::Complex(v) => v.iter().map(|z| z.norm()).collect(),
            TraceData::Real(v) => v.clone(),
        };
        assert_eq!(csv.rows.iter().map(|r| r[0]).collect::<Vec<_>>(), t.grid);
        assert_eq!(csv.rows.iter().map(|r| r[1]).collect::<Vec<_>>(), y);
    }
}

#[test]
fn cavity_fit_recovers_loss_rates() {
    let dir = tempfile::tempdir().unwrap();
    ok(&emech(dir.path(), &["--seed", "1", "simulate", "cavity"]));
    ok(&emech(
        dir.path(),
        &[
            "fit",
            dir.path().join("cavity.csv").to_str().unwrap(),
            "--kind",
            "cavity",
        ],
    ));
    let r = FitReport::read(&dir.path().join("cavity.fit.json")).unwrap();
    for (name, truth) in [
        ("kappa_i_hz", 1.8e6),
        ("kappa_e_hz", 2.7e6),
        ("omega_r_hz", 8.872e9),
    ] {
        let p = r.param(name).unwrap();
        assert!(
            (p.estimate - truth).abs() <= 1.5 * p.ci95.unwrap(),
            "{name}: {p:?}"
        );
    }
}

#[test]
fn magnitude_and_jitter_fits_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(&emech(
        dir.path(),
        &[
            "--seed",
            "2",
            "simulate",
            "eit",
            "--photons",
            "1.2e5",
            "--jitter",
        ],
    ));
    let trace = dir.path().join("eit_000.csv");
    ok(&emech(
        dir.path(),
        &[
            "fit",
            trace.to_str().unwrap(),
            "--kind",
            "eit",
            "--magnitude",
        ],
    ));
    let r = FitReport::read(&dir.path().join("eit_000.fit.json")).unwrap();
    assert_eq!(r.residual_mode.as_deref(), Some("magnitude"));
    ok(&emech(
        dir.path(),
        &[
            "fit",
            trace.to_str().unwrap(),
            "--kind",
            "eit",
            "--jitter",
            "fixed",
        ],
    ));
    let r = FitReport::read(&dir.path().join("eit_000.fit.json")).unwrap();
    let s = r.param("jitter_sigma_hz").unwrap();
    assert!(!s.free && s.estimate == 20.0);
}
