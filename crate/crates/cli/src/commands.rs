use std::fs;
use std::path::{Path, PathBuf};

use emech_core::inference::{
    extract_g0, fit_curve, fit_eit_trace, fit_exponential_decay, fit_noise_spectrum,
    fit_two_exponential, CavityModel, EitFitOptions, EitGuess, ExclusionWindow, FitProblem,
    FitResult, JitterMode, LmOptions, NoiseFitOptions, Observations, ParamSpec, ResidualMode,
    SweepPoint,
};
use emech_core::langevin::{cooling_steady_state, ideal_cooling, BackactionRates, Sideband};
use emech_core::physics::{dbm_to_watts, hz_to_rad, rad_to_hz, watts_to_dbm};
use emech_core::response::{backaction_damping, device_plane_power, intracavity_photons, ToneRole};
use serde_json::json;

use crate::cli::{
    CalibrateArgs, Cli, Command, CoolingArgs, FitArgs, FitKind, Format, JitterArg, PlotArgs,
    PlotStyle, RingdownArgs, SimKind, SimulateArgs,
};
use crate::config::DeviceConfig;
use crate::error::{CliError, Result};
use crate::jitter::JitterModel;
use crate::plot::{render_svg, Axis, Mark, Series};
use crate::report::{finite, DriveReport, FitReport};
use crate::synth::{self, EitSynth, NoiseSynth, PsdNoise, RingdownSynth};
use crate::trace::{fmt_f64, Table, Trace, TraceData, TraceKind};

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Context { cli: &cli };
    match &cli.command {
        Command::Simulate(a) => ctx.simulate(a),
        Command::Fit(a) => ctx.fit(a),
        Command::CoolingCurve(a) => ctx.cooling_curve(a),
        Command::Ringdown(a) => ctx.ringdown(a),
        Command::CalibratePhotons(a) => ctx.calibrate(a),
        Command::ExtractG0(a) => ctx.extract_g0(&a.reports),
        Command::Plot(a) => ctx.plot(a),
    }
}

struct Context<'a> {
    cli: &'a Cli,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into())
}

impl Context<'_> {
    fn config(&self) -> Result<DeviceConfig> {
        let path = self.cli.config.as_ref().ok_or_else(|| {
            CliError::Usage("no device configuration: pass --config or set EMECH_CONFIG".into())
        })?;
        DeviceConfig::load(path)
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.cli.out).map_err(|e| CliError::io(&self.cli.out, e))?;
        Ok(self.cli.out.join(name))
    }

    fn simulate(&self, a: &SimulateArgs) -> Result<()> {
        let cfg = self.config()?;
        let seed = self.cli.seed;
        let detuning = detuning(&cfg, a.sweep.detuning_hz)?;
        let mut files = Vec::new();
        let mut options = serde_json::Map::new();
        let traces: Vec<(String, Trace)> = match a.kind {
            SimKind::Eit | SimKind::Noise => {
                let points = synth::drive_points(
                    &cfg,
                    a.sweep.powers_dbm.as_deref(),
                    a.sweep.photons.as_deref(),
                    detuning,
                )?;
                if points.is_empty() {
                    return Err(CliError::Usage("empty sweep".into()));
                }
                options.insert("detuning_hz".into(), json!(rad_to_hz(detuning)));
                let prefix = if a.kind == SimKind::Eit {
                    "eit"
                } else {
                    "noise"
                };
                let traces = if a.kind == SimKind::Eit {
                    let opts = EitSynth {
                        detuning,
                        noise: a.noise.unwrap_or(0.01),
                        sweep_s: a.sweep_s,
                        jitter: a.jitter.then(|| JitterModel::from(&cfg.jitter)),
                        spurious: a
                            .spurious
                            .then_some((a.spurious_offset_hz, a.spurious_ratio)),
                    };
                    if !(opts.sweep_s > 0.0) {
                        return Err(CliError::Usage(
                            "invalid --sweep-s: must be positive".into(),
                        ));
                    }
                    options.insert("noise_std".into(), json!(opts.noise));
                    options.insert("jitter".into(), json!(a.jitter));
                    if a.jitter {
                        options.insert("sweep_s".into(), json!(a.sweep_s));
                    }
                    if let Some((o, r)) = opts.spurious {
                        options.insert("spurious_offset_hz".into(), json!(o));
                        options.insert("spurious_ratio".into(), json!(r));
                    }
                    synth::par_map(self.cli.threads, &points, |k, p| {
                        synth::eit_trace(&cfg, *p, &opts, seed, k as u64)
                    })?
                } else {
                    let noise = match a.averages {
                        Some(n) => PsdNoise::Periodogram(n),
                        None => PsdNoise::Gaussian(a.noise.unwrap_or(0.3)),
                    };
                    let opts = NoiseSynth {
                        detuning,
                        noise,
                        rbw_hz: a.rbw_hz,
                    };
                    match noise {
                        PsdNoise::Gaussian(s) => options.insert("noise_std".into(), json!(s)),
                        PsdNoise::Periodogram(n) => options.insert("averages".into(), json!(n)),
                    };
                    options.insert("rbw_hz".into(), json!(a.rbw_hz));
                    synth::par_map(self.cli.threads, &points, |k, p| {
                        synth::noise_trace(&cfg, *p, &opts, seed, k as u64)
                    })?
                };
                points
                    .iter()
                    .zip(traces)
                    .enumerate()
                    .map(|(k, (p, t))| {
                        let name = format!("{prefix}_{k:03}.csv");
                        files.push(
                            json!({ "file": name, "photons": p.photons, "power_dbm": p.power_dbm }),
                        );
                        (name, t)
                    })
                    .collect()
            }
            SimKind::Cavity => {
                let noise = a.noise.unwrap_or(0.01);
                options.insert("noise_std".into(), json!(noise));
                let name = "cavity.csv".to_string();
                files.push(json!({ "file": name }));
                vec![(name, synth::cavity_trace(&cfg, noise, seed)?)]
            }
            SimKind::Ringdown => {
                let opts = ringdown_opts(&a.pulse, a.noise.unwrap_or(0.0));
                options.insert("probe_dbm".into(), json!(opts.probe_dbm));
                options.insert("pulse_dbm".into(), json!(opts.pulse_dbm));
                options.insert("pulse_s".into(), json!(opts.pulse_s));
                options.insert("decay_s".into(), json!(opts.decay_s));
                options.insert("samples".into(), json!(opts.samples));
                options.insert("noise_rel".into(), json!(opts.noise));
                let (occ, sc) = synth::ringdown_traces(&cfg, &opts, seed)?;
                files.push(json!({ "file": "ringdown_occupancy.csv" }));
                files.push(json!({ "file": "ringdown_scattered.csv" }));
                vec![
                    ("ringdown_occupancy.csv".into(), occ),
                    ("ringdown_scattered.csv".into(), sc),
                ]
            }
        };
        for (name, t) in &traces {
            t.write(&self.out(name)?)?;
            println!("{}", self.cli.out.join(name).display());
        }
        let kind = match a.kind {
            SimKind::Eit => "eit",
            SimKind::Cavity => "cavity",
            SimKind::Noise => "noise",
            SimKind::Ringdown => "ringdown",
        };
        let manifest = json!({
            "command": "simulate",
            "kind": kind,
            "seed": seed,
            "config": cfg,
            "options": options,
            "files": files,
        });
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write(&self.out("manifest.json")?, &text)
    }

    fn fit(&self, a: &FitArgs) -> Result<()> {
        let cfg = self.config()?;
        let trace = Trace::read(&a.trace)?;
        let name = a
            .trace
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let opts = FitOptions {
            magnitude: a.magnitude,
            jitter: a.jitter,
            jitter_hz: a.jitter_hz,
            untied: a.untied,
            two_exponential: a.two_exponential,
        };
        // input problems are reported before anything is written
        check_fit_input(&trace, a.kind)?;
        let outcome = fit_trace(&cfg, &trace, &name, a.kind, &opts, &self.cli.exclude);
        let s = stem(&a.trace);
        outcome.report.write(&self.out(&format!("{s}.fit.json"))?)?;
        if let Some(r) = &outcome.residual {
            r.write(&self.out(&format!("{s}.residual.csv"))?)?;
        }
        print_report(&outcome.report);
        outcome.status
    }

    fn cooling_curve(&self, a: &CoolingArgs) -> Result<()> {
        let cfg = self.config()?;
        let powers = a.powers_dbm.clone().unwrap_or_else(default_cooling_powers);
        let table = cooling_table(&cfg, &powers, self.cli.threads)?;
        let (name, text) = match self.cli.format {
            Format::Csv => ("cooling_curve.csv", table.to_csv()),
            Format::Json => ("cooling_curve.json", table.to_json()),
        };
        write(&self.out(name)?, &text)?;
        println!("{}", self.cli.out.join(name).display());
        if a.svg {
            let (svg, _) = cooling_plot(&table)?;
            write(&self.out("cooling_curve.svg")?, &svg)?;
            println!("{}", self.cli.out.join("cooling_curve.svg").display());
        }
        Ok(())
    }

    fn ringdown(&self, a: &RingdownArgs) -> Result<()> {
        let cfg = self.config()?;
        let opts = ringdown_opts(&a.pulse, a.noise);
        let (occ, sc) = synth::ringdown_traces(&cfg, &opts, self.cli.seed)?;
        occ.write(&self.out("ringdown_occupancy.csv")?)?;
        sc.write(&self.out("ringdown_scattered.csv")?)?;
        let mut outcome = fit_trace(
            &cfg,
            &occ,
            "ringdown_occupancy.csv",
            FitKind::Ringdown,
            &FitOptions::default(),
            &[],
        );
        let dev = cfg.device()?;
        let probe = cfg.tone(
            opts.probe_dbm,
            dev.port.omega_r - dev.omega_m,
            ToneRole::Probe,
        );
        let r = &mut outcome.report;
        r.derive("gamma_i_hz", rad_to_hz(dev.gamma_i));
        r.derive(
            "gamma_em_predicted_hz",
            rad_to_hz(dev.tone_damping(&probe)?),
        );
        r.derive("quality_factor", dev.omega_m / dev.gamma_i);
        r.write(&self.out("ringdown.fit.json")?)?;
        print_report(r);
        outcome.status
    }

    fn calibrate(&self, a: &CalibrateArgs) -> Result<()> {
        let cfg = self.config()?;
        let power = parse_power(&a.power_dbm)?;
        let c = calibrate(&cfg, power, a.detuning_hz)?;
        let mut t = Table::new(&[
            "power_dbm",
            "device_power_w",
            "device_power_dbm",
            "detuning_hz",
            "photons",
        ]);
        t.rows.push(vec![
            power,
            c.device_power_w,
            watts_to_dbm(c.device_power_w),
            c.detuning_hz,
            c.photons,
        ]);
        match self.cli.format {
            Format::Csv => print!("{}", t.to_csv()),
            Format::Json => print!("{}", t.to_json()),
        }
        Ok(())
    }

    fn extract_g0(&self, reports: &[PathBuf]) -> Result<()> {
        let reports = reports
            .iter()
            .map(|p| FitReport::read(p))
            .collect::<Result<Vec<_>>>()?;
        let est = g0_from_reports(&reports)?;
        let mut t = Table::new(&[
            "g0_hz",
            "g0_ci95_hz",
            "log_slope",
            "reduced_chi_square",
            "points",
        ]);
        t.rows.push(vec![
            rad_to_hz(est.g0),
            rad_to_hz(est.ci95),
            est.log_slope,
            est.reduced_chi_square,
            reports.len() as f64,
        ]);
        let (name, text) = match self.cli.format {
            Format::Csv => ("g0.csv", t.to_csv()),
            Format::Json => ("g0.json", t.to_json()),
        };
        write(&self.out(name)?, &text)?;
        print!("{text}");
        Ok(())
    }

    fn plot(&self, a: &PlotArgs) -> Result<()> {
        let s = stem(&a.input);
        let (svg, table) = match a.style {
            PlotStyle::Trace => trace_plot(&Trace::read(&a.input)?)?,
            PlotStyle::Cooling => {
                let text = fs::read_to_string(&a.input).map_err(|e| CliError::io(&a.input, e))?;
                cooling_plot(&Table::parse_csv(&text)?)?
            }
        };
        write(&self.out(&format!("{s}.svg"))?, &svg)?;
        write(&self.out(&format!("{s}.plot.csv"))?, &table.to_csv())?;
        println!("{}", self.cli.out.join(format!("{s}.svg")).display());
        Ok(())
    }
}

fn ringdown_opts(p: &crate::cli::PulseArgs, noise: f64) -> RingdownSynth {
    RingdownSynth {
        probe_dbm: p.probe_dbm,
        pulse_dbm: p.pulse_dbm,
        pulse_s: p.pulse_s,
        decay_s: p.decay_s,
        samples: p.samples,
        noise,
    }
}

/// Drive detuning in rad/s; the mechanical frequency unless given.
fn detuning(cfg: &DeviceConfig, detuning_hz: Option<f64>) -> Result<f64> {
    match detuning_hz {
        Some(d) if d.is_finite() => Ok(hz_to_rad(d)),
        Some(d) => Err(CliError::Usage(format!("invalid --detuning-hz: {d}"))),
        None => Ok(cfg.mode().omega_m),
    }
}

fn parse_power(s: &str) -> Result<f64> {
    if s.eq_ignore_ascii_case("off") {
        return Ok(f64::NEG_INFINITY);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| !v.is_nan() && *v != f64::INFINITY)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "invalid --power-dbm: `{s}` is neither a number nor `off`"
            ))
        })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub device_power_w: f64,
    pub detuning_hz: f64,
    pub photons: f64,
}

/// Device-plane power and intracavity photons of a tone `detuning_hz` below the cavity.
/// A power of −∞ dBm (the tone switched off) gives zero.
pub fn calibrate(
    cfg: &DeviceConfig,
    power_dbm: f64,
    detuning_hz: Option<f64>,
) -> Result<Calibration> {
    let port = cfg.port();
    let det = detuning(cfg, detuning_hz)?;
    let tone = cfg.tone(power_dbm, port.omega_r - det, ToneRole::Pump);
    if power_dbm == f64::NEG_INFINITY {
        debug_assert_eq!(dbm_to_watts(power_dbm), 0.0);
        return Ok(Calibration {
            device_power_w: 0.0,
            detuning_hz: rad_to_hz(det),
            photons: 0.0,
        });
    }
    Ok(Calibration {
        device_power_w: device_plane_power(&tone)?,
        detuning_hz: rad_to_hz(det),
        photons: intracavity_photons(&tone, &port)?,
    })
}

/// The power span of a typical cooling run: −20 to 22 dBm in 2 dB steps.
pub fn default_cooling_powers() -> Vec<f64> {
    (0..=21).map(|k| -20.0 + 2.0 * k as f64).collect()
}

pub const COOLING_COLUMNS: [&str; 7] = [
    "power_dbm",
    "n_d",
    "gamma_em_hz",
    "cooperativity",
    "n_m_ideal",
    "n_m_full",
    "n_m_langevin",
];

/// One row per red-sideband power: photons, back-action damping, cooperativity and the
/// occupancy from the ideal law, the rate equation and the linearized Langevin model.
pub fn cooling_table(
    cfg: &DeviceConfig,
    powers_dbm: &[f64],
    threads: Option<usize>,
) -> Result<Table> {
    if powers_dbm.is_empty() {
        return Err(CliError::Usage("invalid --powers-dbm: empty list".into()));
    }
    if let Some(w) = powers_dbm.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(CliError::Usage(format!(
            "invalid --powers-dbm: must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    if let Some(p) = powers_dbm.iter().find(|p| !p.is_finite()) {
        return Err(CliError::Usage(format!("invalid --powers-dbm: {p}")));
    }
    let dev = cfg.device()?;
    let baths = cfg.baths()?;
    let rows = synth::par_map(threads, powers_dbm, |_, &p| {
        let tone = cfg.tone(p, dev.port.omega_r - dev.omega_m, ToneRole::Pump);
        let n_d = intracavity_photons(&tone, &dev.port)?;
        let gamma_em = backaction_damping(n_d, dev.g0, dev.kappa());
        let c = gamma_em / dev.gamma_i;
        let rates = BackactionRates {
            gamma_i: dev.gamma_i,
            gamma_em,
            kappa_i: dev.port.kappa_i,
            kappa_e: dev.port.kappa_e,
            omega_m: dev.omega_m,
        };
        let full = cooling_steady_state(&baths, &rates, Sideband::Red)?;
        let langevin = synth::linearized(cfg, n_d, dev.omega_m)?.mechanical_occupancy(&baths)?;
        Ok(vec![
            p,
            n_d,
            rad_to_hz(gamma_em),
            c,
            ideal_cooling(baths.n_mech, c),
            full,
            langevin,
        ])
    })?;
    Ok(Table {
        columns: COOLING_COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows,
    })
}

/// Log-log occupancy versus photon number: rate-equation points over the ideal law.
pub fn cooling_plot(table: &Table) -> Result<(String, Table)> {
    let col = |n: &str| {
        table
            .column(n)
            .ok_or_else(|| CliError::Usage(format!("cooling table has no `{n}` column")))
    };
    let (n_d, full, ideal) = (col("n_d")?, col("n_m_full")?, col("n_m_ideal")?);
    if n_d.is_empty() {
        return Err(CliError::Usage("cooling table is empty".into()));
    }
    let series = [
        Series {
            label: "n_m".into(),
            x: n_d.clone(),
            y: full.clone(),
            mark: Mark::Points,
        },
        Series {
            label: "n_f/(1+C)".into(),
            x: n_d.clone(),
            y: ideal.clone(),
            mark: Mark::Dashed,
        },
    ];
    let svg = render_svg(
        "Sideband cooling",
        &Axis {
            label: "intracavity photons n_d".into(),
            log: true,
        },
        &Axis {
            label: "phonon occupancy n_m".into(),
            log: true,
        },
        &series,
    );
    let mut data = Table::new(&["n_d", "n_m_full", "n_m_ideal"]);
    data.rows = (0..n_d.len())
        .map(|k| vec![n_d[k], full[k], ideal[k]])
        .collect();
    Ok((svg, data))
}

/// SVG of a trace and the plotted (x, y) pairs.
pub fn trace_plot(trace: &Trace) -> Result<(String, Table)> {
    if trace.is_empty() {
        return Err(CliError::Usage("cannot plot an empty trace".into()));
    }
    let x = trace.grid.clone();
    let (y, xcol, ycol, title, xlabel, ylabel) = match (&trace.data, trace.kind) {
        (TraceData::Complex(v), _) => (
            v.iter().map(|z| z.norm()).collect::<Vec<_>>(),
            "freq_hz",
            "magnitude",
            "Reflection",
            "frequency (Hz)",
            "|S11|",
        ),
        (TraceData::Real(v), TraceKind::Psd) => (
            v.clone(),
            "freq_hz",
            "quanta",
            "Output noise",
            "frequency (Hz)",
            "noise (quanta)",
        ),
        (TraceData::Real(v), _) => (
            v.clone(),
            "t_s",
            "value",
            "Time series",
            "time (s)",
            "value",
        ),
    };
    let log_y = trace.kind == TraceKind::Timeseries && y.iter().all(|v| *v > 0.0);
    let svg = render_svg(
        title,
        &Axis {
            label: xlabel.into(),
            log: false,
        },
        &Axis {
            label: ylabel.into(),
            log: log_y,
        },
        &[Series {
            label: trace.kind.name().into(),
            x: x.clone(),
            y: y.clone(),
            mark: Mark::Line,
        }],
    );
    let mut data = Table::new(&[xcol, ycol]);
    data.rows = x.into_iter().zip(y).map(|(a, b)| vec![a, b]).collect();
    Ok((svg, data))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    pub magnitude: bool,
    pub jitter: JitterArg,
    pub jitter_hz: Option<f64>,
    pub untied: bool,
    pub two_exponential: bool,
}

/// Report, residual trace and exit status of one fit.
#[derive(Debug)]
pub struct FitOutcome {
    pub report: FitReport,
    pub residual: Option<Trace>,
    pub status: Result<()>,
}

fn kind_name(kind: FitKind) -> &'static str {
    match kind {
        FitKind::Eit => "eit",
        FitKind::Cavity => "cavity",
        FitKind::Noise => "noise",
        FitKind::Ringdown => "ringdown",
    }
}

/// Trace kind and size checks done before any fit.
pub fn check_fit_input(trace: &Trace, kind: FitKind) -> Result<()> {
    let want = match kind {
        FitKind::Eit | FitKind::Cavity => TraceKind::S11,
        FitKind::Noise => TraceKind::Psd,
        FitKind::Ringdown => TraceKind::Timeseries,
    };
    if trace.kind != want {
        return Err(CliError::Usage(format!(
            "a {} fit needs a {} trace, got {}",
            kind_name(kind),
            want.name(),
            trace.kind.name()
        )));
    }
    if trace.is_empty() {
        return Err(CliError::Usage("trace has no samples".into()));
    }
    Ok(())
}

fn drive_of(cfg: &DeviceConfig, trace: &Trace) -> Result<DriveReport> {
    let drive_hz = trace
        .meta_f64("drive_hz")
        .ok_or_else(|| CliError::Usage("trace metadata lacks `drive_hz`".into()))??;
    let power = trace.meta_f64("drive_power_dbm").transpose()?;
    let photons = match (trace.meta_f64("photons").transpose()?, power) {
        (Some(n), _) => n,
        (None, Some(p)) => {
            let port = cfg.port();
            intracavity_photons(&cfg.tone(p, hz_to_rad(drive_hz), ToneRole::Pump), &port)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "trace metadata lacks `photons` and `drive_power_dbm`".into(),
            ))
        }
    };
    if !(photons >= 0.0) {
        return Err(CliError::Usage(format!(
            "trace metadata `photons` is invalid: {photons}"
        )));
    }
    Ok(DriveReport {
        drive_hz,
        photons,
        power_dbm: power,
    })
}

fn observations(trace: &Trace, x: impl Fn(f64) -> f64) -> Observations {
    let xs = trace.grid.iter().map(|&g| x(g)).collect();
    match &trace.data {
        TraceData::Complex(y) => Observations::complex(xs, y.clone()),
        TraceData::Real(y) => Observations::real(xs, y.clone()),
    }
}

fn residual_trace(trace: &Trace, grid: Vec<f64>, fit: &FitResult) -> Trace {
    let t = match trace.kind {
        TraceKind::S11 => Trace::complex(grid, fit.residual_trace.clone()),
        k => Trace::real(k, grid, fit.residual_trace.iter().map(|z| z.re).collect()),
    };
    let excluded = fit.included.iter().filter(|b| !**b).count();
    t.with_meta("residual", "data-model")
        .with_meta("excluded_points", excluded)
}

fn status_of(report: &FitReport) -> Result<()> {
    if report.converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!(
            "fit of {} did not converge ({}{})",
            report.trace,
            report.termination,
            report
                .error
                .as_ref()
                .map(|e| format!(": {e}"))
                .unwrap_or_default()
        )))
    }
}

/// Fit `trace` with the model of `kind`. Failures still produce a report.
///
/// Exclusion windows are absolute frequencies (Hz) except for transparency fits, where
/// they are probe−drive frequencies: the axis the mechanical feature lives on.
pub fn fit_trace(
    cfg: &DeviceConfig,
    trace: &Trace,
    name: &str,
    kind: FitKind,
    opts: &FitOptions,
    exclusions: &[(f64, f64)],
) -> FitOutcome {
    let kname = kind_name(kind);
    let attempt = || -> Result<(FitReport, Option<Trace>)> {
        check_fit_input(trace, kind)?;
        match kind {
            FitKind::Eit => fit_eit(cfg, trace, name, opts, exclusions),
            FitKind::Cavity => fit_cavity(cfg, trace, name, opts, exclusions),
            FitKind::Noise => fit_noise(cfg, trace, name, opts, exclusions),
            FitKind::Ringdown => fit_ringdown(trace, name, opts, exclusions),
        }
    };
    match attempt() {
        Ok((mut report, residual)) => {
            report.exclusions_hz = exclusions.iter().map(|&(a, b)| [a, b]).collect();
            let status = status_of(&report);
            FitOutcome {
                report,
                residual,
                status,
            }
        }
        Err(e) => {
            let mut report = FitReport::failed(kname, name, &e.to_string());
            report.exclusions_hz = exclusions.iter().map(|&(a, b)| [a, b]).collect();
            FitOutcome {
                report,
                residual: None,
                status: Err(e),
            }
        }
    }
}

fn residual_mode(opts: &FitOptions) -> ResidualMode {
    if opts.magnitude {
        ResidualMode::Magnitude
    } else {
        ResidualMode::Complex
    }
}

fn fit_eit(
    cfg: &DeviceConfig,
    trace: &Trace,
    name: &str,
    opts: &FitOptions,
    exclusions: &[(f64, f64)],
) -> Result<(FitReport, Option<Trace>)> {
    let dev = cfg.device()?;
    let drive = drive_of(cfg, trace)?;
    let data = observations(trace, hz_to_rad);
    let guess = EitGuess {
        port: dev.port,
        omega_m: dev.omega_m,
        gamma_i: dev.gamma_i,
        coupling: drive.photons.sqrt() * dev.g0,
        omega_d: hz_to_rad(drive.drive_hz),
    };
    let sigma = hz_to_rad(opts.jitter_hz.unwrap_or(cfg.jitter.saturation_hz));
    let jitter = match opts.jitter {
        JitterArg::Off => JitterMode::Off,
        JitterArg::Fixed => JitterMode::Fixed(sigma),
        JitterArg::Free => JitterMode::Free(sigma),
    };
    let windows: Vec<ExclusionWindow> = exclusions
        .iter()
        .map(|&(lo, hi)| ExclusionWindow::from_hz(drive.drive_hz + lo, drive.drive_hz + hi))
        .collect();
    let options = EitFitOptions {
        residual_mode: residual_mode(opts),
        jitter,
        ..Default::default()
    };
    let fit = fit_eit_trace(&data, &guess, &windows, &options)?;
    let mut report = FitReport::from_fit("eit", name, &fit);
    let g = fit.estimate("coupling").unwrap_or(f64::NAN);
    let g_ci = fit.ci("coupling").unwrap_or(f64::NAN);
    let ga = fit.estimate("gamma_i").unwrap_or(f64::NAN);
    let kappa =
        fit.estimate("kappa_i").unwrap_or(f64::NAN) + fit.estimate("kappa_e").unwrap_or(f64::NAN);
    if drive.photons > 0.0 {
        report.derive("g0_hz", rad_to_hz(g / drive.photons.sqrt()));
        report.derive("g0_ci95_hz", rad_to_hz(g_ci / drive.photons.sqrt()));
    }
    report.derive("cooperativity", 4.0 * g * g / (kappa * ga));
    report.derive("gamma_em_hz", rad_to_hz(4.0 * g * g / kappa));
    report.derive("transparency_width_hz", rad_to_hz(ga + 4.0 * g * g / kappa));
    report.drive = Some(drive);
    let residual = residual_trace(trace, trace.grid.clone(), &fit);
    Ok((report, Some(residual)))
}

fn fit_cavity(
    cfg: &DeviceConfig,
    trace: &Trace,
    name: &str,
    opts: &FitOptions,
    exclusions: &[(f64, f64)],
) -> Result<(FitReport, Option<Trace>)> {
    let port = cfg.port();
    let data = observations(trace, hz_to_rad);
    let bg = port.background;
    let params = vec![
        ParamSpec::bounded("kappa_i", port.kappa_i, 0.0, f64::INFINITY),
        ParamSpec::bounded("kappa_e", port.kappa_e, 0.0, f64::INFINITY),
        ParamSpec::free("omega_r", port.omega_r),
        ParamSpec::bounded("amplitude", bg.amplitude, 0.0, f64::INFINITY),
        if opts.magnitude {
            ParamSpec::fixed("phase", bg.phase)
        } else {
            ParamSpec::free("phase", bg.phase)
        },
        ParamSpec::free("slope", bg.slope),
    ];
    let fit = fit_curve(&FitProblem {
        model: &CavityModel,
        data: &data,
        params,
        exclusions: exclusions
            .iter()
            .map(|&(lo, hi)| ExclusionWindow::from_hz(lo, hi))
            .collect(),
        residual_mode: residual_mode(opts),
        options: LmOptions::default(),
    })?;
    let mut report = FitReport::from_fit("cavity", name, &fit);
    let ki = fit.estimates[0];
    let ke = fit.estimates[1];
    report.derive("kappa_hz", rad_to_hz(ki + ke));
    report.derive("loaded_quality_factor", fit.estimates[2] / (ki + ke));
    let residual = residual_trace(trace, trace.grid.clone(), &fit);
    Ok((report, Some(residual)))
}

fn fit_noise(
    cfg: &DeviceConfig,
    trace: &Trace,
    name: &str,
    opts: &FitOptions,
    exclusions: &[(f64, f64)],
) -> Result<(FitReport, Option<Trace>)> {
    let drive = drive_of(cfg, trace)?;
    let fr = cfg.cavity.frequency_hz;
    let detuning = hz_to_rad(fr - drive.drive_hz);
    let sys = synth::linearized(cfg, drive.photons, detuning)?;
    let keep: Vec<usize> = (0..trace.len())
        .filter(|&k| {
            !exclusions
                .iter()
                .any(|&(lo, hi)| trace.grid[k] >= lo && trace.grid[k] <= hi)
        })
        .collect();
    let TraceData::Real(y) = &trace.data else {
        return Err(CliError::Usage("noise fits need a real trace".into()));
    };
    let grid: Vec<f64> = keep.iter().map(|&k| trace.grid[k]).collect();
    let data = Observations::real(
        grid.iter().map(|&f| hz_to_rad(f - fr)).collect(),
        keep.iter().map(|&k| y[k]).collect(),
    );
    let options = NoiseFitOptions {
        tied: !opts.untied,
        n_add: cfg.noise.added_noise,
        ..Default::default()
    };
    let r = fit_noise_spectrum(&data, &sys, cfg.port().omega_r, &options)?;
    let mut report = FitReport::from_fit("noise", name, &r.fit);
    report.derive("n_m", r.n_m);
    report.derive("n_m_ci95", r.n_m_ci95);
    report.derive("n_mech", r.n_mech);
    report.derive("n_mech_ci95", r.n_mech_ci95);
    report.derive("n_wg", r.n_wg);
    report.derive("n_wg_ci95", r.n_wg_ci95);
    report.derive("n_cav", r.n_cav);
    report.derive("n_cav_ci95", r.n_cav_ci95);
    for (key, t) in [
        ("mech_temperature_k", r.mech_temperature),
        ("wg_temperature_k", r.wg_temperature),
        ("cav_temperature_k", r.cav_temperature),
    ] {
        report.derived.insert(key.into(), t.and_then(finite));
    }
    report.derive("cooperativity", sys.backaction_damping() / sys.gamma_i);
    if r.unphysical {
        report
            .warnings
            .push("a fitted occupancy is significantly negative".into());
    }
    report.drive = Some(drive);
    let residual = residual_trace(trace, grid, &r.fit);
    Ok((report, Some(residual)))
}

fn fit_ringdown(
    trace: &Trace,
    name: &str,
    opts: &FitOptions,
    exclusions: &[(f64, f64)],
) -> Result<(FitReport, Option<Trace>)> {
    if !exclusions.is_empty() {
        return Err(CliError::Usage(
            "--exclude does not apply to ring-down fits".into(),
        ));
    }
    let TraceData::Real(y) = &trace.data else {
        return Err(CliError::Usage("ring-down fits need a real trace".into()));
    };
    let start_t = trace
        .meta_f64("pulse_end_s")
        .transpose()?
        .unwrap_or(trace.grid[0]);
    let start = trace
        .grid
        .iter()
        .position(|&t| t >= start_t)
        .unwrap_or(trace.grid.len());
    let (t, y) = (&trace.grid[start..], &y[start..]);
    let two = opts.two_exponential
        || trace
            .metadata
            .get("signal")
            .is_some_and(|s| s == "scattered");
    let (mut report, fit) = if two {
        let f = fit_two_exponential(t, y)?;
        let mut report = FitReport::from_fit("ringdown", name, &f.fit);
        report.derive("gamma_m_hz", rad_to_hz(f.slow_rate));
        report.derive("kappa_hz", rad_to_hz(f.fast_rate));
        (report, f.fit)
    } else {
        let fit = fit_exponential_decay(t, y)?;
        let mut report = FitReport::from_fit("ringdown", name, &fit);
        report.derive("gamma_m_hz", rad_to_hz(fit.estimates[1]));
        report.derive("gamma_m_ci95_hz", rad_to_hz(fit.ci95[1]));
        (report, fit)
    };
    report.derive("fit_start_s", t.first().copied().unwrap_or(f64::NAN));
    let residual = residual_trace(trace, t.to_vec(), &fit);
    Ok((report, Some(residual)))
}

/// Sweep points from transparency reports, sorted by photon number.
pub fn sweep_points(reports: &[FitReport]) -> Result<Vec<SweepPoint>> {
    let mut pts = reports
        .iter()
        .map(|r| {
            let drive = r.drive.as_ref().ok_or_else(|| {
                CliError::Usage(format!("report of {} has no drive information", r.trace))
            })?;
            let g = r.param("coupling_hz").ok_or_else(|| {
                CliError::Usage(format!("report of {} has no `coupling_hz`", r.trace))
            })?;
            if !r.converged {
                return Err(CliError::NonConvergence(format!(
                    "fit of {} did not converge",
                    r.trace
                )));
            }
            Ok(SweepPoint {
                drive_power_dbm: drive.power_dbm.unwrap_or(f64::NAN),
                n_d: drive.photons,
                coupling: hz_to_rad(g.estimate),
                coupling_ci95: g.ci95.map(hz_to_rad).unwrap_or(f64::INFINITY),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    pts.sort_by(|a, b| a.n_d.total_cmp(&b.n_d));
    Ok(pts)
}

pub fn g0_from_reports(reports: &[FitReport]) -> Result<emech_core::inference::G0Estimate> {
    Ok(extract_g0(&sweep_points(reports)?)?)
}

fn print_report(r: &FitReport) {
    println!("{} fit of {}: {}", r.kind, r.trace, r.termination);
    if let Some(e) = &r.error {
        println!("  error: {e}");
    }
    for p in &r.parameters {
        let ci = p
            .ci95
            .map(fmt_f64)
            .unwrap_or_else(|| "unconstrained".into());
        let tag = if p.free { "" } else { " (fixed)" };
        println!("  {} = {} ± {}{}", p.name, fmt_f64(p.estimate), ci, tag);
    }
    for (k, v) in &r.derived {
        println!("  {k} = {}", v.map(fmt_f64).unwrap_or_else(|| "n/a".into()));
    }
    for w in &r.warnings {
        println!("  warning: {w}");
    }
}
