use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "emech",
    version,
    about = "Cavity electromechanics: simulate, fit and calibrate"
)]
pub struct Cli {
    /// Device configuration (JSON).
    #[arg(long, global = true, env = "EMECH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed of all synthetic noise.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Frequency window LO:HI (Hz) left out of fits; repeatable.
    #[arg(long, global = true, value_parser = parse_window, allow_hyphen_values = true)]
    pub exclude: Vec<(f64, f64)>,
    /// Format of tables and printed results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads for sweeps (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic traces and a manifest.
    Simulate(SimulateArgs),
    /// Fit a trace and write a report plus residuals.
    Fit(FitArgs),
    /// Occupancy versus red-sideband drive power.
    CoolingCurve(CoolingArgs),
    /// Simulate a blue-pulse ring-down and fit the mechanical decay.
    Ringdown(RingdownArgs),
    /// Intracavity photon number of a tone.
    CalibratePhotons(CalibrateArgs),
    /// Vacuum coupling rate from transparency fits at several powers.
    ExtractG0(ExtractG0Args),
    /// Render a trace or a cooling table as SVG, with a CSV of the plotted data.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    Eit,
    Cavity,
    Noise,
    Ringdown,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Generator powers (dBm), comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub powers_dbm: Option<Vec<f64>>,
    /// Intracavity photon numbers, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub photons: Option<Vec<f64>>,
    /// Drive detuning below the cavity (Hz); defaults to the mechanical frequency.
    #[arg(long, allow_hyphen_values = true)]
    pub detuning_hz: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PulseArgs {
    #[arg(long, default_value_t = -20.0, allow_hyphen_values = true)]
    pub probe_dbm: f64,
    #[arg(long, default_value_t = -8.0, allow_hyphen_values = true)]
    pub pulse_dbm: f64,
    #[arg(long, default_value_t = 1.0)]
    pub pulse_s: f64,
    #[arg(long, default_value_t = 6.0)]
    pub decay_s: f64,
    /// Samples per segment.
    #[arg(long, default_value_t = 600)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    pub kind: SimKind,
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Noise std: |S11| units for eit/cavity, quanta for noise, relative for ringdown.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Let the mechanical frequency wander during each sweep.
    #[arg(long)]
    pub jitter: bool,
    /// Duration of one frequency sweep (s), for jitter.
    #[arg(long, default_value_t = 60.0)]
    pub sweep_s: f64,
    /// Add a weakly coupled spurious mechanical mode.
    #[arg(long)]
    pub spurious: bool,
    #[arg(long, default_value_t = -2100.0, allow_hyphen_values = true)]
    pub spurious_offset_hz: f64,
    /// Coupling of the spurious mode relative to the main one.
    #[arg(long, default_value_t = 0.2)]
    pub spurious_ratio: f64,
    /// Use averaged periodogram statistics with this many averages (noise kind).
    #[arg(long)]
    pub averages: Option<u32>,
    #[arg(long, default_value_t = 1000.0)]
    pub rbw_hz: f64,
    #[command(flatten)]
    pub pulse: PulseArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitKind {
    Eit,
    Cavity,
    Noise,
    Ringdown,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum JitterArg {
    #[default]
    Off,
    Fixed,
    Free,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub trace: PathBuf,
    #[arg(long, value_enum)]
    pub kind: FitKind,
    /// Fit |S11| instead of the complex reflection.
    #[arg(long)]
    pub magnitude: bool,
    /// Jitter blur of the transparency model.
    #[arg(long, value_enum, default_value_t = JitterArg::Off)]
    pub jitter: JitterArg,
    /// Jitter std (Hz); defaults to the configured saturation value.
    #[arg(long)]
    pub jitter_hz: Option<f64>,
    /// Fit waveguide and cavity occupancies separately.
    #[arg(long)]
    pub untied: bool,
    /// Two-exponential decay (cavity leakage plus mechanics).
    #[arg(long)]
    pub two_exponential: bool,
}

#[derive(Debug, Args)]
pub struct CoolingArgs {
    /// Red-sideband generator powers (dBm), strictly increasing.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub powers_dbm: Option<Vec<f64>>,
    /// Also write an SVG plot.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct RingdownArgs {
    #[command(flatten)]
    pub pulse: PulseArgs,
    /// Relative noise on the simulated traces.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Generator power (dBm), or `off`.
    #[arg(long, allow_hyphen_values = true)]
    pub power_dbm: String,
    /// Detuning below the cavity (Hz); defaults to the mechanical frequency.
    #[arg(long, allow_hyphen_values = true)]
    pub detuning_hz: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExtractG0Args {
    /// Transparency fit reports, one per drive power.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotStyle {
    Trace,
    Cooling,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = PlotStyle::Trace)]
    pub style: PlotStyle,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
    let lo: f64 = a
        .trim()
        .parse()
        .map_err(|_| format!("bad lower edge `{a}`"))?;
    let hi: f64 = b
        .trim()
        .parse()
        .map_err(|_| format!("bad upper edge `{b}`"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("window `{s}` needs finite LO < HI"));
    }
    Ok((lo, hi))
}
