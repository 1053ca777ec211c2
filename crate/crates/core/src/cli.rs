//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for invalid arguments, configuration or file
//! errors, 3 when the physics fails (every grid point is a pole, the
//! steady state cannot be found, a self-check exceeds its tolerance).
//!
//! Run configurations are TOML files with these sections:
//!
//! - `[direct]` or `[physical]` (exactly one): the parameter block.
//! - `[drive]`: probe amplitudes and relative phase.
//! - `[mode]`: options of the subcommand.
//! - `[output]`: `path`, `format` (`csv` or `json`) and `precision`.
//!
//! Rates are written either as bare numbers or `"<x> kappa"` (units of the
//! left cavity decay rate) or as `"<x> Hz"`, `"kHz"`, `"MHz"`, `"GHz"`
//! (cycles per second). One file must use a single family. Phases accept
//! radians or multiples of pi such as `"0.5 pi"`.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::dataset::{Column, Dataset, Format, DEFAULT_PRECISION};
use crate::delay::{delay_spectrum, DelayStatus};
use crate::model::{
    implied_steady_state, physical_setup, validate_regime_with, DriveConfig, PhysicalParams, RegimeThresholds,
    SteadyState, SystemParams, SPEED_OF_LIGHT,
};
use crate::oracle::{oracle_triangle, stable_coupling_windows, system_stability};
use crate::response::{check_grid, linspace, spectrum, Channel, SpectrumPoint};
use crate::sweep::{
    figure_dataset_with, fmt_f64, record_parameters, run_sweep, Axis, FigureId, FigureOptions, Observable,
    PointStatus, SweepParameter, SweepSpec,
};
use crate::{Error, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "OPTOSWITCH_THREADS";

/// Closed-form vs. linear-solve tolerance of the self-check.
pub const SELFCHECK_LINEAR_TOL: f64 = 1e-10;
/// Linear-solve vs. time-domain tolerance of the self-check.
pub const SELFCHECK_TIME_TOL: f64 = 1e-6;
pub const SELFCHECK_SAMPLES: usize = 200;
pub const SELFCHECK_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "optoswitch", version, about = "Photon transport in a passive-active optomechanical system")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output dataset path.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    pub format: Option<String>,
    /// Grid points per axis (or stability scan samples).
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Seed of the self-check randomization.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reflection/transmission rates and phases over a detuning grid.
    Spectrum,
    /// Group delays over a detuning grid.
    Delay,
    /// One- or two-dimensional parameter sweep.
    Sweep,
    /// Regenerate the data of one figure panel.
    Figure {
        /// fig2a..fig2e, fig3a, fig3b, fig4a..fig4e, fig5a, fig5b or fig6.
        id: String,
    },
    /// Eigenvalues and stable coupling windows.
    Stability,
    /// Check the modelling assumptions at the configured working point.
    Validate,
    /// Cross-check closed form, linear solve and time integration.
    Selfcheck {
        /// Number of random stable working points.
        #[arg(long)]
        samples: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Delay => "delay",
            Command::Sweep => "sweep",
            Command::Figure { .. } => "figure",
            Command::Stability => "stability",
            Command::Validate => "validate",
            Command::Selfcheck { .. } => "selfcheck",
        }
    }
}

/// How the parameter block was given.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamStyle {
    Direct,
    Physical,
}

/// Unit family of the rates in one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum UnitFamily {
    Kappa,
    Hertz,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Rate {
    Kappa(f64),
    /// Cycles per second.
    Hertz(f64),
}

impl Rate {
    fn family(self) -> UnitFamily {
        match self {
            Rate::Kappa(_) => UnitFamily::Kappa,
            Rate::Hertz(_) => UnitFamily::Hertz,
        }
    }

    fn angular(self) -> f64 {
        match self {
            Rate::Kappa(v) => v,
            Rate::Hertz(v) => TAU * v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeConfig {
    pub command: Option<String>,
    pub delta_min: f64,
    pub delta_max: f64,
    pub points: usize,
    /// Fixed detuning for sweeps.
    pub delta: f64,
    pub channels: Option<Vec<Channel>>,
    pub axis1: Option<Axis>,
    pub axis2: Option<Axis>,
    pub observables: Vec<Observable>,
    pub g_max: f64,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub thresholds: RegimeThresholds,
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self {
            command: None,
            delta_min: -5.0,
            delta_max: 5.0,
            points: 1001,
            delta: 0.0,
            channels: None,
            axis1: None,
            axis2: None,
            observables: vec![Observable::Rl, Observable::Tl],
            g_max: 3.0,
            samples: None,
            seed: None,
            thresholds: RegimeThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
    pub precision: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            path: None,
            format: None,
            precision: DEFAULT_PRECISION,
        }
    }
}

/// A parsed run configuration with rates normalized to κ₁.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub style: ParamStyle,
    pub units: UnitFamily,
    pub params: SystemParams,
    pub drive: DriveConfig,
    /// Self-consistent steady state, available for physical parameters.
    pub steady: Option<SteadyState>,
    pub mode: ModeConfig,
    pub output: OutputConfig,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_keys(table: &toml::Table, section: &str, allowed: &[&str]) -> Result<()> {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(cfg_err(format!("unknown key `{key}` in [{section}]")));
        }
    }
    Ok(())
}

fn number(value: &toml::Value, what: &str) -> Result<f64> {
    match value {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(cfg_err(format!("`{what}` must be a number"))),
    }
}

fn get_number(table: &toml::Table, key: &str) -> Result<Option<f64>> {
    table.get(key).map(|v| number(v, key)).transpose()
}

fn get_count(table: &toml::Table, key: &str) -> Result<Option<usize>> {
    match table.get(key) {
        None => Ok(None),
        Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
        Some(_) => Err(cfg_err(format!("`{key}` must be a non-negative integer"))),
    }
}

fn get_str<'a>(table: &'a toml::Table, key: &str) -> Result<Option<&'a str>> {
    match table.get(key) {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(cfg_err(format!("`{key}` must be a string"))),
    }
}

fn get_str_list(table: &toml::Table, key: &str) -> Result<Option<Vec<String>>> {
    match table.get(key) {
        None => Ok(None),
        Some(toml::Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| cfg_err(format!("`{key}` must list strings"))))
            .collect::<Result<Vec<_>>>()
            .map(Some),
        Some(_) => Err(cfg_err(format!("`{key}` must be an array of strings"))),
    }
}

fn get_pair(table: &toml::Table, key: &str) -> Result<Option<[f64; 2]>> {
    match table.get(key) {
        None => Ok(None),
        Some(toml::Value::Array(items)) if items.len() == 2 => {
            Ok(Some([number(&items[0], key)?, number(&items[1], key)?]))
        }
        Some(_) => Err(cfg_err(format!("`{key}` must be a two-element array [left, right]"))),
    }
}

fn parse_rate(value: &toml::Value, what: &str) -> Result<Rate> {
    let text = match value {
        toml::Value::String(s) => s.trim(),
        other => return Ok(Rate::Kappa(number(other, what)?)),
    };
    let split = text
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .ok_or_else(|| cfg_err(format!("`{what}` = \"{text}\" lacks a unit (kappa, Hz, kHz, MHz, GHz)")))?;
    let (num, unit) = text.split_at(split);
    let x: f64 = num
        .trim()
        .parse()
        .map_err(|_| cfg_err(format!("`{what}` = \"{text}\" does not start with a number")))?;
    Ok(match unit.trim() {
        "kappa" | "κ" => Rate::Kappa(x),
        "Hz" => Rate::Hertz(x),
        "kHz" => Rate::Hertz(x * 1e3),
        "MHz" => Rate::Hertz(x * 1e6),
        "GHz" => Rate::Hertz(x * 1e9),
        other => return Err(cfg_err(format!("`{what}` has unknown unit `{other}`"))),
    })
}

/// Radians, or a multiple of pi written as `"pi"`, `"-0.5 pi"`, `"2pi"`.
fn parse_phase(value: &toml::Value, what: &str) -> Result<f64> {
    let text = match value {
        toml::Value::String(s) => s.trim(),
        other => return number(other, what),
    };
    let body = text
        .strip_suffix("pi")
        .or_else(|| text.strip_suffix('π'))
        .ok_or_else(|| cfg_err(format!("`{what}` = \"{text}\" must be a number or a multiple of pi")))?
        .trim()
        .trim_end_matches('*')
        .trim();
    let factor = match body {
        "" | "+" => 1.0,
        "-" => -1.0,
        b => b
            .parse::<f64>()
            .map_err(|_| cfg_err(format!("`{what}` = \"{text}\" has a malformed pi multiple")))?,
    };
    Ok(factor * PI)
}

/// Collects every rate of a configuration so the unit family can be
/// checked once all sections are read.
#[derive(Default)]
struct RateLog {
    families: BTreeSet<UnitFamily>,
}

impl RateLog {
    fn read(&mut self, table: &toml::Table, key: &str) -> Result<Option<Rate>> {
        let rate = table.get(key).map(|v| parse_rate(v, key)).transpose()?;
        if let Some(r) = rate {
            self.families.insert(r.family());
        }
        Ok(rate)
    }

    fn family(&self) -> Result<UnitFamily> {
        match self.families.len() {
            0 | 1 => Ok(self.families.first().copied().unwrap_or(UnitFamily::Kappa)),
            _ => Err(cfg_err("rates mix units of kappa with Hz-based units")),
        }
    }
}

/// Converts rates to the normalized unit once it is known.
#[derive(Clone, Copy)]
struct Normalizer {
    /// rad/s per unit.
    rate_unit: f64,
}

impl Normalizer {
    fn apply(self, rate: Rate) -> f64 {
        match rate {
            Rate::Kappa(v) => v,
            Rate::Hertz(v) => TAU * v / self.rate_unit,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let root: toml::Table = text.parse().map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
        check_keys(&root, "root", &["direct", "physical", "drive", "mode", "output"])?;
        let section = |name: &str| -> Result<Option<&toml::Table>> {
            match root.get(name) {
                None => Ok(None),
                Some(toml::Value::Table(t)) => Ok(Some(t)),
                Some(_) => Err(cfg_err(format!("`{name}` must be a section"))),
            }
        };
        let empty = toml::Table::new();
        let drive_t = section("drive")?.unwrap_or(&empty);
        let mode_t = section("mode")?.unwrap_or(&empty);
        let output_t = section("output")?.unwrap_or(&empty);
        let mut log = RateLog::default();

        let (style, params, drive, steady) = match (section("direct")?, section("physical")?) {
            (Some(_), Some(_)) => return Err(cfg_err("give exactly one of [direct] and [physical], not both")),
            (None, None) => return Err(cfg_err("missing parameter block: add [direct] or [physical]")),
            (Some(t), None) => {
                let (p, d) = parse_direct(t, drive_t, &mut log)?;
                (ParamStyle::Direct, p, d, None)
            }
            (None, Some(t)) => {
                let (p, d, s) = parse_physical(t, drive_t, &mut log)?;
                (ParamStyle::Physical, p, d, Some(s))
            }
        };
        let norm = Normalizer {
            rate_unit: params.rate_unit,
        };
        let mode = parse_mode(mode_t, &mut log, norm)?;
        let units = log.family()?;
        if style == ParamStyle::Physical && units == UnitFamily::Kappa && !log.families.is_empty() {
            return Err(cfg_err("physical configurations need Hz-based rate units"));
        }
        let output = parse_output(output_t)?;
        Ok(Self {
            style,
            units,
            params,
            drive,
            steady,
            mode,
            output,
        })
    }
}

fn parse_drive(t: &toml::Table, default_probes: [f64; 2]) -> Result<DriveConfig> {
    check_keys(t, "drive", &["probe_left", "probe_right", "theta"])?;
    let drive = DriveConfig {
        probe_left: get_number(t, "probe_left")?.unwrap_or(default_probes[0]),
        probe_right: get_number(t, "probe_right")?.unwrap_or(default_probes[1]),
        phase: t.get("theta").map(|v| parse_phase(v, "theta")).transpose()?.unwrap_or(0.0),
        ..DriveConfig::default()
    };
    drive.validate()?;
    Ok(drive)
}

fn parse_direct(t: &toml::Table, drive_t: &toml::Table, log: &mut RateLog) -> Result<(SystemParams, DriveConfig)> {
    const RATES: [&str; 7] = ["kappa1", "kappa2", "gamma_m", "omega_m", "g0", "G", "detuning"];
    check_keys(t, "direct", &[&RATES[..], &["n", "rate_unit"]].concat())?;
    let mut rates = Vec::with_capacity(RATES.len());
    for key in RATES {
        rates.push(log.read(t, key)?);
    }
    let family = log.family()?;
    let reference = SystemParams::gain_balanced(1.0);
    let norm = match family {
        UnitFamily::Kappa => {
            let rate_unit = match t.get("rate_unit") {
                None => reference.rate_unit,
                Some(v) => match parse_rate(v, "rate_unit")? {
                    Rate::Hertz(hz) => TAU * hz,
                    Rate::Kappa(_) => return Err(cfg_err("`rate_unit` is the physical size of kappa; give it in Hz")),
                },
            };
            Normalizer { rate_unit }
        }
        UnitFamily::Hertz => {
            if t.contains_key("rate_unit") {
                return Err(cfg_err("`rate_unit` is implied by `kappa1` when rates are given in Hz"));
            }
            let kappa1 = rates[0].ok_or_else(|| cfg_err("Hz-based [direct] parameters need `kappa1`"))?;
            Normalizer {
                rate_unit: kappa1.angular(),
            }
        }
    };
    let get = |k: usize, default: f64| rates[k].map_or(default, |r| norm.apply(r));
    let omega_m = get(3, reference.omega_m * reference.rate_unit / norm.rate_unit);
    let params = SystemParams {
        kappa1: get(0, 1.0),
        kappa2: get(1, -get(0, 1.0)),
        gamma_m: get(2, get(0, 1.0)),
        omega_m,
        g0: get(4, reference.g0 * reference.rate_unit / norm.rate_unit),
        coupling: rates[5].map(|r| norm.apply(r)).ok_or_else(|| cfg_err("[direct] needs the coupling `G`"))?,
        photon_ratio: get_number(t, "n")?.unwrap_or(1.0),
        detuning: get(6, omega_m),
        rate_unit: norm.rate_unit,
    };
    params.validate()?;
    Ok((params, parse_drive(drive_t, [1.0, 0.0])?))
}

fn parse_physical(
    t: &toml::Table,
    drive_t: &toml::Table,
    log: &mut RateLog,
) -> Result<(SystemParams, DriveConfig, SteadyState)> {
    const RATES: [&str; 5] = ["kappa1", "kappa2", "gamma_m", "omega_m", "cavity_detuning"];
    check_keys(
        t,
        "physical",
        &[&RATES[..], &["cavity_length", "oscillator_mass", "wavelength", "control_powers", "probe_powers"]].concat(),
    )?;
    let mut phys = PhysicalParams::reference_device();
    let mut rates = Vec::with_capacity(RATES.len());
    for key in RATES {
        let rate = log.read(t, key)?;
        if let Some(Rate::Kappa(_)) = rate {
            return Err(cfg_err(format!("[physical] `{key}` needs a Hz-based unit")));
        }
        rates.push(rate.map(Rate::angular));
    }
    if let Some(v) = rates[0] {
        phys.decay_left = v;
    }
    phys.decay_right = rates[1].unwrap_or(-phys.decay_left);
    phys.mech_damping = rates[2].unwrap_or(phys.decay_left);
    if let Some(v) = rates[3] {
        phys.mech_freq = v;
    }
    if let Some(v) = get_number(t, "cavity_length")? {
        phys.cavity_length = v;
    }
    if let Some(v) = get_number(t, "oscillator_mass")? {
        phys.oscillator_mass = v;
    }
    if let Some(lambda) = get_number(t, "wavelength")? {
        if !(lambda > 0.0) {
            return Err(cfg_err("`wavelength` must be positive"));
        }
        phys.control_freq = TAU * SPEED_OF_LIGHT / lambda;
    }
    phys.cavity_freq = phys.control_freq + rates[4].unwrap_or(phys.mech_freq);
    if let Some(p) = get_pair(t, "control_powers")? {
        phys.control_powers = p;
    }
    if let Some(p) = get_pair(t, "probe_powers")? {
        phys.probe_powers = p;
    }
    phys.validate()?;
    let [pl, pr] = phys.probe_amplitudes();
    let drive = parse_drive(drive_t, [pl / phys.decay_left, pr / phys.decay_left])?;
    let setup = physical_setup(&phys, &drive)?;
    Ok((setup.params, setup.drive, setup.steady))
}

fn parse_axis(value: &toml::Value, key: &str, log: &mut RateLog, norm: Normalizer) -> Result<Axis> {
    let t = value.as_table().ok_or_else(|| cfg_err(format!("`{key}` must be a table")))?;
    check_keys(t, key, &["parameter", "min", "max", "count"])?;
    let parameter: SweepParameter = get_str(t, "parameter")?
        .ok_or_else(|| cfg_err(format!("`{key}` needs `parameter`")))?
        .parse()
        .map_err(|e: Error| cfg_err(e.to_string()))?;
    let bound = |name: &str, log: &mut RateLog| -> Result<f64> {
        let v = t.get(name).ok_or_else(|| cfg_err(format!("`{key}` needs `{name}`")))?;
        match parameter {
            SweepParameter::Phase => parse_phase(v, name),
            SweepParameter::PhotonRatio | SweepParameter::ProbeRatio => number(v, name),
            _ => {
                let r = log.read(t, name)?.expect("present");
                Ok(norm.apply(r))
            }
        }
    };
    let min = bound("min", log)?;
    let max = bound("max", log)?;
    let count = get_count(t, "count")?.ok_or_else(|| cfg_err(format!("`{key}` needs `count`")))?;
    Ok(Axis::new(parameter, min, max, count))
}

fn parse_mode(t: &toml::Table, log: &mut RateLog, norm: Normalizer) -> Result<ModeConfig> {
    check_keys(
        t,
        "mode",
        &[
            "command",
            "delta_min",
            "delta_max",
            "points",
            "delta",
            "channels",
            "axis1",
            "axis2",
            "observables",
            "g_max",
            "samples",
            "seed",
            "much_greater",
            "approx_rel",
        ],
    )?;
    let mut m = ModeConfig::default();
    m.command = get_str(t, "command")?.map(str::to_string);
    let mut rate = |key: &str, slot: &mut f64| -> Result<()> {
        if let Some(r) = log.read(t, key)? {
            *slot = norm.apply(r);
        }
        Ok(())
    };
    rate("delta_min", &mut m.delta_min)?;
    rate("delta_max", &mut m.delta_max)?;
    rate("delta", &mut m.delta)?;
    rate("g_max", &mut m.g_max)?;
    if let Some(p) = get_count(t, "points")? {
        m.points = p;
    }
    if let Some(list) = get_str_list(t, "channels")? {
        m.channels = Some(
            list.iter()
                .map(|s| s.parse::<Channel>().map_err(|e| cfg_err(format!("{e}"))))
                .collect::<Result<_>>()?,
        );
    }
    if let Some(list) = get_str_list(t, "observables")? {
        m.observables = list
            .iter()
            .map(|s| s.parse::<Observable>().map_err(|e| cfg_err(e.to_string())))
            .collect::<Result<_>>()?;
    }
    m.axis1 = t.get("axis1").map(|v| parse_axis(v, "axis1", log, norm)).transpose()?;
    m.axis2 = t.get("axis2").map(|v| parse_axis(v, "axis2", log, norm)).transpose()?;
    m.samples = get_count(t, "samples")?;
    m.seed = match t.get("seed") {
        None => None,
        Some(toml::Value::Integer(i)) if *i >= 0 => Some(*i as u64),
        Some(_) => return Err(cfg_err("`seed` must be a non-negative integer")),
    };
    if let Some(v) = get_number(t, "much_greater")? {
        m.thresholds.much_greater = v;
    }
    if let Some(v) = get_number(t, "approx_rel")? {
        m.thresholds.approx_rel = v;
    }
    Ok(m)
}

fn parse_output(t: &toml::Table) -> Result<OutputConfig> {
    check_keys(t, "output", &["path", "format", "precision"])?;
    let precision = get_count(t, "precision")?.unwrap_or(DEFAULT_PRECISION);
    if !(1..=17).contains(&precision) {
        return Err(cfg_err("`precision` must be between 1 and 17 significant digits"));
    }
    Ok(OutputConfig {
        path: get_str(t, "path")?.map(PathBuf::from),
        format: get_str(t, "format")?.map(str::parse).transpose()?,
        precision,
    })
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                2
            } else {
                3
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| cfg_err(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

struct Context<'a> {
    cli: &'a Cli,
    config: Option<RunConfig>,
}

impl Context<'_> {
    fn config(&self) -> Result<&RunConfig> {
        self.config
            .as_ref()
            .ok_or_else(|| cfg_err(format!("`{}` needs --config <path>", self.cli.command.name())))
    }

    fn precision(&self) -> usize {
        self.config.as_ref().map_or(DEFAULT_PRECISION, |c| c.output.precision)
    }

    fn out_path(&self, default: Option<PathBuf>) -> Option<PathBuf> {
        self.cli
            .out
            .clone()
            .or_else(|| self.config.as_ref().and_then(|c| c.output.path.clone()))
            .or(default)
    }

    fn format(&self, path: &Path) -> Result<Format> {
        if let Some(f) = &self.cli.format {
            return f.parse();
        }
        if let Some(f) = self.config.as_ref().and_then(|c| c.output.format) {
            return Ok(f);
        }
        Ok(match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Csv,
        })
    }

    fn default_extension(&self) -> String {
        self.cli
            .format
            .clone()
            .or_else(|| self.config.as_ref().and_then(|c| c.output.format).map(|f| f.to_string()))
            .unwrap_or_else(|| "csv".into())
    }

    /// Writes `ds` when an output path is known and reports where.
    fn emit(&self, ds: &Dataset, default: Option<PathBuf>) -> Result<()> {
        let Some(path) = self.out_path(default) else {
            return Ok(());
        };
        if let Some(cfg) = &self.cli.config {
            if same_file(cfg, &path) {
                return Err(cfg_err("refusing to overwrite the configuration file"));
            }
        }
        let format = self.format(&path)?;
        ds.write(&path, format, self.precision())?;
        println!("wrote {} rows to {}", ds.rows.len(), path.display());
        Ok(())
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let config = cli.config.as_deref().map(RunConfig::load).transpose()?;
    if let Some(expected) = config.as_ref().and_then(|c| c.mode.command.as_deref()) {
        if expected != cli.command.name() {
            return Err(cfg_err(format!(
                "configuration is for `{expected}`, not `{}`",
                cli.command.name()
            )));
        }
    }
    let ctx = Context { cli, config };
    match &cli.command {
        Command::Spectrum => cmd_spectrum(&ctx),
        Command::Delay => cmd_delay(&ctx),
        Command::Sweep => cmd_sweep(&ctx),
        Command::Figure { id } => cmd_figure(&ctx, id),
        Command::Stability => cmd_stability(&ctx),
        Command::Validate => cmd_validate(&ctx),
        Command::Selfcheck { samples } => cmd_selfcheck(&ctx, *samples),
    }
}

fn detuning_grid(ctx: &Context, cfg: &RunConfig) -> Result<Vec<f64>> {
    let points = ctx.cli.grid.unwrap_or(cfg.mode.points);
    if points < 2 {
        return Err(Error::InvalidGrid("at least 2 grid points are needed".into()));
    }
    let grid = linspace(cfg.mode.delta_min, cfg.mode.delta_max, points);
    check_grid(&grid)?;
    Ok(grid)
}

/// `name min=… max=… argmax_delta=…` over the defined entries of a column.
fn column_summary(name: &str, xs: &[f64], values: &[f64]) -> Option<String> {
    let mut best: Option<(f64, f64, f64)> = None;
    for (&x, &v) in xs.iter().zip(values) {
        if v.is_nan() {
            continue;
        }
        best = Some(match best {
            None => (v, v, x),
            Some((lo, hi, at)) => (lo.min(v), if v > hi { v } else { hi }, if v > hi { x } else { at }),
        });
    }
    best.map(|(lo, hi, at)| format!("{name} min={lo:.6} max={hi:.6} argmax={at:.6}"))
}

fn cmd_spectrum(ctx: &Context) -> Result<()> {
    let cfg = ctx.config()?;
    let grid = detuning_grid(ctx, cfg)?;
    let points = spectrum(&cfg.params, &cfg.drive, &grid)?;
    let poles = points.iter().filter(|p| p.value().is_none()).count();
    if poles == points.len() {
        return Err(Error::NoValidPoints("every detuning is a response pole".into()));
    }

    let mut columns = vec![Column::new("delta", "kappa")];
    for c in Channel::ALL {
        columns.push(Column::nullable(ratio_name(c), "1"));
    }
    for c in Channel::ALL {
        columns.push(Column::nullable(format!("phase_{c}"), "rad"));
    }
    for c in Channel::ALL {
        columns.push(Column::new(format!("status_{c}"), "code"));
    }
    let mut ds = Dataset::new(columns);
    for p in &points {
        let mut row = vec![p.delta()];
        let mut phases = Vec::with_capacity(4);
        let mut statuses = Vec::with_capacity(4);
        for c in Channel::ALL {
            let (ratio, phase, status) = match p {
                SpectrumPoint::Pole { .. } => (f64::NAN, f64::NAN, PointStatus::Pole),
                SpectrumPoint::Value(t) => match (t.ratio(c), t.phase(c)) {
                    (None, _) => (f64::NAN, f64::NAN, PointStatus::UndefinedChannel),
                    (Some(r), _) if r == 0.0 => (r, f64::NAN, PointStatus::UndefinedPhase),
                    (Some(r), ph) => (r, ph.unwrap_or(f64::NAN), PointStatus::Ok),
                },
            };
            row.push(ratio);
            phases.push(phase);
            statuses.push(f64::from(status.code()));
        }
        row.extend(phases);
        row.extend(statuses);
        ds.push_row(row)?;
    }
    ds.set_meta("command", "spectrum");
    ds.set_meta("status_codes", PointStatus::LEGEND);
    record_parameters(&mut ds, &cfg.params, &cfg.drive, None, &[]);

    let xs = ds.column("delta").expect("delta column");
    let parts: Vec<String> = Channel::ALL
        .iter()
        .filter_map(|&c| column_summary(ratio_name(c), &xs, &ds.column(ratio_name(c)).expect("column")))
        .collect();
    println!("spectrum: {} points, {} poles; {}", points.len(), poles, parts.join("; "));
    ctx.emit(&ds, None)
}

fn ratio_name(c: Channel) -> &'static str {
    match c {
        Channel::Rl => "R_l",
        Channel::Tl => "T_l",
        Channel::Rr => "R_r",
        Channel::Tr => "T_r",
    }
}

fn cmd_delay(ctx: &Context) -> Result<()> {
    let cfg = ctx.config()?;
    let grid = detuning_grid(ctx, cfg)?;
    let channels: Vec<Channel> = match &cfg.mode.channels {
        Some(list) => list.clone(),
        None => Channel::ALL.into_iter().filter(|c| c.probe(&cfg.drive) > 0.0).collect(),
    };
    if channels.is_empty() {
        return Err(Error::NoProbe);
    }
    let spectra = channels
        .iter()
        .map(|&c| delay_spectrum(&cfg.params, &cfg.drive, &grid, c))
        .collect::<Result<Vec<_>>>()?;
    let valid = spectra.iter().flatten().filter(|p| p.status == DelayStatus::Ok).count();
    if valid == 0 {
        return Err(Error::NoValidPoints("no detuning yields a group delay".into()));
    }

    let mut columns = vec![Column::new("delta", "kappa")];
    for c in &channels {
        columns.push(Column::nullable(format!("tau_{c}"), "1/kappa"));
    }
    for c in &channels {
        columns.push(Column::nullable(format!("phase_{c}"), "rad"));
    }
    for c in &channels {
        columns.push(Column::new(format!("branch_{c}"), "1"));
    }
    for c in &channels {
        columns.push(Column::new(format!("status_{c}"), "code"));
    }
    let mut ds = Dataset::new(columns);
    for (k, &delta) in grid.iter().enumerate() {
        let mut row = vec![delta];
        row.extend(spectra.iter().map(|s| s[k].tau.unwrap_or(f64::NAN)));
        row.extend(spectra.iter().map(|s| s[k].phase.unwrap_or(f64::NAN)));
        row.extend(spectra.iter().map(|s| s[k].branch as f64));
        row.extend(spectra.iter().map(|s| f64::from(s[k].status.code())));
        ds.push_row(row)?;
    }
    ds.set_meta("command", "delay");
    ds.set_meta("status_codes", "0 ok; 1 pole; 2 pole_adjacent; 3 phase_jump; 4 undefined_phase");
    record_parameters(&mut ds, &cfg.params, &cfg.drive, None, &[]);

    let parts: Vec<String> = channels
        .iter()
        .filter_map(|c| {
            let name = format!("tau_{c}");
            column_summary(&name, &grid, &ds.column(&name).expect("column"))
        })
        .collect();
    println!("delay: {} points; {}", grid.len(), parts.join("; "));
    ctx.emit(&ds, None)
}

fn dataset_summary(ds: &Dataset, x: &str, names: &[String]) -> String {
    let xs = ds.column(x).unwrap_or_default();
    names
        .iter()
        .filter_map(|n| ds.column(n).and_then(|v| column_summary(n, &xs, &v)))
        .collect::<Vec<_>>()
        .join("; ")
}

fn cmd_sweep(ctx: &Context) -> Result<()> {
    let cfg = ctx.config()?;
    let mut axis1 = cfg.mode.axis1.ok_or_else(|| cfg_err("sweep needs [mode] axis1"))?;
    let mut axis2 = cfg.mode.axis2;
    if let Some(n) = ctx.cli.grid {
        axis1.count = n;
        if let Some(a) = axis2.as_mut() {
            a.count = n;
        }
    }
    let spec = SweepSpec {
        axis1,
        axis2,
        params: cfg.params,
        drive: cfg.drive,
        delta: cfg.mode.delta,
        observables: cfg.mode.observables.clone(),
    };
    let ds = run_sweep(&spec)?;
    let names: Vec<String> = spec.observables.iter().map(|o| o.name().to_string()).collect();
    println!(
        "sweep: {} rows; {}",
        ds.rows.len(),
        dataset_summary(&ds, axis1.parameter.name(), &names)
    );
    ctx.emit(&ds, None)
}

fn cmd_figure(ctx: &Context, id: &str) -> Result<()> {
    let id: FigureId = id.parse()?;
    let mut opts = FigureOptions::default();
    if let Some(n) = ctx.cli.grid {
        opts.points = n;
        opts.surface_points = n;
    }
    let ds = figure_dataset_with(id, opts)?;
    let names: Vec<String> = ds
        .columns
        .iter()
        .filter(|c| c.nullable)
        .map(|c| c.name.clone())
        .collect();
    let x = ds.columns.first().map(|c| c.name.clone()).unwrap_or_default();
    println!("{id}: {} rows; {}", ds.rows.len(), dataset_summary(&ds, &x, &names));
    let default = PathBuf::from(format!("{id}.{}", ctx.default_extension()));
    ctx.emit(&ds, Some(default))
}

fn cmd_stability(ctx: &Context) -> Result<()> {
    let cfg = ctx.config()?;
    let report = system_stability(&cfg.params);
    for (k, z) in report.eigenvalues.iter().enumerate() {
        println!("lambda_{} = {:+.12} {:+.12}i", k + 1, z.re, z.im);
    }
    println!(
        "max real part {:+.12}: {}",
        report.max_real_part,
        if report.stable { "stable" } else { "unstable" }
    );
    let samples = ctx.cli.grid.or(cfg.mode.samples).unwrap_or(301).max(2);
    let scan = stable_coupling_windows(&cfg.params, cfg.mode.g_max, samples);
    if scan.windows.is_empty() {
        println!("stable G window in [0, {}]: none", scan.g_max);
    }
    for w in &scan.windows {
        let end = if w.open_end {
            format!("{} (scan limit)", w.end)
        } else {
            format!("{:.12}", w.end)
        };
        println!("stable G window: [{:.12}, {end}]", w.start);
    }
    if !scan.boundaries.is_empty() {
        let list: Vec<String> = scan.boundaries.iter().map(|b| format!("{b:.12}")).collect();
        println!("stability boundaries at G = {}", list.join(", "));
    }
    println!(
        "most stable sampled G = {:.6} (max real part {:+.6})",
        scan.most_stable.0, scan.most_stable.1
    );

    if ctx.out_path(None).is_some() {
        let gs = linspace(0.0, cfg.mode.g_max, samples);
        let values: Vec<f64> = gs
            .par_iter()
            .map(|&g| {
                let mut p = cfg.params;
                p.coupling = g;
                system_stability(&p).max_real_part
            })
            .collect();
        let mut ds = Dataset::new(vec![Column::new("G", "kappa"), Column::new("max_real_part", "kappa")]);
        for (g, v) in gs.into_iter().zip(values) {
            ds.push_row(vec![g, v])?;
        }
        ds.set_meta("command", "stability");
        let bounds: Vec<String> = scan.boundaries.iter().map(|b| fmt_f64(*b)).collect();
        ds.set_meta("boundaries", bounds.join(","));
        record_parameters(&mut ds, &cfg.params, &cfg.drive, None, &["G"]);
        ctx.emit(&ds, None)?;
    }
    Ok(())
}

fn cmd_validate(ctx: &Context) -> Result<()> {
    let cfg = ctx.config()?;
    let steady = match cfg.steady {
        Some(s) => s,
        None => implied_steady_state(&cfg.params)?,
    };
    let report = validate_regime_with(&cfg.params, &steady, &cfg.mode.thresholds);
    for (name, check) in report.checks() {
        println!("{name:<24} {:<4} margin {:.6e}", if check.ok { "ok" } else { "FAIL" }, check.margin + 0.0);
    }
    println!(
        "G = {:.6} kappa, n = {:.6}; regime {}",
        cfg.params.coupling,
        cfg.params.photon_ratio,
        if report.all_ok() { "valid" } else { "violated" }
    );
    Ok(())
}

fn cmd_selfcheck(ctx: &Context, samples: Option<usize>) -> Result<()> {
    let mode = ctx.config.as_ref().map(|c| &c.mode);
    let samples = samples.or(mode.and_then(|m| m.samples)).unwrap_or(SELFCHECK_SAMPLES);
    let seed = ctx.cli.seed.or(mode.and_then(|m| m.seed)).unwrap_or(SELFCHECK_SEED);
    if samples == 0 {
        return Err(cfg_err("selfcheck needs at least one sample"));
    }
    let r = oracle_triangle(samples, seed)?;
    println!("selfcheck: {} stable draws (seed {seed}, {} rejected)", r.samples, r.rejected);
    println!("max rel deviation closed form vs linear solve: {:.3e}", r.closed_vs_linear);
    println!("max rel deviation linear solve vs time domain: {:.3e}", r.linear_vs_time);
    println!("max rel deviation closed form vs time domain:  {:.3e}", r.closed_vs_time);
    println!("max linear-solve residual:                     {:.3e}", r.max_residual);
    let _ = std::io::stdout().flush();
    if r.closed_vs_linear >= SELFCHECK_LINEAR_TOL || r.linear_vs_time >= SELFCHECK_TIME_TOL {
        return Err(Error::SelfcheckFailed(format!(
            "deviations {:.3e} / {:.3e} exceed {SELFCHECK_LINEAR_TOL:e} / {SELFCHECK_TIME_TOL:e}",
            r.closed_vs_linear, r.linear_vs_time
        )));
    }
    println!("selfcheck passed");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_parsing() {
        let v = |s: &str| toml::Value::String(s.into());
        assert_eq!(parse_rate(&v("215 kHz"), "x").unwrap(), Rate::Hertz(215e3));
        assert_eq!(parse_rate(&v("-1.5e2Hz"), "x").unwrap(), Rate::Hertz(-150.0));
        assert_eq!(parse_rate(&v("0.7 kappa"), "x").unwrap(), Rate::Kappa(0.7));
        assert_eq!(parse_rate(&toml::Value::Integer(2), "x").unwrap(), Rate::Kappa(2.0));
        assert!(parse_rate(&v("3"), "x").is_err());
        assert!(parse_rate(&v("3 parsecs"), "x").is_err());
    }

    #[test]
    fn phase_parsing() {
        let v = |s: &str| toml::Value::String(s.into());
        assert_eq!(parse_phase(&v("pi"), "t").unwrap(), PI);
        assert_eq!(parse_phase(&v("-pi"), "t").unwrap(), -PI);
        assert_eq!(parse_phase(&v("0.5 pi"), "t").unwrap(), 0.5 * PI);
        assert_eq!(parse_phase(&v("2*pi"), "t").unwrap(), TAU);
        assert_eq!(parse_phase(&toml::Value::Float(1.0), "t").unwrap(), 1.0);
        assert!(parse_phase(&v("half"), "t").is_err());
    }

    #[test]
    fn direct_config() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [direct]
            G = "0.5 kappa"
            kappa2 = -1
            [drive]
            probe_left = 1.0
            probe_right = 1.0
            theta = "pi"
            [mode]
            delta_min = -2
            delta_max = 2
            points = 11
            [output]
            format = "json"
            precision = 10
            "#,
        )
        .unwrap();
        assert_eq!(cfg.style, ParamStyle::Direct);
        assert_eq!(cfg.params.coupling, 0.5);
        assert_eq!(cfg.params.kappa2, -1.0);
        assert_eq!(cfg.drive.phase, PI);
        assert_eq!(cfg.mode.points, 11);
        assert_eq!(cfg.output.format, Some(Format::Json));
    }

    #[test]
    fn hertz_direct_config_normalizes() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [direct]
            kappa1 = "215 kHz"
            kappa2 = "-215 kHz"
            gamma_m = "215 kHz"
            G = "107.5 kHz"
            [mode]
            delta_max = "430 kHz"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.units, UnitFamily::Hertz);
        assert_eq!(cfg.params.kappa1, 1.0);
        assert_eq!(cfg.params.kappa2, -1.0);
        assert_eq!(cfg.params.coupling, 0.5);
        assert_eq!(cfg.mode.delta_max, 2.0);
        assert!((cfg.params.rate_unit - TAU * 215e3).abs() < 1e-6);
        let reference = SystemParams::gain_balanced(0.0);
        assert!(crate::rel_diff(cfg.params.omega_m, reference.omega_m) < 1e-14);
    }

    #[test]
    fn rejected_configs() {
        let bad = [
            "[direct]\nG = 1\n[physical]\n",
            "[drive]\nprobe_left = 1\n",
            "[direct]\nG = 1\nkappa2 = \"-215 kHz\"\n",
            "[direct]\nG = \"1 kappa\"\n[mode]\ndelta_min = \"-1 MHz\"\n",
            "[physical]\nkappa1 = 1.0\n",
            "[direct]\nG = 1\nfoo = 2\n",
            "[direct]\nkappa2 = -1\n",
            "[direct]\nG = 1\n[output]\nformat = \"xml\"\n",
            "[direct]\nG = -1\n",
            "[direct\n",
        ];
        for text in bad {
            let err = RunConfig::from_toml_str(text).unwrap_err();
            assert!(err.is_input_error(), "{text}: {err:?}");
        }
    }

    #[test]
    fn physical_config_uses_reference_device() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [physical]
            kappa1 = "215 kHz"
            omega_m = "947 kHz"
            control_powers = [0.01, 0.01]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.style, ParamStyle::Physical);
        assert!(cfg.steady.is_some());
        assert_eq!(cfg.params.kappa1, 1.0);
        assert_eq!(cfg.params.kappa2, -1.0);
        assert!(cfg.params.coupling > 0.0);
        assert!(cfg.drive.probe_left > 0.0 && cfg.drive.probe_right > 0.0);
    }

    #[test]
    fn axis_config() {
        let cfg = RunConfig::from_toml_str(
            r#"
            [direct]
            G = 1
            [mode]
            axis1 = { parameter = "theta", min = 0, max = "2 pi", count = 5 }
            axis2 = { parameter = "G", min = 0, max = "1.5 kappa", count = 3 }
            observables = ["R_l", "tau_tl"]
            "#,
        )
        .unwrap();
        let a1 = cfg.mode.axis1.unwrap();
        assert_eq!(a1.parameter, SweepParameter::Phase);
        assert_eq!(a1.max, TAU);
        assert_eq!(cfg.mode.axis2.unwrap().max, 1.5);
        assert_eq!(cfg.mode.observables, vec![Observable::Rl, Observable::TauTl]);
    }

    #[test]
    fn summary_reports_argmax() {
        let s = column_summary("T_l", &[-1.0, 0.0, 1.0], &[0.5, 1.0, f64::NAN]).unwrap();
        assert_eq!(s, "T_l min=0.500000 max=1.000000 argmax=0.000000");
        assert!(column_summary("x", &[0.0], &[f64::NAN]).is_none());
    }
}
