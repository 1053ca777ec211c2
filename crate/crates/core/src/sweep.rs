//! Parameter grids and the datasets behind the published figures.
//!
//! A sweep varies one or two parameters over evenly spaced axes and records
//! the requested observables at every grid point. The second axis runs
//! fastest. Each observable gets a nullable value column and a status column;
//! points at a response pole or with an undefined phase are marked rather
//! than aborting the sweep.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closedform::{CaseCondition, CaseId};
use crate::dataset::{Column, Dataset};
use crate::delay::group_delay;
use crate::model::{DriveConfig, PhysicalParams, SystemParams};
use crate::response::{linspace, transport_coefficients, Channel};
use crate::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default points per axis of a one-dimensional figure.
pub const FIGURE_POINTS: usize = 1001;
/// Default points per axis of a surface figure.
pub const SURFACE_POINTS: usize = 51;

/// Parameters that may be placed on a sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SweepParameter {
    Delta,
    Coupling,
    Phase,
    PhotonRatio,
    Kappa2,
    GammaM,
    /// ε_R / ε_L with ε_L held fixed.
    ProbeRatio,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 7] = [
        SweepParameter::Delta,
        SweepParameter::Coupling,
        SweepParameter::Phase,
        SweepParameter::PhotonRatio,
        SweepParameter::Kappa2,
        SweepParameter::GammaM,
        SweepParameter::ProbeRatio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Delta => "delta",
            SweepParameter::Coupling => "G",
            SweepParameter::Phase => "theta",
            SweepParameter::PhotonRatio => "n",
            SweepParameter::Kappa2 => "kappa2",
            SweepParameter::GammaM => "gamma_m",
            SweepParameter::ProbeRatio => "eps_ratio",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            SweepParameter::Phase => "rad",
            SweepParameter::PhotonRatio | SweepParameter::ProbeRatio => "1",
            _ => "kappa",
        }
    }

    fn apply(self, value: f64, point: &mut Point) {
        match self {
            SweepParameter::Delta => point.delta = value,
            SweepParameter::Coupling => point.params.coupling = value,
            SweepParameter::Phase => point.drive.phase = value,
            SweepParameter::PhotonRatio => point.params.photon_ratio = value,
            SweepParameter::Kappa2 => point.params.kappa2 = value,
            SweepParameter::GammaM => point.params.gamma_m = value,
            SweepParameter::ProbeRatio => point.drive.probe_right = value * point.drive.probe_left,
        }
    }

    /// Fixed-parameter metadata keys superseded by this axis.
    fn replaces(self) -> &'static str {
        match self {
            SweepParameter::ProbeRatio => "probe_right",
            other => other.name(),
        }
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "delta" | "δ" => SweepParameter::Delta,
            "G" | "coupling" => SweepParameter::Coupling,
            "theta" | "θ" | "phase" => SweepParameter::Phase,
            "n" | "photon_ratio" => SweepParameter::PhotonRatio,
            "kappa2" | "κ₂" => SweepParameter::Kappa2,
            "gamma_m" | "γ_m" => SweepParameter::GammaM,
            "eps_ratio" | "ε_R/ε_L" | "probe_ratio" => SweepParameter::ProbeRatio,
            other => return Err(Error::InvalidSweep(format!("unknown sweep parameter `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub parameter: SweepParameter,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(parameter: SweepParameter, min: f64, max: f64, count: usize) -> Self {
        Self {
            parameter,
            min,
            max,
            count,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.count)
    }

    fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::InvalidSweep(format!("axis {} needs at least 2 points", self.parameter)));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(Error::InvalidSweep(format!(
                "axis {} range [{}, {}] is not a finite increasing interval",
                self.parameter, self.min, self.max
            )));
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!("{}:{}:{}:{}", self.parameter, self.min, self.max, self.count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Observable {
    #[serde(rename = "R_l")]
    Rl,
    #[serde(rename = "T_l")]
    Tl,
    #[serde(rename = "R_r")]
    Rr,
    #[serde(rename = "T_r")]
    Tr,
    #[serde(rename = "tau_rl")]
    TauRl,
    #[serde(rename = "tau_tl")]
    TauTl,
    #[serde(rename = "tau_rr")]
    TauRr,
    #[serde(rename = "tau_tr")]
    TauTr,
}

impl Observable {
    pub const ALL: [Observable; 8] = [
        Observable::Rl,
        Observable::Tl,
        Observable::Rr,
        Observable::Tr,
        Observable::TauRl,
        Observable::TauTl,
        Observable::TauRr,
        Observable::TauTr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Observable::Rl => "R_l",
            Observable::Tl => "T_l",
            Observable::Rr => "R_r",
            Observable::Tr => "T_r",
            Observable::TauRl => "tau_rl",
            Observable::TauTl => "tau_tl",
            Observable::TauRr => "tau_rr",
            Observable::TauTr => "tau_tr",
        }
    }

    pub fn channel(self) -> Channel {
        match self {
            Observable::Rl | Observable::TauRl => Channel::Rl,
            Observable::Tl | Observable::TauTl => Channel::Tl,
            Observable::Rr | Observable::TauRr => Channel::Rr,
            Observable::Tr | Observable::TauTr => Channel::Tr,
        }
    }

    pub fn is_delay(self) -> bool {
        matches!(
            self,
            Observable::TauRl | Observable::TauTl | Observable::TauRr | Observable::TauTr
        )
    }

    pub fn unit(self) -> &'static str {
        if self.is_delay() {
            "1/kappa"
        } else {
            "1"
        }
    }

    /// Name of the status column accompanying this observable.
    pub fn status_name(self) -> String {
        format!("status_{}", self.name())
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Observable::ALL
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidSweep(format!("unknown observable `{s}`")))
    }
}

/// Marker stored in the status column of each observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Ok,
    Pole,
    PoleAdjacent,
    PhaseJump,
    UndefinedPhase,
    /// The reference probe of the channel is off.
    UndefinedChannel,
}

impl PointStatus {
    pub const LEGEND: &'static str =
        "0 ok; 1 pole; 2 pole_adjacent; 3 phase_jump; 4 undefined_phase; 5 undefined_channel";

    pub fn code(self) -> u8 {
        match self {
            PointStatus::Ok => 0,
            PointStatus::Pole => 1,
            PointStatus::PoleAdjacent => 2,
            PointStatus::PhaseJump => 3,
            PointStatus::UndefinedPhase => 4,
            PointStatus::UndefinedChannel => 5,
        }
    }

    fn from_error(e: &Error) -> Option<Self> {
        Some(match e {
            Error::ResponsePole { .. } => PointStatus::Pole,
            Error::PoleAdjacent { .. } => PointStatus::PoleAdjacent,
            Error::PhaseJump { .. } => PointStatus::PhaseJump,
            Error::UndefinedPhase { .. } => PointStatus::UndefinedPhase,
            Error::UndefinedChannel { .. } => PointStatus::UndefinedChannel,
            _ => return None,
        })
    }
}

/// One- or two-dimensional sweep around a base working point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis1: Axis,
    pub axis2: Option<Axis>,
    /// Values of every parameter not on an axis.
    pub params: SystemParams,
    pub drive: DriveConfig,
    pub delta: f64,
    pub observables: Vec<Observable>,
}

impl SweepSpec {
    pub fn one_d(axis: Axis, params: SystemParams, drive: DriveConfig, observables: &[Observable]) -> Self {
        Self {
            axis1: axis,
            axis2: None,
            params,
            drive,
            delta: 0.0,
            observables: observables.to_vec(),
        }
    }

    pub fn with_axis2(mut self, axis: Axis) -> Self {
        self.axis2 = Some(axis);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    fn axes(&self) -> Vec<Axis> {
        std::iter::once(self.axis1).chain(self.axis2).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for axis in self.axes() {
            axis.validate()?;
        }
        if let Some(a2) = self.axis2 {
            if a2.parameter == self.axis1.parameter {
                return Err(Error::InvalidSweep(format!("parameter {} appears on both axes", a2.parameter)));
            }
        }
        if self.observables.is_empty() {
            return Err(Error::InvalidSweep("no observables requested".into()));
        }
        if self.observables.iter().collect::<BTreeSet<_>>().len() != self.observables.len() {
            return Err(Error::InvalidSweep("duplicate observables".into()));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidSweep("fixed detuning is not finite".into()));
        }
        let ratio_axis = self.axes().iter().any(|a| a.parameter == SweepParameter::ProbeRatio);
        if ratio_axis && self.drive.probe_left <= 0.0 {
            return Err(Error::InvalidSweep("eps_ratio axis needs a positive left probe".into()));
        }
        self.params.validate()?;
        self.drive.validate()?;
        Ok(())
    }

    fn points(&self) -> Vec<(Vec<f64>, Point)> {
        let base = Point {
            params: self.params,
            drive: self.drive,
            delta: self.delta,
        };
        let v1 = self.axis1.values();
        let v2 = self.axis2.map(|a| a.values());
        let mut out = Vec::with_capacity(v1.len() * v2.as_ref().map_or(1, Vec::len));
        for &x in &v1 {
            let mut p = base;
            self.axis1.parameter.apply(x, &mut p);
            match (&v2, self.axis2) {
                (Some(v2), Some(a2)) => {
                    for &y in v2 {
                        let mut q = p;
                        a2.parameter.apply(y, &mut q);
                        out.push((vec![x, y], q));
                    }
                }
                _ => out.push((vec![x], p)),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Point {
    params: SystemParams,
    drive: DriveConfig,
    delta: f64,
}

impl Point {
    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.drive.validate()?;
        if self.drive.probe_left <= 0.0 && self.drive.probe_right <= 0.0 {
            return Err(Error::NoProbe);
        }
        Ok(())
    }

    fn evaluate(&self, observables: &[Observable]) -> Result<Vec<(f64, PointStatus)>> {
        let transport = if observables.iter().any(|o| !o.is_delay()) {
            Some(transport_coefficients(&self.params, &self.drive, self.delta))
        } else {
            None
        };
        observables
            .iter()
            .map(|&o| {
                let channel = o.channel();
                let outcome = if o.is_delay() {
                    group_delay(&self.params, &self.drive, self.delta, channel)
                } else {
                    match transport.as_ref().expect("computed above") {
                        Ok(t) => t.ratio(channel).ok_or(Error::UndefinedChannel { channel }),
                        Err(e) => Err(e.clone()),
                    }
                };
                match outcome {
                    Ok(v) => Ok((v, PointStatus::Ok)),
                    Err(e) => PointStatus::from_error(&e).map(|s| (f64::NAN, s)).ok_or(e),
                }
            })
            .collect()
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Records a working point in `fixed.*` metadata entries, skipping the
/// keys in `skip` (the swept parameters).
pub fn record_parameters(ds: &mut Dataset, params: &SystemParams, drive: &DriveConfig, delta: Option<f64>, skip: &[&str]) {
    let entries = [
        ("kappa1", Some(params.kappa1)),
        ("kappa2", Some(params.kappa2)),
        ("gamma_m", Some(params.gamma_m)),
        ("G", Some(params.coupling)),
        ("n", Some(params.photon_ratio)),
        ("omega_m", Some(params.omega_m)),
        ("g0", Some(params.g0)),
        ("detuning", Some(params.detuning)),
        ("probe_left", Some(drive.probe_left)),
        ("probe_right", Some(drive.probe_right)),
        ("theta", Some(drive.phase)),
        ("delta", delta),
    ];
    for (key, value) in entries {
        if let Some(v) = value.filter(|_| !skip.contains(&key)) {
            ds.set_meta(format!("fixed.{key}"), fmt_f64(v));
        }
    }
    ds.set_meta("rate_unit_rad_per_s", fmt_f64(params.rate_unit));
    ds.set_meta("tau_unit", "1/kappa");
    ds.set_meta("tau_to_seconds", fmt_f64(1.0 / params.rate_unit));
    ds.set_meta("tool_version", TOOL_VERSION);
}

fn fixed_metadata(ds: &mut Dataset, spec: &SweepSpec) {
    let skip: Vec<&str> = spec.axes().iter().map(|a| a.parameter.replaces()).collect();
    record_parameters(ds, &spec.params, &spec.drive, Some(spec.delta), &skip);
}

/// First special case whose conditions hold at every grid point.
fn common_case(points: &[(Vec<f64>, Point)]) -> Option<CaseId> {
    [CaseId::SingleProbe, CaseId::Fipr, CaseId::PhaseResonant]
        .into_iter()
        .find(|&c| {
            let cond = CaseCondition::for_case(c);
            points
                .iter()
                .all(|(_, p)| cond.holds(&p.params, &p.drive, Some(p.delta), 1e-12))
        })
}

/// Evaluates every grid point. Row order follows the axes with axis 2
/// fastest; rows are computed in parallel and assembled in order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Dataset> {
    spec.validate()?;
    let points = spec.points();
    for (coords, p) in &points {
        p.validate().map_err(|e| Error::InvalidSweep(format!("at {coords:?}: {e}")))?;
    }

    let mut columns: Vec<Column> = spec
        .axes()
        .iter()
        .map(|a| Column::new(a.parameter.name(), a.parameter.unit()))
        .collect();
    for o in &spec.observables {
        columns.push(Column::nullable(o.name(), o.unit()));
    }
    for o in &spec.observables {
        columns.push(Column::new(o.status_name(), "code"));
    }

    let rows: Vec<Vec<f64>> = points
        .par_iter()
        .map(|(coords, p)| {
            let values = p.evaluate(&spec.observables)?;
            let mut row = coords.clone();
            row.extend(values.iter().map(|v| v.0));
            row.extend(values.iter().map(|v| f64::from(v.1.code())));
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut ds = Dataset::new(columns);
    for row in rows {
        ds.push_row(row)?;
    }
    ds.set_meta("axis1", spec.axis1.describe());
    if let Some(a2) = spec.axis2 {
        ds.set_meta("axis2", a2.describe());
    }
    ds.set_meta(
        "observables",
        spec.observables.iter().map(|o| o.name()).collect::<Vec<_>>().join(","),
    );
    ds.set_meta("status_codes", PointStatus::LEGEND);
    ds.set_meta("case_id", common_case(&points).map_or("none", CaseId::as_str));
    fixed_metadata(&mut ds, spec);
    Ok(ds)
}

/// Figure panels whose data can be regenerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FigureId {
    Fig2a,
    Fig2b,
    Fig2c,
    Fig2d,
    Fig2e,
    Fig3a,
    Fig3b,
    Fig4a,
    Fig4b,
    Fig4c,
    Fig4d,
    Fig4e,
    Fig5a,
    Fig5b,
    Fig6,
}

impl FigureId {
    pub const ALL: [FigureId; 15] = [
        FigureId::Fig2a,
        FigureId::Fig2b,
        FigureId::Fig2c,
        FigureId::Fig2d,
        FigureId::Fig2e,
        FigureId::Fig3a,
        FigureId::Fig3b,
        FigureId::Fig4a,
        FigureId::Fig4b,
        FigureId::Fig4c,
        FigureId::Fig4d,
        FigureId::Fig4e,
        FigureId::Fig5a,
        FigureId::Fig5b,
        FigureId::Fig6,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureId::Fig2a => "fig2a",
            FigureId::Fig2b => "fig2b",
            FigureId::Fig2c => "fig2c",
            FigureId::Fig2d => "fig2d",
            FigureId::Fig2e => "fig2e",
            FigureId::Fig3a => "fig3a",
            FigureId::Fig3b => "fig3b",
            FigureId::Fig4a => "fig4a",
            FigureId::Fig4b => "fig4b",
            FigureId::Fig4c => "fig4c",
            FigureId::Fig4d => "fig4d",
            FigureId::Fig4e => "fig4e",
            FigureId::Fig5a => "fig5a",
            FigureId::Fig5b => "fig5b",
            FigureId::Fig6 => "fig6",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            FigureId::Fig2a => "R_L, T_L vs delta, single probe, G = 0.7 kappa",
            FigureId::Fig2b => "R_L, T_L vs delta, single probe, G = kappa/sqrt(2)",
            FigureId::Fig2c => "R_L, T_L vs delta, single probe, G = 1.2 kappa",
            FigureId::Fig2d => "R_L surface over (G, delta), single probe",
            FigureId::Fig2e => "T_L surface over (G, delta), single probe",
            FigureId::Fig3a => "reflection delay vs delta, single probe, G = 0.8, 1, 1.2 kappa",
            FigureId::Fig3b => "transmission delay vs delta, single probe, G = 0.8, 1, 1.2 kappa",
            FigureId::Fig4a => "R_L, T_L vs delta, FIPR, G = kappa",
            FigureId::Fig4b => "R_L, T_L vs delta, FIPR, G = 2 kappa",
            FigureId::Fig4c => "R_L, T_L vs delta, FIPR, G = 3 kappa",
            FigureId::Fig4d => "R_L surface over (G, delta), FIPR",
            FigureId::Fig4e => "T_L surface over (G, delta), FIPR",
            FigureId::Fig5a => "reflection delay vs delta, FIPR, G = 1, 2, 3 kappa",
            FigureId::Fig5b => "transmission delay vs delta, FIPR, G = 1, 2, 3 kappa",
            FigureId::Fig6 => "R_L, T_L vs probe phase, delta = 0, G = 0.5 kappa",
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::UnknownFigure(s.to_string()))
    }
}

/// Grid resolution of figure datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FigureOptions {
    pub points: usize,
    pub surface_points: usize,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            points: FIGURE_POINTS,
            surface_points: SURFACE_POINTS,
        }
    }
}

/// Detuning range of every spectrum figure, in units of κ.
pub const FIGURE_DELTA_RANGE: (f64, f64) = (-5.0, 5.0);

pub fn figure_dataset(id: FigureId) -> Result<Dataset> {
    figure_dataset_with(id, FigureOptions::default())
}

pub fn figure_spec(id: FigureId, opts: FigureOptions) -> SweepSpec {
    use Observable::*;
    use SweepParameter::{Coupling, Delta, Phase};
    let (lo, hi) = FIGURE_DELTA_RANGE;
    let delta_axis = |count| Axis::new(Delta, lo, hi, count);
    let single = DriveConfig::left_only(1.0);
    let fipr = DriveConfig::symmetric(1.0, PI);
    let base = SystemParams::gain_balanced;
    let line = |g: f64, drive, obs: &[Observable]| SweepSpec::one_d(delta_axis(opts.points), base(g), drive, obs);
    let surface = |g_max: f64, drive, obs: &[Observable]| {
        SweepSpec::one_d(Axis::new(Coupling, 0.0, g_max, opts.surface_points), base(0.0), drive, obs)
            .with_axis2(delta_axis(opts.surface_points))
    };
    let family = |drive, obs: &[Observable], g: (f64, f64)| {
        SweepSpec::one_d(Axis::new(Coupling, g.0, g.1, 3), base(0.0), drive, obs).with_axis2(delta_axis(opts.points))
    };
    match id {
        FigureId::Fig2a => line(0.7, single, &[Rl, Tl]),
        FigureId::Fig2b => line(FRAC_1_SQRT_2, single, &[Rl, Tl]),
        FigureId::Fig2c => line(1.2, single, &[Rl, Tl]),
        FigureId::Fig2d => surface(1.5, single, &[Rl]),
        FigureId::Fig2e => surface(1.5, single, &[Tl]),
        FigureId::Fig3a => family(single, &[TauRl], (0.8, 1.2)),
        FigureId::Fig3b => family(single, &[TauTl], (0.8, 1.2)),
        FigureId::Fig4a => line(1.0, fipr, &[Rl, Tl]),
        FigureId::Fig4b => line(2.0, fipr, &[Rl, Tl]),
        FigureId::Fig4c => line(3.0, fipr, &[Rl, Tl]),
        FigureId::Fig4d => surface(3.0, fipr, &[Rl]),
        FigureId::Fig4e => surface(3.0, fipr, &[Tl]),
        FigureId::Fig5a => family(fipr, &[TauRl, TauTr], (1.0, 3.0)),
        FigureId::Fig5b => family(fipr, &[TauTl, Tl], (1.0, 3.0)),
        FigureId::Fig6 => SweepSpec::one_d(
            Axis::new(Phase, 0.0, TAU, opts.points),
            base(0.5),
            DriveConfig::symmetric(1.0, 0.0),
            &[Rl, Tl],
        ),
    }
}

/// Dataset for one figure panel: the sweep plus the shared device
/// parameters and, for the transmission-delay panel, the detuning of maximal
/// transmission at δ ≥ 0 for each coupling.
pub fn figure_dataset_with(id: FigureId, opts: FigureOptions) -> Result<Dataset> {
    let spec = figure_spec(id, opts);
    let mut ds = run_sweep(&spec)?;
    ds.set_meta("figure", id.as_str());
    ds.set_meta("figure_description", id.description());
    let dev = PhysicalParams::reference_device();
    ds.set_meta("device.cavity_length_m", fmt_f64(dev.cavity_length));
    ds.set_meta("device.oscillator_mass_kg", fmt_f64(dev.oscillator_mass));
    ds.set_meta("device.kappa_rad_per_s", fmt_f64(dev.decay_left));
    ds.set_meta("device.omega_m_rad_per_s", fmt_f64(dev.mech_freq));
    ds.set_meta("device.cavity_freq_rad_per_s", fmt_f64(dev.cavity_freq));
    if id == FigureId::Fig5b {
        add_peak_column(&mut ds)?;
    }
    Ok(ds)
}

/// Appends `delta_peak`: per coupling block, the δ ≥ 0 maximizing T_l.
fn add_peak_column(ds: &mut Dataset) -> Result<()> {
    let g = ds.column("G").expect("coupling axis");
    let delta = ds.column("delta").expect("detuning axis");
    let t = ds.column("T_l").expect("transmission column");
    let mut peaks = Vec::with_capacity(g.len());
    let mut start = 0;
    while start < g.len() {
        let end = (start..g.len()).find(|&k| g[k] != g[start]).unwrap_or(g.len());
        let peak = (start..end)
            .filter(|&k| delta[k] >= 0.0 && !t[k].is_nan())
            .fold(None, |best: Option<usize>, k| match best {
                Some(b) if t[b] >= t[k] => Some(b),
                _ => Some(k),
            })
            .map_or(f64::NAN, |k| delta[k]);
        ds.set_meta(format!("delta_peak.G_{}", g[start]), fmt_f64(peak));
        peaks.extend(std::iter::repeat(peak).take(end - start));
        start = end;
    }
    let status = ds.columns.iter().position(|c| c.name.starts_with("status_")).unwrap_or(ds.columns.len());
    ds.columns.insert(status, Column::nullable("delta_peak", "kappa"));
    for (row, p) in ds.rows.iter_mut().zip(peaks) {
        row.insert(status, p);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(ds: &Dataset, name: &str) -> Vec<f64> {
        ds.column(name).unwrap()
    }

    #[test]
    fn fipr_reflection_column_is_one() {
        let spec = SweepSpec::one_d(
            Axis::new(SweepParameter::Delta, -5.0, 5.0, 201),
            SystemParams::gain_balanced(2.0),
            DriveConfig::symmetric(1.0, PI),
            &[Observable::Rl, Observable::Tl],
        );
        let ds = run_sweep(&spec).unwrap();
        assert_eq!(ds.rows.len(), 201);
        assert!(col(&ds, "R_l").iter().all(|r| (r - 1.0).abs() < 1e-12));
        assert_eq!(ds.metadata["case_id"], "fipr");
    }

    #[test]
    fn two_point_axis_has_exact_endpoints() {
        let spec = SweepSpec::one_d(
            Axis::new(SweepParameter::Coupling, 0.1, 0.3, 2),
            SystemParams::gain_balanced(0.0),
            DriveConfig::left_only(1.0),
            &[Observable::Tl],
        );
        let ds = run_sweep(&spec).unwrap();
        assert_eq!(col(&ds, "G"), vec![0.1, 0.3]);
        assert!(!ds.metadata.contains_key("fixed.G"));
        assert_eq!(ds.metadata["fixed.kappa2"], "-1");
    }

    #[test]
    fn surface_row_order_and_ridge() {
        let ds = figure_dataset_with(
            FigureId::Fig2e,
            FigureOptions {
                points: 11,
                surface_points: 11,
            },
        )
        .unwrap();
        assert_eq!(ds.rows.len(), 121);
        let g = col(&ds, "G");
        let d = col(&ds, "delta");
        assert_eq!((g[0], d[0]), (0.0, -5.0));
        assert_eq!((g[1], d[1]), (0.0, -4.0));
        assert_eq!((g[11], d[11]), (0.15, -5.0));
        // resonant transmission grows with G: 4G⁴
        let t = col(&ds, "T_l");
        let resonant: Vec<f64> = (0..11).map(|k| t[11 * k + 5]).collect();
        assert!(resonant.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn undefined_channels_are_marked() {
        let spec = SweepSpec::one_d(
            Axis::new(SweepParameter::Delta, -1.0, 1.0, 5),
            SystemParams::gain_balanced(0.5),
            DriveConfig::left_only(1.0),
            &[Observable::Rr, Observable::TauTr],
        );
        let ds = run_sweep(&spec).unwrap();
        assert!(col(&ds, "R_r").iter().all(|v| v.is_nan()));
        assert!(col(&ds, "status_R_r").iter().all(|&s| s == 5.0));
        assert!(col(&ds, "status_tau_tr").iter().all(|&s| s == 5.0));
    }

    #[test]
    fn poles_do_not_abort() {
        let mut p = SystemParams::gain_balanced(0.0);
        p.kappa2 = -0.5;
        let spec = SweepSpec::one_d(
            Axis::new(SweepParameter::Coupling, 0.0, 2.0, 3),
            p,
            DriveConfig::left_only(1.0),
            &[Observable::Tl, Observable::TauRl],
        );
        let ds = run_sweep(&spec).unwrap();
        assert_eq!(col(&ds, "status_T_l"), vec![0.0, 1.0, 0.0]);
        assert!(col(&ds, "T_l")[1].is_nan());
        assert_eq!(col(&ds, "status_tau_rl")[1], 2.0);
    }

    #[test]
    fn invalid_specs() {
        let base = SweepSpec::one_d(
            Axis::new(SweepParameter::Delta, -1.0, 1.0, 1),
            SystemParams::gain_balanced(0.5),
            DriveConfig::left_only(1.0),
            &[Observable::Rl],
        );
        assert!(matches!(run_sweep(&base), Err(Error::InvalidSweep(_))));
        let mut s = base.clone();
        s.axis1.count = 3;
        s.axis2 = Some(s.axis1);
        assert!(matches!(run_sweep(&s), Err(Error::InvalidSweep(_))));
        let mut s = base.clone();
        s.axis1 = Axis::new(SweepParameter::PhotonRatio, -1.0, 1.0, 3);
        assert!(matches!(run_sweep(&s), Err(Error::InvalidSweep(_))));
        let mut s = base;
        s.axis1.count = 3;
        s.observables = vec![Observable::Rl, Observable::Rl];
        assert!(matches!(run_sweep(&s), Err(Error::InvalidSweep(_))));
        assert!(matches!("fig7".parse::<FigureId>(), Err(Error::UnknownFigure(_))));
    }

    #[test]
    fn probe_ratio_axis() {
        let spec = SweepSpec::one_d(
            Axis::new(SweepParameter::ProbeRatio, 0.0, 1.0, 3),
            SystemParams::gain_balanced(0.5),
            DriveConfig::symmetric(2.0, 0.0),
            &[Observable::Rr],
        );
        let ds = run_sweep(&spec).unwrap();
        assert_eq!(col(&ds, "status_R_r"), vec![5.0, 0.0, 0.0]);
        assert!(!ds.metadata.contains_key("fixed.probe_right"));
    }

    #[test]
    fn figure_examples() {
        let ds = figure_dataset(FigureId::Fig2b).unwrap();
        assert_eq!(ds.rows.len(), FIGURE_POINTS);
        let mid = FIGURE_POINTS / 2;
        assert_eq!(col(&ds, "delta")[mid], 0.0);
        assert!((col(&ds, "T_l")[mid] - 1.0).abs() < 1e-12);
        assert!(col(&ds, "R_l")[mid] < 1e-24);
        assert_eq!(ds.metadata["case_id"], "single_probe");
        assert_eq!(ds.metadata["fixed.G"], format!("{}", FRAC_1_SQRT_2));

        let ds = figure_dataset(FigureId::Fig6).unwrap();
        let theta = col(&ds, "theta");
        let k = theta.iter().position(|&t| (t - PI).abs() < 1e-12).unwrap();
        assert!((col(&ds, "R_l")[k] - 1.0).abs() < 1e-12);
        assert!((col(&ds, "T_l")[k] - 1.0).abs() < 1e-12);
        assert_eq!(ds.metadata["case_id"], "phase_resonant");
        assert_eq!(ds.metadata["fixed.G"], "0.5");

        let ds = figure_dataset(FigureId::Fig4a).unwrap();
        assert!(col(&ds, "R_l").iter().all(|r| (r - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fig5_fast_light_and_peaks() {
        for id in [FigureId::Fig5a, FigureId::Fig5b] {
            let ds = figure_dataset(id).unwrap();
            assert_eq!(ds.rows.len(), 3 * FIGURE_POINTS);
            let d = col(&ds, "delta");
            let tau_name = if id == FigureId::Fig5a { "tau_rl" } else { "tau_tl" };
            let tau = col(&ds, tau_name);
            let at_zero: Vec<f64> = (0..ds.rows.len()).filter(|&k| d[k] == 0.0).map(|k| tau[k]).collect();
            assert_eq!(at_zero.len(), 3);
            assert!(at_zero.iter().all(|&t| t < 0.0), "{at_zero:?}");
        }
        let ds = figure_dataset(FigureId::Fig5b).unwrap();
        assert!(ds.to_csv_string(12).is_ok());
        let peak = |g: &str| ds.metadata[&format!("delta_peak.G_{g}")].parse::<f64>().unwrap();
        // G = κ peaks at δ = κ exactly; stronger coupling moves the peak out
        assert_eq!(peak("1"), 1.0);
        assert!(peak("1") < peak("2") && peak("2") < peak("3"));
        assert!(col(&ds, "delta_peak").iter().all(|p| [peak("1"), peak("2"), peak("3")].contains(p)));
    }

    #[test]
    fn deterministic_output() {
        let a = figure_dataset(FigureId::Fig3a).unwrap();
        let b = figure_dataset(FigureId::Fig3a).unwrap();
        assert_eq!(a.to_csv_string(17).unwrap(), b.to_csv_string(17).unwrap());
    }
}
