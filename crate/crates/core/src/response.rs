//! Frequency-domain linear response to the weak probes.
//!
//! The Stokes component of each fluctuation, `δO(t) = δO₊ e^{−iδt}`, is
//! given in closed form by [`fluctuation_amplitudes`]. The output fields
//! follow from the input-output relations `ε_out = 2κ δa₊ − ε_in`.
//!
//! The coupling to the right cavity is G√n with n the photon-number ratio,
//! so the closed form below carries √n and n where a pure amplitude-ratio
//! parameterization would carry n and n². Both agree at n = 1.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{DriveConfig, SystemParams};
use crate::{Error, Result};

/// |F₁ + F₂| below which a detuning is treated as a response pole.
pub const POLE_THRESHOLD: f64 = 1e-12;

/// Stokes amplitudes of the three fluctuation modes at one detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationAmps {
    /// Mechanical mode δb₊.
    pub mech: Complex64,
    /// Left cavity δa₁₊.
    pub left: Complex64,
    /// Right cavity δa₂₊.
    pub right: Complex64,
    /// Probe detuning δ.
    pub delta: f64,
}

impl FluctuationAmps {
    /// State vector in the fixed order (δb, δa₁, δa₂).
    pub fn as_array(&self) -> [Complex64; 3] {
        [self.mech, self.left, self.right]
    }

    /// Largest component-wise deviation relative to the largest component of
    /// `reference`.
    pub fn rel_deviation(&self, reference: &FluctuationAmps) -> f64 {
        let a = self.as_array();
        let b = reference.as_array();
        let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let diff = a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }
}

/// Stokes components of the two output fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputFields {
    /// ε_outL₊, leaving the left cavity.
    pub left: Complex64,
    /// ε_outR₊, leaving the right cavity.
    pub right: Complex64,
}

/// One of the four output channels: reflection or transmission, for the left
/// or right reference probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    /// ε_outL / ε_L
    #[serde(rename = "rl")]
    Rl,
    /// ε_outR / ε_L
    #[serde(rename = "tl")]
    Tl,
    /// ε_outR / ε_R
    #[serde(rename = "rr")]
    Rr,
    /// ε_outL / ε_R
    #[serde(rename = "tr")]
    Tr,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Rl, Channel::Tl, Channel::Rr, Channel::Tr];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Rl => "rl",
            Channel::Tl => "tl",
            Channel::Rr => "rr",
            Channel::Tr => "tr",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    /// Whether the channel is referenced to the left probe.
    pub fn left_referenced(self) -> bool {
        matches!(self, Channel::Rl | Channel::Tl)
    }

    /// Output field seen by this channel.
    pub fn output(self, out: &OutputFields) -> Complex64 {
        match self {
            Channel::Rl | Channel::Tr => out.left,
            Channel::Tl | Channel::Rr => out.right,
        }
    }

    /// Real reference probe amplitude of this channel.
    pub fn probe(self, drive: &DriveConfig) -> f64 {
        if self.left_referenced() {
            drive.probe_left
        } else {
            drive.probe_right
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rl" => Ok(Channel::Rl),
            "tl" => Ok(Channel::Tl),
            "rr" => Ok(Channel::Rr),
            "tr" => Ok(Channel::Tr),
            other => Err(format!("unknown channel `{other}` (expected rl, tl, rr or tr)")),
        }
    }
}

/// Intensity ratios and output phases at one detuning.
///
/// Entries whose reference probe is zero are `None`. With both probes on,
/// `R_l = |ε_outL/ε_L|²` and `T_l = |ε_outR/ε_L|²` are the reflection and
/// transmission rates of the combined drive; for equal probes they coincide
/// with `T_r` and `R_r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportResult {
    pub delta: f64,
    /// Ratios indexed by [`Channel`] order (rl, tl, rr, tr).
    pub ratios: [Option<f64>; 4],
    /// Phases arg(ε_out / ε_ref) in (−π, π], same order.
    pub phases: [Option<f64>; 4],
}

impl TransportResult {
    pub fn ratio(&self, channel: Channel) -> Option<f64> {
        self.ratios[channel.index()]
    }

    pub fn phase(&self, channel: Channel) -> Option<f64> {
        self.phases[channel.index()]
    }

    /// R_L := R_l, reflection rate of the left-incident probe.
    pub fn reflection(&self) -> Option<f64> {
        self.ratio(Channel::Rl)
    }

    /// T_L := T_l, transmission rate of the left-incident probe.
    pub fn transmission(&self) -> Option<f64> {
        self.ratio(Channel::Tl)
    }
}

/// Response denominator F₁ + F₂ at detuning δ.
pub fn response_denominator(params: &SystemParams, delta: f64) -> Complex64 {
    let shift = Complex64::new(0.0, -delta);
    let k1 = params.kappa1 + shift;
    let k2 = params.kappa2 + shift;
    let gm = params.gamma_m + shift;
    let g2 = params.coupling * params.coupling;
    gm * k1 * k2 + g2 * (params.photon_ratio * k1 + k2)
}

/// Closed-form Stokes amplitudes (δb₊, δa₁₊, δa₂₊).
pub fn fluctuation_amplitudes(
    params: &SystemParams,
    drive: &DriveConfig,
    delta: f64,
) -> Result<FluctuationAmps> {
    fluctuation_amplitudes_with(params, drive, delta, POLE_THRESHOLD)
}

pub fn fluctuation_amplitudes_with(
    params: &SystemParams,
    drive: &DriveConfig,
    delta: f64,
    pole_threshold: f64,
) -> Result<FluctuationAmps> {
    let denom = response_denominator(params, delta);
    if denom.norm() < pole_threshold {
        return Err(Error::ResponsePole {
            delta,
            magnitude: denom.norm(),
        });
    }
    let i = Complex64::i();
    let shift = Complex64::new(0.0, -delta);
    let k1 = params.kappa1 + shift;
    let k2 = params.kappa2 + shift;
    let gm = params.gamma_m + shift;
    let g = params.coupling;
    let g2 = g * g;
    let r = params.amplitude_ratio();
    let n = params.photon_ratio;
    let el = Complex64::from(drive.probe_left);
    let er = drive.right_probe();

    let mech = -i * g * (r * er * k1 - el * k2) / denom;
    let left = (g2 * (r * er + n * el) + el * gm * k2) / denom;
    let right = (g2 * (er + r * el) + er * gm * k1) / denom;
    Ok(FluctuationAmps {
        mech,
        left,
        right,
        delta,
    })
}

/// Input-output relations ε_outL₊ = 2κ₁δa₁₊ − ε_L and
/// ε_outR₊ = 2κ₂δa₂₊ − ε_R e^{iθ}, with signed κ₂.
pub fn output_fields(amps: &FluctuationAmps, drive: &DriveConfig, params: &SystemParams) -> OutputFields {
    OutputFields {
        left: 2.0 * params.kappa1 * amps.left - drive.probe_left,
        right: 2.0 * params.kappa2 * amps.right - drive.right_probe(),
    }
}

/// Complex ratio ε_out / ε_ref for one channel.
pub fn channel_ratio(
    params: &SystemParams,
    drive: &DriveConfig,
    delta: f64,
    channel: Channel,
) -> Result<Complex64> {
    let probe = channel.probe(drive);
    if probe <= 0.0 {
        return Err(Error::UndefinedChannel { channel });
    }
    let amps = fluctuation_amplitudes(params, drive, delta)?;
    let out = output_fields(&amps, drive, params);
    Ok(channel.output(&out) / probe)
}

/// Reflection/transmission rates and output phases at one detuning.
pub fn transport_coefficients(
    params: &SystemParams,
    drive: &DriveConfig,
    delta: f64,
) -> Result<TransportResult> {
    if drive.probe_left <= 0.0 && drive.probe_right <= 0.0 {
        return Err(Error::NoProbe);
    }
    let amps = fluctuation_amplitudes(params, drive, delta)?;
    let out = output_fields(&amps, drive, params);
    let mut ratios = [None; 4];
    let mut phases = [None; 4];
    for channel in Channel::ALL {
        let probe = channel.probe(drive);
        if probe > 0.0 {
            let z = channel.output(&out) / probe;
            ratios[channel.index()] = Some(z.norm_sqr());
            phases[channel.index()] = Some(z.arg());
        }
    }
    Ok(TransportResult {
        delta,
        ratios,
        phases,
    })
}

/// Transport for each probe direction separately: the left-incident result
/// is computed with ε_R = 0, the right-incident one with ε_L = 0.
pub fn single_probe_transport(
    params: &SystemParams,
    amplitude: f64,
    delta: f64,
) -> Result<(TransportResult, TransportResult)> {
    let left = transport_coefficients(params, &DriveConfig::left_only(amplitude), delta)?;
    let right = transport_coefficients(params, &DriveConfig::right_only(amplitude), delta)?;
    Ok((left, right))
}

/// Spectrum entry; poles are kept as markers rather than dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumPoint {
    Value(TransportResult),
    Pole { delta: f64, magnitude: f64 },
}

impl SpectrumPoint {
    pub fn delta(&self) -> f64 {
        match self {
            SpectrumPoint::Value(t) => t.delta,
            SpectrumPoint::Pole { delta, .. } => *delta,
        }
    }

    pub fn value(&self) -> Option<&TransportResult> {
        match self {
            SpectrumPoint::Value(t) => Some(t),
            SpectrumPoint::Pole { .. } => None,
        }
    }
}

/// Checks that a detuning grid is non-empty, finite and strictly increasing.
pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("grid is empty".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid("grid contains non-finite values".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Evenly spaced grid with exact endpoints.
pub fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let last = count - 1;
            (0..count)
                .map(|k| {
                    if k == last {
                        max
                    } else {
                        min + (max - min) * k as f64 / last as f64
                    }
                })
                .collect()
        }
    }
}

/// Transport coefficients over a detuning grid.
pub fn spectrum(params: &SystemParams, drive: &DriveConfig, grid: &[f64]) -> Result<Vec<SpectrumPoint>> {
    check_grid(grid)?;
    if drive.probe_left <= 0.0 && drive.probe_right <= 0.0 {
        return Err(Error::NoProbe);
    }
    grid.par_iter()
        .map(|&delta| match transport_coefficients(params, drive, delta) {
            Ok(t) => Ok(SpectrumPoint::Value(t)),
            Err(Error::ResponsePole { delta, magnitude }) => Ok(SpectrumPoint::Pole { delta, magnitude }),
            Err(e) => Err(e),
        })
        .collect()
}
