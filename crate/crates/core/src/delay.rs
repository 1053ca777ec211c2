//! Output-field phases and group delays τ = ∂θ/∂ω_p.
//!
//! With the cavity frequency fixed, ∂/∂ω_p equals ∂/∂δ, so the delay is the
//! detuning derivative of the channel phase. Positive τ is slow light,
//! negative τ fast light. Delays are in units of 1/`rate_unit`; use
//! [`to_seconds`] at the boundary.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::model::{DriveConfig, SystemParams};
use crate::response::{channel_ratio, check_grid, Channel};
use crate::{Error, Result};

/// Default stencil half-width, in units of κ₁.
pub const DEFAULT_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayOptions {
    /// Stencil half-width h in the params' rate unit; `None` uses
    /// `DEFAULT_STEP · κ₁`.
    pub step: Option<f64>,
    /// Combine h and h/2 differences, (4D(h/2) − D(h)) / 3.
    pub richardson: bool,
}

impl Default for DelayOptions {
    fn default() -> Self {
        Self {
            step: None,
            richardson: true,
        }
    }
}

/// Converts a delay in units of 1/`rate_unit` into seconds.
pub fn to_seconds(tau: f64, params: &SystemParams) -> f64 {
    tau / params.rate_unit
}

/// Wraps an angle into (−π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(TAU) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Number of turns to add to `phi` to land within π of `prev`.
fn winding(prev: f64, phi: f64) -> f64 {
    ((prev - phi) / TAU).round()
}

/// Removes 2π jumps. Returns the unwrapped phases and, for each sample, the
/// integer winding `k` with `unwrapped = wrapped + 2πk`.
pub fn unwrap_phase(wrapped: &[f64]) -> (Vec<f64>, Vec<i64>) {
    let mut out = Vec::with_capacity(wrapped.len());
    let mut branches = Vec::with_capacity(wrapped.len());
    let mut prev: Option<f64> = None;
    for &phi in wrapped {
        let k = prev.map_or(0.0, |p| winding(p, phi));
        let value = phi + TAU * k;
        out.push(value);
        branches.push(k as i64);
        prev = Some(value);
    }
    (out, branches)
}

fn stencil_ratio(
    params: &SystemParams,
    drive: &DriveConfig,
    delta: f64,
    at: f64,
    channel: Channel,
) -> Result<Complex64> {
    match channel_ratio(params, drive, at, channel) {
        Ok(z) if z == Complex64::new(0.0, 0.0) => Err(Error::UndefinedPhase { channel, delta: at }),
        Ok(z) => Ok(z),
        Err(Error::ResponsePole { .. }) => Err(Error::PoleAdjacent { delta }),
        Err(e) => Err(e),
    }
}

/// Group delay of one channel at detuning δ with default options.
pub fn group_delay(params: &SystemParams, drive: &DriveConfig, delta: f64, channel: Channel) -> Result<f64> {
    group_delay_with(params, drive, delta, channel, &DelayOptions::default())
}

/// Central difference of the locally unwrapped phase.
///
/// Consecutive stencil points are unwrapped pairwise; a pairwise increment
/// above π/2 means the step is too coarse for the local structure and is
/// reported as [`Error::PhaseJump`].
pub fn group_delay_with(
    params: &SystemParams,
    drive: &DriveConfig,
    delta: f64,
    channel: Channel,
    opts: &DelayOptions,
) -> Result<f64> {
    if channel.probe(drive) <= 0.0 {
        return Err(Error::UndefinedChannel { channel });
    }
    let h = opts.step.unwrap_or(DEFAULT_STEP * params.kappa1);
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "step",
            reason: format!("stencil step must be positive, got {h}"),
        });
    }
    let offsets: &[f64] = if opts.richardson {
        &[-1.0, -0.5, 0.0, 0.5, 1.0]
    } else {
        &[-1.0, 0.0, 1.0]
    };
    let ratios = offsets
        .iter()
        .map(|&o| stencil_ratio(params, drive, delta, delta + o * h, channel))
        .collect::<Result<Vec<_>>>()?;

    let mut phase = vec![0.0; ratios.len()];
    for k in 1..ratios.len() {
        let step = (ratios[k] / ratios[k - 1]).arg();
        if step.abs() > FRAC_PI_2 {
            return Err(Error::PhaseJump { delta, jump: step });
        }
        phase[k] = phase[k - 1] + step;
    }
    let last = phase.len() - 1;
    let coarse = (phase[last] - phase[0]) / (2.0 * h);
    if !opts.richardson {
        return Ok(coarse);
    }
    let fine = (phase[3] - phase[1]) / h;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Why a delay spectrum entry carries no delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayStatus {
    Ok,
    /// The grid point itself is a response pole.
    Pole,
    /// A stencil point is a response pole.
    PoleAdjacent,
    /// The stencil straddles a phase jump; shrink the step.
    PhaseJump,
    /// The output field vanishes, so the phase is undefined.
    UndefinedPhase,
}

impl DelayStatus {
    pub fn code(self) -> u8 {
        match self {
            DelayStatus::Ok => 0,
            DelayStatus::Pole => 1,
            DelayStatus::PoleAdjacent => 2,
            DelayStatus::PhaseJump => 3,
            DelayStatus::UndefinedPhase => 4,
        }
    }
}

/// One entry of a delay spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayPoint {
    pub delta: f64,
    /// Phase on the grid-wide continuous branch.
    pub phase: Option<f64>,
    /// Winding number relative to the principal value.
    pub branch: i64,
    /// Group delay in units of 1/`rate_unit`.
    pub tau: Option<f64>,
    pub status: DelayStatus,
}

/// Group delays of one channel over a detuning grid.
///
/// The wrapped phase is first unwrapped along the whole grid (a sequential
/// pass), then each point is differentiated with the local stencil anchored
/// on that branch. Poles and undefined phases are kept as markers.
pub fn delay_spectrum(
    params: &SystemParams,
    drive: &DriveConfig,
    grid: &[f64],
    channel: Channel,
) -> Result<Vec<DelayPoint>> {
    delay_spectrum_with(params, drive, grid, channel, &DelayOptions::default())
}

pub fn delay_spectrum_with(
    params: &SystemParams,
    drive: &DriveConfig,
    grid: &[f64],
    channel: Channel,
    opts: &DelayOptions,
) -> Result<Vec<DelayPoint>> {
    check_grid(grid)?;
    if channel.probe(drive) <= 0.0 {
        return Err(Error::UndefinedChannel { channel });
    }

    let wrapped: Vec<Result<Option<f64>>> = grid
        .par_iter()
        .map(|&delta| match channel_ratio(params, drive, delta, channel) {
            Ok(z) if z == Complex64::new(0.0, 0.0) => Ok(None),
            Ok(z) => Ok(Some(z.arg())),
            Err(Error::ResponsePole { .. }) => Err(Error::ResponsePole { delta, magnitude: 0.0 }),
            Err(e) => Err(e),
        })
        .collect();

    // Global unwrap over the defined points, carrying the branch across gaps.
    let mut phases = vec![None; grid.len()];
    let mut branches = vec![0i64; grid.len()];
    let mut statuses = vec![DelayStatus::Ok; grid.len()];
    let mut prev: Option<f64> = None;
    for (k, w) in wrapped.iter().enumerate() {
        match w {
            Ok(Some(phi)) => {
                let branch = prev.map_or(0.0, |p| winding(p, *phi));
                let value = phi + TAU * branch;
                phases[k] = Some(value);
                branches[k] = branch as i64;
                prev = Some(value);
            }
            Ok(None) => statuses[k] = DelayStatus::UndefinedPhase,
            Err(Error::ResponsePole { .. }) => statuses[k] = DelayStatus::Pole,
            Err(e) => return Err(e.clone()),
        }
    }

    let taus: Vec<(Option<f64>, DelayStatus)> = grid
        .par_iter()
        .zip(statuses.par_iter())
        .map(|(&delta, &status)| {
            if status != DelayStatus::Ok {
                return (None, status);
            }
            match group_delay_with(params, drive, delta, channel, opts) {
                Ok(t) => (Some(t), DelayStatus::Ok),
                Err(Error::PoleAdjacent { .. }) => (None, DelayStatus::PoleAdjacent),
                Err(Error::PhaseJump { .. }) => (None, DelayStatus::PhaseJump),
                Err(Error::UndefinedPhase { .. }) => (None, DelayStatus::UndefinedPhase),
                Err(_) => (None, DelayStatus::Pole),
            }
        })
        .collect();

    Ok(grid
        .iter()
        .zip(taus)
        .enumerate()
        .map(|(k, (&delta, (tau, status)))| DelayPoint {
            delta,
            phase: phases[k],
            branch: branches[k],
            tau,
            status,
        })
        .collect())
}

/// Delays of all four channels at one detuning, with their grid branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayResult {
    pub delta: f64,
    /// Delays in (rl, tl, rr, tr) order; `None` when undefined.
    pub taus: [Option<f64>; 4],
    pub branches: [i64; 4],
}

impl DelayResult {
    pub fn tau(&self, channel: Channel) -> Option<f64> {
        self.taus[channel as usize]
    }
}

/// Delay spectra of every channel whose reference probe is on.
pub fn delay_results(params: &SystemParams, drive: &DriveConfig, grid: &[f64]) -> Result<Vec<DelayResult>> {
    check_grid(grid)?;
    let mut results: Vec<DelayResult> = grid
        .iter()
        .map(|&delta| DelayResult {
            delta,
            taus: [None; 4],
            branches: [0; 4],
        })
        .collect();
    for channel in Channel::ALL {
        if channel.probe(drive) <= 0.0 {
            continue;
        }
        let points = delay_spectrum(params, drive, grid, channel)?;
        for (r, p) in results.iter_mut().zip(points) {
            r.taus[channel as usize] = p.tau;
            r.branches[channel as usize] = p.branch;
        }
    }
    Ok(results)
}
