//! Analytic reflection and transmission rates for the balanced gain/loss
//! configuration κ₁ = −κ₂ = γ_m = κ, n = 1.
//!
//! These expressions are evaluated as written, independently of
//! [`crate::response`], so the two paths can check each other.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::model::{DriveConfig, SystemParams};
use crate::response::POLE_THRESHOLD;
use crate::{Error, Result};

/// The three analytic special cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseId {
    /// Left probe only.
    SingleProbe,
    /// Equal probes in antiphase: frequency-independent perfect reflection.
    Fipr,
    /// Equal probes on resonance, arbitrary relative phase.
    PhaseResonant,
}

impl CaseId {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::SingleProbe => "single_probe",
            CaseId::Fipr => "fipr",
            CaseId::PhaseResonant => "phase_resonant",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Quantity constrained by a [`CaseCondition`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    ProbeRight,
    /// ε_R / ε_L
    ProbeRatio,
    /// θ reduced to [0, 2π)
    Phase,
    Detuning,
    /// κ₂ / κ₁
    GainLossRatio,
    /// γ_m / κ₁
    DampingRatio,
    PhotonRatio,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::ProbeRight => "probe_right",
            Quantity::ProbeRatio => "probe_right/probe_left",
            Quantity::Phase => "phase",
            Quantity::Detuning => "delta",
            Quantity::GainLossRatio => "kappa2/kappa1",
            Quantity::DampingRatio => "gamma_m/kappa1",
            Quantity::PhotonRatio => "photon_ratio",
        }
    }

    fn evaluate(self, params: &SystemParams, drive: &DriveConfig, delta: Option<f64>) -> Option<f64> {
        match self {
            Quantity::ProbeRight => Some(drive.probe_right),
            Quantity::ProbeRatio => (drive.probe_left > 0.0).then(|| drive.probe_right / drive.probe_left),
            Quantity::Phase => Some(drive.reduced_phase()),
            Quantity::Detuning => delta,
            Quantity::GainLossRatio => Some(params.kappa2 / params.kappa1),
            Quantity::DampingRatio => Some(params.gamma_m / params.kappa1),
            Quantity::PhotonRatio => Some(params.photon_ratio),
        }
    }
}

/// Parameter constraints under which a closed form applies.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseCondition {
    pub case_id: CaseId,
    pub constraints: Vec<(Quantity, f64)>,
}

impl CaseCondition {
    pub fn for_case(case_id: CaseId) -> Self {
        let balanced = [
            (Quantity::GainLossRatio, -1.0),
            (Quantity::DampingRatio, 1.0),
            (Quantity::PhotonRatio, 1.0),
        ];
        let mut constraints = match case_id {
            CaseId::SingleProbe => vec![(Quantity::ProbeRight, 0.0)],
            CaseId::Fipr => vec![(Quantity::ProbeRatio, 1.0), (Quantity::Phase, PI)],
            CaseId::PhaseResonant => vec![(Quantity::ProbeRatio, 1.0), (Quantity::Detuning, 0.0)],
        };
        constraints.extend(balanced);
        Self {
            case_id,
            constraints,
        }
    }

    /// Whether every constraint holds to absolute tolerance `tol`. A
    /// detuning constraint fails when `delta` is `None`.
    pub fn holds(&self, params: &SystemParams, drive: &DriveConfig, delta: Option<f64>, tol: f64) -> bool {
        if drive.probe_left <= 0.0 {
            return false;
        }
        self.constraints.iter().all(|&(q, required)| {
            q.evaluate(params, drive, delta)
                .is_some_and(|v| (v - required).abs() <= tol)
        })
    }
}

/// First case whose conditions hold (single probe, then FIPR, then phase
/// resonant).
pub fn detect_case(params: &SystemParams, drive: &DriveConfig, delta: Option<f64>) -> Option<CaseId> {
    [CaseId::SingleProbe, CaseId::Fipr, CaseId::PhaseResonant]
        .into_iter()
        .find(|&c| CaseCondition::for_case(c).holds(params, drive, delta, 1e-12))
}

fn guard(den: Complex64, delta: f64) -> Result<()> {
    if den.norm() < POLE_THRESHOLD {
        Err(Error::ResponsePole {
            delta,
            magnitude: den.norm(),
        })
    } else {
        Ok(())
    }
}

/// (R_L, T_L) for a single left probe.
pub fn single_probe_rt(coupling: f64, kappa: f64, delta: f64) -> Result<(f64, f64)> {
    let i = Complex64::i();
    let g2 = coupling * coupling;
    let k = Complex64::from(kappa);
    let d = Complex64::from(delta);
    let lorentz = kappa * kappa + delta * delta;
    let den = (k - i * d) * lorentz + 2.0 * i * g2 * d;
    guard(den, delta)?;
    let num_r = (k + i * d) * lorentz - 2.0 * i * g2 * d - 2.0 * kappa * g2;
    let num_t = Complex64::from(2.0 * kappa * g2);
    Ok(((num_r / den).norm_sqr(), (num_t / den).norm_sqr()))
}

/// (R_L, T_L) under FIPR conditions; R_L is identically one.
pub fn fipr_rt(coupling: f64, kappa: f64, delta: f64) -> Result<(f64, f64)> {
    let i = Complex64::i();
    let g2 = coupling * coupling;
    let k = Complex64::from(kappa);
    let d = Complex64::from(delta);
    let minus = k - i * d;
    let den = 2.0 * i * g2 * d + minus * minus * (k + i * d);
    guard(den, delta)?;
    let num = 2.0 * i * g2 * d - minus * minus * minus;
    Ok((1.0, (num / den).norm_sqr()))
}

/// (R_L, T_L) for equal resonant probes with relative phase θ.
pub fn phase_resonant_rt(coupling: f64, kappa: f64, phase: f64) -> (f64, f64) {
    let e = Complex64::from_polar(1.0, phase);
    let term = 2.0 * coupling * coupling * (1.0 + e) / (kappa * kappa);
    ((1.0 - term).norm_sqr(), (e + term).norm_sqr())
}
