//! Physical parameters, normalized rates and the strong-drive steady state.
//!
//! Physical inputs are SI values (rates in rad/s). [`derive_system_params`]
//! converts them once into [`SystemParams`], where every rate is expressed in
//! units of the left cavity decay rate κ₁ and `rate_unit` keeps κ₁ in rad/s.
//! Gain in the right cavity is a negative `kappa2`.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::{Error, Result};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Device parameters in SI units. Frequencies and rates are angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Free length of each cavity, m.
    pub cavity_length: f64,
    /// Effective mass of the membrane, kg.
    pub oscillator_mass: f64,
    /// Cavity resonance ω₀.
    pub cavity_freq: f64,
    /// Mechanical frequency ω_m.
    pub mech_freq: f64,
    /// Control field frequency ω_c.
    pub control_freq: f64,
    /// Left cavity decay κ₁ (> 0).
    pub decay_left: f64,
    /// Right cavity decay κ₂; negative for gain.
    pub decay_right: f64,
    /// Mechanical damping γ_m.
    pub mech_damping: f64,
    /// Control powers (left, right), W.
    pub control_powers: [f64; 2],
    /// Probe powers (left, right), W.
    pub probe_powers: [f64; 2],
}

impl PhysicalParams {
    /// Membrane-in-the-middle device: L = 25 mm, m = 145 ng,
    /// κ = 2π × 215 kHz, ω_m = 2π × 947 kHz, 1064 nm control light.
    ///
    /// The right cavity is gain-balanced (κ₂ = −κ₁), γ_m = κ₁, and the
    /// control is red-detuned by one mechanical frequency.
    pub fn reference_device() -> Self {
        let kappa = TAU * 215e3;
        let mech_freq = TAU * 947e3;
        let control_freq = TAU * SPEED_OF_LIGHT / 1064e-9;
        Self {
            cavity_length: 25e-3,
            oscillator_mass: 145e-12,
            cavity_freq: control_freq + mech_freq,
            mech_freq,
            control_freq,
            decay_left: kappa,
            decay_right: -kappa,
            mech_damping: kappa,
            control_powers: [10e-3, 10e-3],
            probe_powers: [1e-6, 1e-6],
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("cavity_length", self.cavity_length)?;
        positive("oscillator_mass", self.oscillator_mass)?;
        positive("cavity_freq", self.cavity_freq)?;
        positive("mech_freq", self.mech_freq)?;
        positive("control_freq", self.control_freq)?;
        positive("decay_left", self.decay_left)?;
        positive("mech_damping", self.mech_damping)?;
        finite("decay_right", self.decay_right)?;
        for (name, p) in [
            ("control_power_left", self.control_powers[0]),
            ("control_power_right", self.control_powers[1]),
            ("probe_power_left", self.probe_powers[0]),
            ("probe_power_right", self.probe_powers[1]),
        ] {
            non_negative(name, p)?;
        }
        Ok(())
    }

    /// Single-photon coupling g₀ = ω₀ √(ħ / (2 m ω_m)) / L, rad/s.
    pub fn coupling_constant(&self) -> f64 {
        self.cavity_freq * (HBAR / (2.0 * self.oscillator_mass * self.mech_freq)).sqrt()
            / self.cavity_length
    }

    pub fn quality_factor(&self) -> f64 {
        self.mech_freq / self.mech_damping
    }

    /// Control amplitudes ε_c = √(2|κ| P / (ħ ω_c)) in rad/s.
    ///
    /// The right cavity uses |κ₂| so that a gain cavity still maps power to a
    /// real amplitude.
    pub fn control_amplitudes(&self) -> [f64; 2] {
        let scale = 2.0 / (HBAR * self.control_freq);
        [
            (scale * self.decay_left * self.control_powers[0]).sqrt(),
            (scale * self.decay_right.abs() * self.control_powers[1]).sqrt(),
        ]
    }

    /// Probe amplitudes ε = √(2|κ| ℘ / (ħ ω_p)) with ω_p taken at the cavity
    /// resonance.
    pub fn probe_amplitudes(&self) -> [f64; 2] {
        let scale = 2.0 / (HBAR * self.cavity_freq);
        [
            (scale * self.decay_left * self.probe_powers[0]).sqrt(),
            (scale * self.decay_right.abs() * self.probe_powers[1]).sqrt(),
        ]
    }
}

/// Rates of the linearized model, all in units of `rate_unit` rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Left (passive) cavity decay κ₁.
    pub kappa1: f64,
    /// Right cavity decay κ₂, negative for gain.
    pub kappa2: f64,
    /// Mechanical damping γ_m.
    pub gamma_m: f64,
    /// Mechanical frequency ω_m.
    pub omega_m: f64,
    /// Single-photon optomechanical coupling g₀.
    pub g0: f64,
    /// Effective coupling G = g₀|a₁s|.
    pub coupling: f64,
    /// Photon-number ratio n = |a₂s / a₁s|².
    pub photon_ratio: f64,
    /// Cavity-control detuning Δ₀.
    pub detuning: f64,
    /// Size of one rate unit in rad/s (κ₁ of the device for normalized sets).
    pub rate_unit: f64,
}

impl SystemParams {
    /// κ₁ = −κ₂ = γ_m = 1 and n = 1, the balanced gain/loss configuration,
    /// with the reference device's ω_m, g₀ and rate unit.
    pub fn gain_balanced(coupling: f64) -> Self {
        let phys = PhysicalParams::reference_device();
        let kappa = phys.decay_left;
        let omega_m = phys.mech_freq / kappa;
        Self {
            kappa1: 1.0,
            kappa2: -1.0,
            gamma_m: 1.0,
            omega_m,
            g0: phys.coupling_constant() / kappa,
            coupling,
            photon_ratio: 1.0,
            detuning: omega_m,
            rate_unit: kappa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("kappa1", self.kappa1)?;
        positive("gamma_m", self.gamma_m)?;
        positive("omega_m", self.omega_m)?;
        positive("rate_unit", self.rate_unit)?;
        finite("kappa2", self.kappa2)?;
        finite("detuning", self.detuning)?;
        non_negative("g0", self.g0)?;
        non_negative("coupling", self.coupling)?;
        non_negative("photon_ratio", self.photon_ratio)?;
        Ok(())
    }

    /// |a₂s / a₁s|, the factor multiplying G on the right-cavity coupling.
    pub fn amplitude_ratio(&self) -> f64 {
        self.photon_ratio.sqrt()
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega_m / self.gamma_m
    }

    /// Same physical system with every rate divided by `scale`.
    pub fn rescaled(&self, scale: f64) -> Self {
        Self {
            kappa1: self.kappa1 / scale,
            kappa2: self.kappa2 / scale,
            gamma_m: self.gamma_m / scale,
            omega_m: self.omega_m / scale,
            g0: self.g0 / scale,
            coupling: self.coupling / scale,
            photon_ratio: self.photon_ratio,
            detuning: self.detuning / scale,
            rate_unit: self.rate_unit * scale,
        }
    }
}

/// Probe and control drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveConfig {
    /// Left probe amplitude ε_L (real, ≥ 0).
    pub probe_left: f64,
    /// Right probe amplitude ε_R (real, ≥ 0).
    pub probe_right: f64,
    /// Relative probe phase θ, radians. Any real value is accepted.
    pub phase: f64,
    /// Left control amplitude ε_cL, only used for the steady state.
    pub control_left: Option<f64>,
    /// Right control amplitude ε_cR, only used for the steady state.
    pub control_right: Option<f64>,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            probe_left: 1.0,
            probe_right: 1.0,
            phase: 0.0,
            control_left: None,
            control_right: None,
        }
    }
}

impl DriveConfig {
    /// Probe on the left cavity only.
    pub fn left_only(amplitude: f64) -> Self {
        Self {
            probe_left: amplitude,
            probe_right: 0.0,
            ..Self::default()
        }
    }

    /// Probe on the right cavity only.
    pub fn right_only(amplitude: f64) -> Self {
        Self {
            probe_left: 0.0,
            probe_right: amplitude,
            ..Self::default()
        }
    }

    /// Equal probes on both sides with relative phase `phase`.
    pub fn symmetric(amplitude: f64, phase: f64) -> Self {
        Self {
            probe_left: amplitude,
            probe_right: amplitude,
            phase,
            ..Self::default()
        }
    }

    pub fn with_controls(mut self, left: f64, right: f64) -> Self {
        self.control_left = Some(left);
        self.control_right = Some(right);
        self
    }

    /// θ reduced to [0, 2π).
    pub fn reduced_phase(&self) -> f64 {
        let r = self.phase.rem_euclid(TAU);
        if r >= TAU {
            0.0
        } else {
            r
        }
    }

    /// Complex right probe ε_R e^{iθ}.
    pub fn right_probe(&self) -> Complex64 {
        Complex64::from_polar(self.probe_right, self.phase)
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("probe_left", self.probe_left)?;
        non_negative("probe_right", self.probe_right)?;
        finite("phase", self.phase)?;
        if let Some(c) = self.control_left {
            non_negative("control_left", c)?;
        }
        if let Some(c) = self.control_right {
            non_negative("control_right", c)?;
        }
        Ok(())
    }
}

/// Self-consistent steady state of the strongly driven system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub b_s: Complex64,
    pub a1_s: Complex64,
    pub a2_s: Complex64,
    /// Effective detuning Δ₁ = Δ₀ − 2g₀Re(b_s).
    pub delta1: f64,
    /// Effective detuning Δ₂ = Δ₀ + 2g₀Re(b_s).
    pub delta2: f64,
    pub iterations: usize,
}

impl SteadyState {
    /// Relative residual of the fixed-point equations at this state.
    pub fn residual(&self, params: &SystemParams, drive: &DriveConfig) -> f64 {
        let (b, a1, a2) = steady_map(params, drive, self.b_s.re);
        let err = [
            crate::rel_diff_c(self.b_s, b),
            crate::rel_diff_c(self.a1_s, a1),
            crate::rel_diff_c(self.a2_s, a2),
        ];
        err.into_iter().fold(0.0, f64::max)
    }
}

/// Fixed-point iteration controls for [`steady_state_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Weight of the new iterate, x ← (1 − w)x + w f(x).
    pub damping: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            tolerance: 1e-12,
            damping: 0.5,
        }
    }
}

/// Converts physical parameters into normalized [`SystemParams`].
///
/// Control amplitudes come from `drive` when given, otherwise from the
/// control powers. G and n are read off the self-consistent steady state.
pub fn derive_system_params(phys: &PhysicalParams, drive: &DriveConfig) -> Result<SystemParams> {
    Ok(physical_setup(phys, drive)?.params)
}

/// Normalized parameters, drive and steady state of a physical device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalSetup {
    pub params: SystemParams,
    /// Probe and control amplitudes in units of κ₁.
    pub drive: DriveConfig,
    pub steady: SteadyState,
}

pub fn physical_setup(phys: &PhysicalParams, drive: &DriveConfig) -> Result<PhysicalSetup> {
    phys.validate()?;
    drive.validate()?;
    let kappa = phys.decay_left;
    let [control_left, control_right] = phys.control_amplitudes();
    let control_left = drive.control_left.unwrap_or(control_left);
    let control_right = drive.control_right.unwrap_or(control_right);

    let mut params = SystemParams {
        kappa1: 1.0,
        kappa2: phys.decay_right / kappa,
        gamma_m: phys.mech_damping / kappa,
        omega_m: phys.mech_freq / kappa,
        g0: phys.coupling_constant() / kappa,
        coupling: 0.0,
        photon_ratio: 0.0,
        detuning: (phys.cavity_freq - phys.control_freq) / kappa,
        rate_unit: kappa,
    };
    let drive = DriveConfig {
        probe_left: drive.probe_left,
        probe_right: drive.probe_right,
        phase: drive.phase,
        control_left: Some(control_left / kappa),
        control_right: Some(control_right / kappa),
    };
    let steady = steady_state(&params, &drive)?;
    let a1 = steady.a1_s.norm();
    let a2 = steady.a2_s.norm();
    params.coupling = params.g0 * a1;
    params.photon_ratio = if a1 > 0.0 {
        (a2 / a1).powi(2)
    } else if a2 == 0.0 {
        0.0
    } else {
        return Err(Error::DegenerateCoupling);
    };
    Ok(PhysicalSetup {
        params,
        drive,
        steady,
    })
}

/// One application of the steady-state equations given Re(b_s).
fn steady_map(params: &SystemParams, drive: &DriveConfig, re_b: f64) -> (Complex64, Complex64, Complex64) {
    let i = Complex64::i();
    let delta1 = params.detuning - 2.0 * params.g0 * re_b;
    let delta2 = params.detuning + 2.0 * params.g0 * re_b;
    let a1 = drive.control_left.unwrap_or(0.0) / Complex64::new(params.kappa1, delta1);
    let a2 = drive.control_right.unwrap_or(0.0) / Complex64::new(params.kappa2, delta2);
    let b = -i * params.g0 * (a2.norm_sqr() - a1.norm_sqr())
        / Complex64::new(params.gamma_m, params.omega_m);
    (b, a1, a2)
}

/// Steady state with default iteration settings.
pub fn steady_state(params: &SystemParams, drive: &DriveConfig) -> Result<SteadyState> {
    steady_state_with(params, drive, &SteadyStateOptions::default())
}

/// Damped fixed-point iteration on Re(b_s), which is the only quantity that
/// feeds back into the cavity detunings.
pub fn steady_state_with(
    params: &SystemParams,
    drive: &DriveConfig,
    opts: &SteadyStateOptions,
) -> Result<SteadyState> {
    positive("gamma_m", params.gamma_m)?;
    positive("omega_m", params.omega_m)?;
    drive.validate()?;
    let floor = 1e-15 * params.omega_m;

    let check = |re_b: f64| -> Result<()> {
        let d1 = params.detuning - 2.0 * params.g0 * re_b;
        let d2 = params.detuning + 2.0 * params.g0 * re_b;
        for m in [params.kappa1.hypot(d1), params.kappa2.hypot(d2)] {
            if m < floor {
                return Err(Error::SingularCavityResponse { magnitude: m });
            }
        }
        Ok(())
    };

    let mut x = 0.0;
    let mut last_step = f64::INFINITY;
    for iteration in 1..=opts.max_iterations {
        check(x)?;
        let (b, _, _) = steady_map(params, drive, x);
        let step = b.re - x;
        if !step.is_finite() {
            break;
        }
        if step.abs() <= 0.1 * opts.tolerance * x.abs().max(b.re.abs()) || step == 0.0 {
            check(b.re)?;
            let (b_s, a1_s, a2_s) = steady_map(params, drive, b.re);
            return Ok(SteadyState {
                b_s,
                a1_s,
                a2_s,
                delta1: params.detuning - 2.0 * params.g0 * b_s.re,
                delta2: params.detuning + 2.0 * params.g0 * b_s.re,
                iterations: iteration,
            });
        }
        last_step = step.abs();
        x += opts.damping * step;
    }
    Err(Error::SteadyStateDivergence {
        iterations: opts.max_iterations,
        last_step,
    })
}

/// Steady state implied by a direct (G, n) specification with real, positive
/// intracavity amplitudes a₁s = G/g₀ and a₂s = √n G/g₀.
pub fn implied_steady_state(params: &SystemParams) -> Result<SteadyState> {
    positive("g0", params.g0)?;
    let a1 = params.coupling / params.g0;
    let a2 = params.amplitude_ratio() * a1;
    let b_s = -Complex64::i() * params.g0 * (a2 * a2 - a1 * a1)
        / Complex64::new(params.gamma_m, params.omega_m);
    Ok(SteadyState {
        b_s,
        a1_s: a1.into(),
        a2_s: a2.into(),
        delta1: params.detuning - 2.0 * params.g0 * b_s.re,
        delta2: params.detuning + 2.0 * params.g0 * b_s.re,
        iterations: 0,
    })
}

/// Estimated photon-number ratio from the control amplitudes alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    /// n ≈ ε_cR²(κ₁² + ω_m²) / [ε_cL²(κ₂² + ω_m²)].
    pub ratio: f64,
    /// ω_m / g₀; the estimate assumes this is large.
    pub coupling_margin: f64,
}

impl RatioEstimate {
    pub fn is_reliable(&self, threshold: f64) -> bool {
        self.coupling_margin >= threshold
    }
}

/// Photon-number ratio assuming Δ₁ ≈ Δ₂ ≈ ω_m and negligible feedback.
/// The exact value is `|a2_s / a1_s|²` from [`steady_state`].
pub fn photon_ratio_estimate(params: &SystemParams, drive: &DriveConfig) -> RatioEstimate {
    let left = drive.control_left.unwrap_or(0.0);
    let right = drive.control_right.unwrap_or(0.0);
    let w2 = params.omega_m * params.omega_m;
    let num = right * right * (params.kappa1 * params.kappa1 + w2);
    let den = left * left * (params.kappa2 * params.kappa2 + w2);
    RatioEstimate {
        ratio: num / den,
        coupling_margin: params.omega_m / params.g0,
    }
}

/// Thresholds for the regime flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeThresholds {
    /// Minimum ratio for a "much greater than" comparison.
    pub much_greater: f64,
    /// Maximum relative deviation for an "approximately equal" comparison.
    pub approx_rel: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            much_greater: 10.0,
            approx_rel: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub ok: bool,
    pub margin: f64,
}

/// Which modelling assumptions hold at a working point. Informative only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeReport {
    /// ω_m / max(|κ₁|, |κ₂|) ≫ 1.
    pub resolved_sideband: Check,
    /// Q = ω_m / γ_m ≫ 1.
    pub high_q: Check,
    /// ω_m / (g₀|a₁s|) ≫ 1.
    pub rwa_left: Check,
    /// ω_m / (g₀|a₂s|) ≫ 1.
    pub rwa_right: Check,
    /// |Δ₁ − ω_m| / ω_m ≈ 0.
    pub red_detuned_left: Check,
    /// |Δ₂ − ω_m| / ω_m ≈ 0.
    pub red_detuned_right: Check,
    /// 2g₀Re(b_s)/Δ₀, negligible when its magnitude is below 1/much_greater.
    pub ratio_term_negligible: Check,
}

impl RegimeReport {
    pub fn all_ok(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.ok)
    }

    pub fn checks(&self) -> [(&'static str, Check); 7] {
        [
            ("resolved_sideband", self.resolved_sideband),
            ("high_q", self.high_q),
            ("rwa_left", self.rwa_left),
            ("rwa_right", self.rwa_right),
            ("red_detuned_left", self.red_detuned_left),
            ("red_detuned_right", self.red_detuned_right),
            ("ratio_term_negligible", self.ratio_term_negligible),
        ]
    }
}

pub fn validate_regime(params: &SystemParams, ss: &SteadyState) -> RegimeReport {
    validate_regime_with(params, ss, &RegimeThresholds::default())
}

pub fn validate_regime_with(
    params: &SystemParams,
    ss: &SteadyState,
    th: &RegimeThresholds,
) -> RegimeReport {
    let much = |margin: f64| Check {
        ok: margin >= th.much_greater,
        margin,
    };
    let near = |margin: f64| Check {
        ok: margin <= th.approx_rel,
        margin,
    };
    let wm = params.omega_m;
    let ratio = 2.0 * params.g0 * ss.b_s.re / params.detuning;
    RegimeReport {
        resolved_sideband: much(wm / params.kappa1.abs().max(params.kappa2.abs())),
        high_q: much(params.quality_factor()),
        rwa_left: much(wm / (params.g0 * ss.a1_s.norm())),
        rwa_right: much(wm / (params.g0 * ss.a2_s.norm())),
        red_detuned_left: near((ss.delta1 - wm).abs() / wm),
        red_detuned_right: near((ss.delta2 - wm).abs() / wm),
        ratio_term_negligible: Check {
            ok: ratio.abs() * th.much_greater <= 1.0,
            margin: ratio,
        },
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and non-negative, got {value}"),
        })
    }
}

fn finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite, got {value}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn driven(left: f64, right: f64) -> (SystemParams, DriveConfig) {
        let mut p = SystemParams::gain_balanced(0.0);
        p.g0 = 1e-3;
        (p, DriveConfig::left_only(1.0).with_controls(left, right))
    }

    #[test]
    fn reference_coupling_constant() {
        let phys = PhysicalParams::reference_device();
        let g0 = phys.coupling_constant();
        // ω₀ √(ħ/(2mω_m)) / L evaluated by hand
        let expected = phys.cavity_freq
            * (1.054_571_817e-34_f64 / (2.0 * 145e-12 * phys.mech_freq)).sqrt()
            / 25e-3;
        assert!(crate::rel_diff(g0, expected) < 1e-15);
        assert!(g0 > 10.0 && g0 < 30.0, "g0 = {g0}");
        assert!(crate::rel_diff(phys.decay_left, 2.0 * PI * 215e3) < 1e-15);
    }

    #[test]
    fn zero_left_power_gives_zero_coupling() {
        let mut phys = PhysicalParams::reference_device();
        phys.control_powers = [0.0, 0.0];
        let p = derive_system_params(&phys, &DriveConfig::default()).unwrap();
        assert_eq!(p.coupling, 0.0);
        assert_eq!(phys.control_amplitudes()[0], 0.0);

        phys.control_powers = [0.0, 1e-3];
        assert_eq!(
            derive_system_params(&phys, &DriveConfig::default()),
            Err(Error::DegenerateCoupling)
        );
    }

    #[test]
    fn symmetric_powers_give_unit_ratio() {
        let phys = PhysicalParams::reference_device();
        let setup = physical_setup(&phys, &DriveConfig::default()).unwrap();
        assert_eq!(setup.params.photon_ratio, 1.0);
        assert_eq!(setup.steady.b_s, Complex64::new(0.0, 0.0));
        assert_eq!(setup.steady.delta1, setup.steady.delta2);
        assert!(setup.params.coupling > 0.0);
    }

    #[test]
    fn non_positive_parameters_rejected() {
        let mut phys = PhysicalParams::reference_device();
        phys.oscillator_mass = 0.0;
        assert!(matches!(
            derive_system_params(&phys, &DriveConfig::default()),
            Err(Error::NonPositiveParameter {
                name: "oscillator_mass",
                ..
            })
        ));
        let mut phys = PhysicalParams::reference_device();
        phys.mech_damping = -1.0;
        assert!(phys.validate().is_err());
    }

    #[test]
    fn undriven_system_is_at_rest() {
        let (p, d) = driven(0.0, 0.0);
        let ss = steady_state(&p, &d).unwrap();
        assert_eq!(ss.b_s, Complex64::new(0.0, 0.0));
        assert_eq!(ss.a1_s, Complex64::new(0.0, 0.0));
        assert_eq!(ss.a2_s, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn decoupled_cavities_match_closed_form() {
        let (mut p, d) = driven(3.0, 2.0);
        p.g0 = 0.0;
        p.kappa2 = 0.4;
        let ss = steady_state(&p, &d).unwrap();
        let a1 = 3.0 / Complex64::new(p.kappa1, p.detuning);
        let a2 = 2.0 / Complex64::new(p.kappa2, p.detuning);
        assert!(crate::rel_diff_c(ss.a1_s, a1) < 1e-15);
        assert!(crate::rel_diff_c(ss.a2_s, a2) < 1e-15);
        assert_eq!(ss.b_s, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn equal_photon_numbers_cancel_radiation_pressure() {
        // |κ₂| = κ₁ with equal drives: |a₁s| = |a₂s| at Δ₁ = Δ₂
        let (p, d) = driven(50.0, 50.0);
        let ss = steady_state(&p, &d).unwrap();
        assert_eq!(ss.b_s, Complex64::new(0.0, 0.0));
        assert_eq!(ss.a1_s.norm_sqr(), ss.a2_s.norm_sqr());
        let report = validate_regime(&p, &ss);
        assert_eq!(report.ratio_term_negligible.margin, 0.0);
        assert!(report.ratio_term_negligible.ok);
    }

    #[test]
    fn feedback_fixed_point_is_self_consistent() {
        let (mut p, d) = driven(400.0, 100.0);
        p.g0 = 5e-3;
        let ss = steady_state(&p, &d).unwrap();
        assert!(ss.b_s.re != 0.0);
        assert!(ss.residual(&p, &d) < 1e-12, "residual {}", ss.residual(&p, &d));
        assert!(ss.delta1 != ss.delta2);
    }

    #[test]
    fn divergent_iteration_is_reported() {
        let (mut p, d) = driven(1e6, 0.0);
        p.g0 = 1.0;
        let opts = SteadyStateOptions {
            max_iterations: 20,
            ..Default::default()
        };
        assert!(matches!(
            steady_state_with(&p, &d, &opts),
            Err(Error::SteadyStateDivergence { .. })
        ));
    }

    #[test]
    fn singular_cavity_detected() {
        let (mut p, d) = driven(1.0, 1.0);
        p.g0 = 0.0;
        p.kappa2 = 0.0;
        p.detuning = 0.0;
        assert!(matches!(
            steady_state(&p, &d),
            Err(Error::SingularCavityResponse { .. })
        ));
    }

    #[test]
    fn ratio_estimate_cases() {
        let (p, d) = driven(1.0, 1.0);
        // κ₂ = −κ₁: squares agree
        assert_eq!(photon_ratio_estimate(&p, &d).ratio, 1.0);

        let (mut p, d) = driven(1.0, 2.0);
        p.kappa2 = p.kappa1;
        let est = photon_ratio_estimate(&p, &d);
        assert_eq!(est.ratio, 4.0);
        let ss = steady_state(&p, &d).unwrap();
        let exact = (ss.a2_s.norm() / ss.a1_s.norm()).powi(2);
        assert!(crate::rel_diff(est.ratio, exact) < 1e-2);
        assert!(est.is_reliable(1e3));
    }

    #[test]
    fn regime_report_margins() {
        let p = SystemParams::gain_balanced(1.0);
        let ss = implied_steady_state(&p).unwrap();
        let report = validate_regime(&p, &ss);
        assert!(crate::rel_diff(report.resolved_sideband.margin, 947.0 / 215.0) < 1e-12);
        assert!(!report.resolved_sideband.ok);
        let lax = validate_regime_with(
            &p,
            &ss,
            &RegimeThresholds {
                much_greater: 3.0,
                approx_rel: 0.05,
            },
        );
        assert!(lax.resolved_sideband.ok);

        let mut q = p;
        q.gamma_m = q.omega_m / 1e5;
        let report = validate_regime(&q, &ss);
        assert!(report.high_q.ok);
        assert!(crate::rel_diff(report.high_q.margin, 1e5) < 1e-12);
        assert!(report.red_detuned_left.ok && report.red_detuned_right.ok);
        assert!(crate::rel_diff(report.rwa_left.margin, 947.0 / 215.0) < 1e-12);
        assert!(!report.rwa_left.ok);
    }

    #[test]
    fn doubling_powers_keeps_ratio() {
        let phys = PhysicalParams::reference_device();
        let base = physical_setup(&phys, &DriveConfig::default()).unwrap();
        let mut doubled = phys;
        doubled.control_powers = [2.0 * phys.control_powers[0], 2.0 * phys.control_powers[1]];
        let twice = physical_setup(&doubled, &DriveConfig::default()).unwrap();
        let r1 = twice.steady.a1_s.norm_sqr() / base.steady.a1_s.norm_sqr();
        let r2 = twice.steady.a2_s.norm_sqr() / base.steady.a2_s.norm_sqr();
        assert!((r1 - 2.0).abs() < 1e-12 && (r2 - 2.0).abs() < 1e-12);
        assert_eq!(twice.params.photon_ratio, base.params.photon_ratio);
    }

    #[test]
    fn phase_reduction() {
        let d = DriveConfig::symmetric(1.0, -PI / 2.0);
        assert!((d.reduced_phase() - 1.5 * PI).abs() < 1e-15);
        let d = DriveConfig::symmetric(1.0, 5.0 * PI);
        assert!((d.reduced_phase() - PI).abs() < 1e-14);
    }
}
