//! Independent checks on the closed-form response.
//!
//! Three routes reach the Stokes amplitudes: the closed form in
//! [`crate::response`], a generic pivoted LU solve of the harmonic system
//! `(−iδ I − A) x = d`, and direct time integration of `ẋ = A x + d e^{−iδt}`
//! followed by a harmonic fit. The state order is (δb, δa₁, δa₂) throughout.
//! The time-domain route only exists for dynamically stable systems, which
//! [`system_stability`] decides from the eigenvalues of `A`.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::{DriveConfig, SystemParams};
use crate::response::{fluctuation_amplitudes, response_denominator, FluctuationAmps};
use crate::{Error, Result};

/// Pivot magnitude, relative to the matrix norm, below which the harmonic
/// system is treated as singular.
pub const SINGULAR_PIVOT: f64 = 1e-14;

/// Dynamics matrix `A` and probe drive vector `d` of the linearized system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemMatrix {
    pub dynamics: Matrix3<Complex64>,
    pub drive: Vector3<Complex64>,
}

impl SystemMatrix {
    pub fn new(params: &SystemParams, drive: &DriveConfig) -> Self {
        Self {
            dynamics: dynamics_matrix(params),
            drive: Vector3::new(
                Complex64::new(0.0, 0.0),
                drive.probe_left.into(),
                drive.right_probe(),
            ),
        }
    }

    /// `−iδ I − A`.
    pub fn harmonic(&self, delta: f64) -> Matrix3<Complex64> {
        Matrix3::from_diagonal_element(Complex64::new(0.0, -delta)) - self.dynamics
    }

    /// ‖(−iδI − A)x − d‖ / ‖d‖, or the bare norm when `d` is zero.
    pub fn residual(&self, x: &FluctuationAmps) -> f64 {
        let v = Vector3::from(x.as_array());
        let r = (self.harmonic(x.delta) * v - self.drive).norm();
        let scale = self.drive.norm();
        if scale == 0.0 {
            r
        } else {
            r / scale
        }
    }
}

/// `A` with real, positive intracavity amplitudes:
///
/// ```text
/// [ −γ_m     iG     −iG√n ]
/// [  iG     −κ₁       0   ]
/// [ −iG√n     0     −κ₂   ]
/// ```
pub fn dynamics_matrix(params: &SystemParams) -> Matrix3<Complex64> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let g = params.coupling;
    let gr = g * params.amplitude_ratio();
    Matrix3::new(
        c(-params.gamma_m, 0.0), c(0.0, g), c(0.0, -gr),
        c(0.0, g), c(-params.kappa1, 0.0), c(0.0, 0.0),
        c(0.0, -gr), c(0.0, 0.0), c(-params.kappa2, 0.0),
    )
}

/// Result of the harmonic linear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolve {
    pub amps: FluctuationAmps,
    /// 1-norm condition number of `−iδI − A`.
    pub condition: f64,
    /// Smallest LU pivot relative to the Frobenius norm.
    pub pivot_ratio: f64,
}

/// Stokes amplitudes from a pivoted LU solve of `(−iδI − A)x = d`.
pub fn solve_linear_response(params: &SystemParams, drive: &DriveConfig, delta: f64) -> Result<FluctuationAmps> {
    Ok(solve_linear_response_detailed(params, drive, delta)?.amps)
}

pub fn solve_linear_response_detailed(
    params: &SystemParams,
    drive: &DriveConfig,
    delta: f64,
) -> Result<LinearSolve> {
    let sys = SystemMatrix::new(params, drive);
    let m = sys.harmonic(delta);
    let norm = m.norm();
    let lu = m.lu();
    let u = lu.u();
    let pivot = (0..3).map(|k| u[(k, k)].norm()).fold(f64::INFINITY, f64::min);
    let pivot_ratio = pivot / norm;
    if !(pivot_ratio >= SINGULAR_PIVOT) {
        return Err(Error::SingularSystem {
            delta,
            pivot: pivot_ratio,
        });
    }
    let x = lu.solve(&sys.drive).ok_or(Error::SingularSystem {
        delta,
        pivot: pivot_ratio,
    })?;
    let condition = lu
        .try_inverse()
        .map(|inv| one_norm(&m) * one_norm(&inv))
        .unwrap_or(f64::INFINITY);
    Ok(LinearSolve {
        amps: FluctuationAmps {
            mech: x[0],
            left: x[1],
            right: x[2],
            delta,
        },
        condition,
        pivot_ratio,
    })
}

fn one_norm(m: &Matrix3<Complex64>) -> f64 {
    (0..3)
        .map(|j| (0..3).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigenvalues of `A` and the resulting stability verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// Sorted by decreasing real part.
    pub eigenvalues: [Complex64; 3],
    pub max_real_part: f64,
    /// `max_real_part < 0`.
    pub stable: bool,
    /// |max_real_part| / κ₁.
    pub margin: f64,
}

/// Eigenvalues of a 3×3 complex matrix from its complex Schur form.
pub fn eigenvalues(m: &Matrix3<Complex64>) -> [Complex64; 3] {
    let schur = m.schur();
    let (_, t) = schur.unpack();
    let mut ev = [t[(0, 0)], t[(1, 1)], t[(2, 2)]];
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    ev
}

pub fn system_stability(params: &SystemParams) -> StabilityReport {
    let ev = eigenvalues(&dynamics_matrix(params));
    let max_real_part = ev[0].re;
    StabilityReport {
        eigenvalues: ev,
        max_real_part,
        stable: max_real_part < 0.0,
        margin: max_real_part.abs() / params.kappa1,
    }
}

/// Monic characteristic polynomial `λ³ + c₂λ² + c₁λ + c₀` of `m`, returned as
/// `[c₂, c₁, c₀]`.
pub fn characteristic_polynomial(m: &Matrix3<Complex64>) -> [Complex64; 3] {
    let trace = m.trace();
    let minors = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)]
        - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    [-trace, minors, -m.determinant()]
}

/// Roots of `λ³ + c₂λ² + c₁λ + c₀` by Cardano's formula with two Newton
/// polishing steps per root.
pub fn cubic_roots(coeffs: [Complex64; 3]) -> [Complex64; 3] {
    let [c2, c1, c0] = coeffs;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    let u3 = if (-q / 2.0 + disc).norm() >= (-q / 2.0 - disc).norm() {
        -q / 2.0 + disc
    } else {
        -q / 2.0 - disc
    };
    let u = u3.cbrt();
    let omega = Complex64::from_polar(1.0, TAU / 3.0);
    let mut roots = [Complex64::new(0.0, 0.0); 3];
    let mut rot = Complex64::new(1.0, 0.0);
    for root in roots.iter_mut() {
        let uk = u * rot;
        let t = if uk.norm() == 0.0 { uk } else { uk - p / (3.0 * uk) };
        *root = t - c2 / 3.0;
        rot *= omega;
    }
    let poly = |z: Complex64| ((z + c2) * z + c1) * z + c0;
    let dpoly = |z: Complex64| (3.0 * z + 2.0 * c2) * z + c1;
    for root in roots.iter_mut() {
        for _ in 0..2 {
            let d = dpoly(*root);
            if d.norm() == 0.0 {
                break;
            }
            *root -= poly(*root) / d;
        }
    }
    roots
}

/// Coupling interval on which the system is stable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingWindow {
    pub start: f64,
    pub end: f64,
    /// `end` is the scan limit rather than a located boundary.
    pub open_end: bool,
}

/// Stability of the system as the effective coupling G is varied.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityScan {
    pub g_max: f64,
    pub samples: usize,
    /// Zero crossings of the largest real part, located by bisection.
    pub boundaries: Vec<f64>,
    pub windows: Vec<CouplingWindow>,
    /// (G, max real part) at the most stable sampled coupling.
    pub most_stable: (f64, f64),
}

/// Scans G ∈ [0, g_max] on `samples` points and bisects every sign change of
/// the largest eigenvalue real part. Other parameters are taken from `params`.
pub fn stable_coupling_windows(params: &SystemParams, g_max: f64, samples: usize) -> StabilityScan {
    let samples = samples.max(2);
    let growth = |g: f64| {
        let mut p = *params;
        p.coupling = g;
        system_stability(&p).max_real_part
    };
    let gs = crate::response::linspace(0.0, g_max, samples);
    let values: Vec<f64> = gs.par_iter().map(|&g| growth(g)).collect();

    let mut boundaries = Vec::new();
    for k in 1..samples {
        let (mut lo, mut hi) = (gs[k - 1], gs[k]);
        let (flo, fhi) = (values[k - 1], values[k]);
        if (flo < 0.0) == (fhi < 0.0) {
            continue;
        }
        let lo_stable = flo < 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if (growth(mid) < 0.0) == lo_stable {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        boundaries.push(0.5 * (lo + hi));
    }

    let mut windows = Vec::new();
    let mut start = (values[0] < 0.0).then_some(0.0);
    let mut crossings = boundaries.iter();
    for k in 1..samples {
        let (was, is) = (values[k - 1] < 0.0, values[k] < 0.0);
        if was == is {
            continue;
        }
        let b = *crossings.next().expect("one boundary per sign change");
        if is {
            start = Some(b);
        } else if let Some(s) = start.take() {
            windows.push(CouplingWindow {
                start: s,
                end: b,
                open_end: false,
            });
        }
    }
    if let Some(s) = start {
        windows.push(CouplingWindow {
            start: s,
            end: g_max,
            open_end: true,
        });
    }

    let most_stable = gs
        .iter()
        .zip(&values)
        .fold((0.0, f64::INFINITY), |acc, (&g, &v)| if v < acc.1 { (g, v) } else { acc });

    StabilityScan {
        g_max,
        samples,
        boundaries,
        windows,
        most_stable,
    }
}

/// Horizon and step for [`integrate_time_domain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationSettings {
    pub horizon: f64,
    pub dt: f64,
}

/// Horizon of 40 decay times and a step of 1% of the fastest time scale,
/// enough for transients to fall below 1e-12 of the steady amplitude over the
/// fitting window.
pub fn integration_settings(params: &SystemParams, delta: f64) -> Result<IntegrationSettings> {
    let report = system_stability(params);
    if !report.stable {
        return Err(Error::UnstableSystem {
            max_real_part: report.max_real_part,
        });
    }
    Ok(IntegrationSettings {
        horizon: 40.0 / report.max_real_part.abs(),
        dt: 0.01 / fastest_rate(params, &report, delta),
    })
}

fn fastest_rate(params: &SystemParams, report: &StabilityReport, delta: f64) -> f64 {
    let spectral = report.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    spectral.max(delta.abs()).max(params.kappa1)
}

/// Integrates `ẋ = A x + d e^{−iδt}` from rest with fixed-step RK4 and
/// extracts the Stokes amplitude x₊ from the last quarter of the horizon.
///
/// The fit projects onto e^{−iδt} over a whole number of probe periods (or
/// averages when δ = 0). A residual above 1e-4 of |x₊| means the transient
/// has not died out.
pub fn integrate_time_domain(
    params: &SystemParams,
    drive: &DriveConfig,
    delta: f64,
    horizon: f64,
    dt: f64,
) -> Result<FluctuationAmps> {
    let report = system_stability(params);
    if !report.stable {
        return Err(Error::UnstableSystem {
            max_real_part: report.max_real_part,
        });
    }
    let min_horizon = 10.0 / report.max_real_part.abs();
    if !(horizon >= min_horizon) {
        return Err(Error::InvalidIntegration(format!(
            "horizon {horizon} is shorter than 10 decay times ({min_horizon})"
        )));
    }
    let max_dt = 0.01 / fastest_rate(params, &report, delta);
    if !(dt > 0.0 && dt <= max_dt * (1.0 + 1e-12)) {
        return Err(Error::InvalidIntegration(format!("step {dt} exceeds {max_dt}")));
    }

    let sys = SystemMatrix::new(params, drive);
    let a = sys.dynamics;
    let d = sys.drive;
    let steps = (horizon / dt).ceil() as usize;
    let h = horizon / steps as f64;
    let rhs = |t: f64, x: &Vector3<Complex64>| a * x + d * Complex64::from_polar(1.0, -delta * t);

    let mut window = 0.25 * horizon;
    if delta != 0.0 {
        let period = TAU / delta.abs();
        if window >= period {
            window = (window / period).floor() * period;
        }
    }
    let first = steps - ((window / h).round() as usize).min(steps);

    let mut x = Vector3::<Complex64>::zeros();
    let mut samples = Vec::with_capacity(steps - first + 1);
    for k in 0..steps {
        if k >= first {
            samples.push((k as f64 * h, x));
        }
        let t = k as f64 * h;
        let k1 = rhs(t, &x);
        let k2 = rhs(t + 0.5 * h, &(x + k1 * Complex64::from(0.5 * h)));
        let k3 = rhs(t + 0.5 * h, &(x + k2 * Complex64::from(0.5 * h)));
        let k4 = rhs(t + h, &(x + k3 * Complex64::from(h)));
        x += (k1 + k2 * Complex64::from(2.0) + k3 * Complex64::from(2.0) + k4) * Complex64::from(h / 6.0);
    }
    samples.push((steps as f64 * h, x));

    // Least-squares projection onto e^{−iδt}; the end sample closes the
    // periodic window, so it is weighted half like a trapezoid rule.
    let last = samples.len() - 1;
    let mut sum = Vector3::<Complex64>::zeros();
    let mut weight = 0.0;
    for (k, (t, xs)) in samples.iter().enumerate() {
        let w = if last > 0 && (k == 0 || k == last) { 0.5 } else { 1.0 };
        sum += xs * Complex64::from_polar(w, delta * t);
        weight += w;
    }
    let fit = sum / Complex64::from(weight);

    let scale = fit.norm();
    let worst = samples
        .iter()
        .map(|(t, xs)| (xs - fit * Complex64::from_polar(1.0, -delta * t)).norm())
        .fold(0.0, f64::max);
    let residual = if scale == 0.0 { worst } else { worst / scale };
    if residual > 1e-4 {
        return Err(Error::TransientNotDecayed { residual });
    }
    Ok(FluctuationAmps {
        mech: fit[0],
        left: fit[1],
        right: fit[2],
        delta,
    })
}

/// Time-domain amplitudes with [`integration_settings`].
pub fn integrate_time_domain_auto(params: &SystemParams, drive: &DriveConfig, delta: f64) -> Result<FluctuationAmps> {
    let s = integration_settings(params, delta)?;
    integrate_time_domain(params, drive, delta, s.horizon, s.dt)
}

/// A random working point for property checks. Rates are in units of κ.
pub fn random_point<R: Rng>(rng: &mut R) -> (SystemParams, DriveConfig, f64) {
    let mut params = SystemParams::gain_balanced(0.0);
    params.kappa1 = rng.gen_range(0.5..2.0);
    params.kappa2 = rng.gen_range(-1.0..2.0);
    params.gamma_m = rng.gen_range(0.2..2.0);
    params.coupling = rng.gen_range(0.0..2.0);
    params.photon_ratio = rng.gen_range(0.2..3.0);
    let drive = DriveConfig {
        probe_left: rng.gen_range(0.0..1.0),
        probe_right: rng.gen_range(0.0..1.0),
        phase: rng.gen_range(0.0..TAU),
        ..DriveConfig::default()
    };
    let delta = rng.gen_range(-3.0..3.0);
    (params, drive, delta)
}

/// Smallest stability margin (|max Re λ| / κ₁) accepted for a time-domain
/// draw; keeps the integration horizon bounded.
pub const MIN_DRAW_MARGIN: f64 = 0.05;

/// Maximum pairwise deviations over randomized stable working points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleReport {
    pub samples: usize,
    /// Draws rejected as unstable or too weakly damped.
    pub rejected: usize,
    /// Closed form vs. LU solve.
    pub closed_vs_linear: f64,
    /// LU solve vs. time-domain fit.
    pub linear_vs_time: f64,
    /// Closed form vs. time-domain fit.
    pub closed_vs_time: f64,
    /// Largest harmonic-system residual of the LU solution.
    pub max_residual: f64,
}

/// Runs the three routes on `samples` random stable draws from `seed`.
pub fn oracle_triangle(samples: usize, seed: u64) -> Result<TriangleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(samples);
    let mut rejected = 0;
    while draws.len() < samples {
        let (p, d, delta) = random_point(&mut rng);
        let report = system_stability(&p);
        if report.stable && report.margin >= MIN_DRAW_MARGIN {
            draws.push((p, d, delta));
        } else {
            rejected += 1;
        }
    }
    let results: Vec<[f64; 4]> = draws
        .par_iter()
        .map(|(p, d, delta)| -> Result<[f64; 4]> {
            let closed = fluctuation_amplitudes(p, d, *delta)?;
            let linear = solve_linear_response(p, d, *delta)?;
            let timed = integrate_time_domain_auto(p, d, *delta)?;
            let residual = SystemMatrix::new(p, d).residual(&linear);
            Ok([
                closed.rel_deviation(&linear),
                linear.rel_deviation(&timed),
                closed.rel_deviation(&timed),
                residual,
            ])
        })
        .collect::<Result<_>>()?;
    let max = |k: usize| results.iter().map(|r| r[k]).fold(0.0, f64::max);
    Ok(TriangleReport {
        samples,
        rejected,
        closed_vs_linear: max(0),
        linear_vs_time: max(1),
        closed_vs_time: max(2),
        max_residual: max(3),
    })
}

/// Real δ closest to a response pole: minimizes |F₁ + F₂| over `grid` and
/// refines by golden-section search. Used to compare pole loci with
/// stability boundaries.
pub fn nearest_pole_detuning(params: &SystemParams, grid: &[f64]) -> (f64, f64) {
    let f = |x: f64| response_denominator(params, x).norm();
    let (mut best, mut k_best) = (f64::INFINITY, 0);
    for (k, &x) in grid.iter().enumerate() {
        let v = f(x);
        if v < best {
            best = v;
            k_best = k;
        }
    }
    let lo = grid[k_best.saturating_sub(1)];
    let hi = grid[(k_best + 1).min(grid.len() - 1)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let c = b - ratio * (b - a);
        let e = a + ratio * (b - a);
        if f(c) < f(e) {
            b = e;
        } else {
            a = c;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;

    #[test]
    fn decoupled_solve_is_block_diagonal() {
        let p = SystemParams::gain_balanced(0.0);
        let d = DriveConfig::left_only(1.0);
        for delta in [-1.0, 0.0, 2.0] {
            let x = solve_linear_response(&p, &d, delta).unwrap();
            assert!(crate::rel_diff_c(x.left, 1.0 / Complex64::new(1.0, -delta)) < 1e-15);
            assert_eq!(x.right, Complex64::new(0.0, 0.0));
            assert_eq!(x.mech, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn linear_solve_matches_closed_form_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let (p, d, delta) = random_point(&mut rng);
            let closed = match fluctuation_amplitudes(&p, &d, delta) {
                Ok(x) => x,
                Err(_) => continue,
            };
            let linear = solve_linear_response(&p, &d, delta).unwrap();
            let dev = closed.rel_deviation(&linear);
            assert!(dev < 1e-10, "{p:?} {d:?} {delta}: {dev}");
            assert!(SystemMatrix::new(&p, &d).residual(&linear) < 1e-10);
        }
    }

    #[test]
    fn exchange_symmetry_of_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (mut p, d, delta) = random_point(&mut rng);
            p.photon_ratio = 1.0;
            let x = solve_linear_response(&p, &d, delta).unwrap();
            let mut q = p;
            std::mem::swap(&mut q.kappa1, &mut q.kappa2);
            // ε_L ↔ ε_R e^{iθ}: swapped drive equals e^{iθ}(ε_R, ε_L e^{−iθ})
            let swapped = DriveConfig {
                probe_left: d.probe_right,
                probe_right: d.probe_left,
                phase: -d.phase,
                ..d
            };
            let y = solve_linear_response(&q, &swapped, delta).unwrap();
            let g = Complex64::from_polar(1.0, d.phase);
            let scale = x.as_array().iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!((g * y.left - x.right).norm() <= 1e-12 * scale);
            assert!((g * y.right - x.left).norm() <= 1e-12 * scale);
            assert!((g * y.mech + x.mech).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn singular_harmonic_system() {
        let mut p = SystemParams::gain_balanced(1.0);
        p.kappa2 = -0.5;
        let err = solve_linear_response(&p, &DriveConfig::left_only(1.0), 0.0).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { .. }), "{err:?}");
    }

    #[test]
    fn diagonal_gain_system_eigenvalues() {
        let mut p = SystemParams::gain_balanced(0.0);
        p.gamma_m = 0.3;
        let r = system_stability(&p);
        let expected = [Complex64::new(1.0, 0.0), Complex64::new(-0.3, 0.0), Complex64::new(-1.0, 0.0)];
        for (a, b) in r.eigenvalues.iter().zip(expected) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(!r.stable);
        assert_eq!(r.max_real_part, 1.0);

        // degenerate loss rates
        let p = SystemParams::gain_balanced(0.0);
        let r = system_stability(&p);
        assert!((r.eigenvalues[0] - 1.0).norm() < 1e-12);
        assert!((r.eigenvalues[1] + 1.0).norm() < 1e-12);
        assert!((r.eigenvalues[2] + 1.0).norm() < 1e-12);
    }

    #[test]
    fn passive_system_is_always_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (mut p, _, _) = random_point(&mut rng);
            p.kappa2 = p.kappa1;
            p.coupling = rng.gen_range(0.0..5.0);
            let r = system_stability(&p);
            assert!(r.stable);
            // A + A† = −2 diag(γ, κ₁, κ₂) bounds every real part
            let bound = p.gamma_m.min(p.kappa1).min(p.kappa2);
            assert!(r.max_real_part <= -bound + 1e-12);
        }
    }

    #[test]
    fn gain_balanced_has_no_stable_coupling() {
        // characteristic polynomial λ³ + λ² + (2G² − 1)λ − 1 has a positive root
        let scan = stable_coupling_windows(&SystemParams::gain_balanced(0.0), 5.0, 501);
        assert!(scan.windows.is_empty());
        assert!(scan.boundaries.is_empty());
        assert!(scan.most_stable.1 > 0.0);
    }

    #[test]
    fn partial_gain_window_matches_routh_hurwitz() {
        // κ₂ = −κ/2: constant term G²/2 − 1/2 changes sign at G = 1
        let mut p = SystemParams::gain_balanced(0.0);
        p.kappa2 = -0.5;
        let scan = stable_coupling_windows(&p, 3.0, 301);
        assert_eq!(scan.boundaries.len(), 1);
        assert!((scan.boundaries[0] - 1.0).abs() < 1e-9);
        assert_eq!(scan.windows.len(), 1);
        assert!(scan.windows[0].open_end);

        // the pole of the response sits on the real δ axis at the boundary
        let mut q = p;
        q.coupling = scan.boundaries[0];
        let (delta, mag) = nearest_pole_detuning(&q, &crate::response::linspace(-3.0, 3.0, 601));
        assert!(delta.abs() < 1e-3, "{delta} {mag}");
        assert!(mag < 1e-6);
    }

    #[test]
    fn time_domain_matches_frequency_domain() {
        let mut p = SystemParams::gain_balanced(0.8);
        p.kappa2 = 1.0;
        let d = DriveConfig::symmetric(1.0, 0.4);
        let f = solve_linear_response(&p, &d, 0.5).unwrap();
        let t = integrate_time_domain_auto(&p, &d, 0.5).unwrap();
        assert!(t.rel_deviation(&f) < 1e-6, "{}", t.rel_deviation(&f));
        let t0 = integrate_time_domain_auto(&p, &d, 0.0).unwrap();
        let f0 = solve_linear_response(&p, &d, 0.0).unwrap();
        assert!(t0.rel_deviation(&f0) < 1e-6);
    }

    #[test]
    fn zero_drive_stays_at_rest() {
        let mut p = SystemParams::gain_balanced(0.8);
        p.kappa2 = 1.0;
        let d = DriveConfig::symmetric(0.0, 0.0);
        let t = integrate_time_domain_auto(&p, &d, 0.3).unwrap();
        assert_eq!(t.as_array(), [Complex64::new(0.0, 0.0); 3]);
    }

    #[test]
    fn integrator_preconditions() {
        let p = SystemParams::gain_balanced(0.5);
        let d = DriveConfig::left_only(1.0);
        assert!(matches!(
            integrate_time_domain(&p, &d, 0.0, 100.0, 1e-3),
            Err(Error::UnstableSystem { .. })
        ));
        let mut q = p;
        q.kappa2 = 1.0;
        let s = integration_settings(&q, 0.0).unwrap();
        assert!(matches!(
            integrate_time_domain(&q, &d, 0.0, 0.1, s.dt),
            Err(Error::InvalidIntegration(_))
        ));
        assert!(matches!(
            integrate_time_domain(&q, &d, 0.0, s.horizon, 1.0),
            Err(Error::InvalidIntegration(_))
        ));
        // ten decay times leave a visible transient in the fit window
        let short = 10.0 / system_stability(&q).max_real_part.abs();
        assert!(matches!(
            integrate_time_domain(&q, &d, 0.0, short, s.dt),
            Err(Error::TransientNotDecayed { .. })
        ));
    }

    #[test]
    fn small_triangle() {
        let r = oracle_triangle(12, 5).unwrap();
        assert!(r.closed_vs_linear < 1e-10);
        assert!(r.linear_vs_time < 1e-6);
        assert!(r.max_residual < 1e-10);
    }

    proptest! {
        #[test]
        fn trace_identity(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, _, _) = random_point(&mut rng);
            let r = system_stability(&p);
            let sum: Complex64 = r.eigenvalues.iter().sum();
            let trace = -(p.gamma_m + p.kappa1 + p.kappa2);
            prop_assert!((sum - trace).norm() < 1e-12);
        }

        #[test]
        fn schur_and_cubic_agree(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, _, _) = random_point(&mut rng);
            let a = dynamics_matrix(&p);
            let schur = eigenvalues(&a);
            let cubic = cubic_roots(characteristic_polynomial(&a));
            for z in schur {
                let nearest = cubic.iter().map(|c| (c - z).norm()).fold(f64::INFINITY, f64::min);
                // roots of a near-double pair are only accurate to √ε
                prop_assert!(nearest < 1e-6, "{:?} vs {:?}", schur, cubic);
            }
        }

        #[test]
        fn denominator_is_characteristic_polynomial(seed in any::<u64>(), delta in -4.0f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, _, _) = random_point(&mut rng);
            let [c2, c1, c0] = characteristic_polynomial(&dynamics_matrix(&p));
            let z = Complex64::new(0.0, -delta);
            let poly = ((z + c2) * z + c1) * z + c0;
            let f = response_denominator(&p, delta);
            prop_assert!((poly - f).norm() <= 1e-12 * (1.0 + f.norm()));
        }
    }
}
