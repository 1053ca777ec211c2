//! Photon transport in a passive-active optomechanical system.
//!
//! Two Fabry-Pérot cavities share one membrane oscillator. The left cavity is
//! lossy, the right one may carry gain (negative decay rate). Both are driven
//! by a strong control field and a weak probe field. This crate computes the
//! linear response of the probe: reflection and transmission rates, output
//! phases and group delays, together with independent numerical checks
//! (generic linear solve, eigenvalue stability, time-domain integration).
//!
//! Module map:
//!
//! - [`model`]: parameters, unit conversion, steady state of the strong drive.
//! - [`response`]: frequency-domain fluctuation amplitudes and output fields.
//! - [`closedform`]: the three analytic special cases used as references.
//! - [`delay`]: phase unwrapping and group delay.
//! - [`oracle`]: linear-solve, stability and time-domain cross checks.
//! - [`sweep`]: parameter grids and figure datasets.
//! - [`dataset`]: tabular results and their CSV / JSON encodings.
//! - [`cli`]: command-line front end.
//!
//! All rates inside [`model::SystemParams`] share one unit, normally the left
//! cavity decay rate κ. Delays come out in the inverse of that unit.

pub mod cli;
pub mod closedform;
pub mod dataset;
pub mod delay;
mod error;
pub mod model;
pub mod oracle;
pub mod response;
pub mod sweep;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Relative difference `|a - b| / |b|`, falling back to the absolute
/// difference when the reference is exactly zero.
pub fn rel_diff(actual: f64, reference: f64) -> f64 {
    let diff = (actual - reference).abs();
    if reference == 0.0 {
        diff
    } else {
        diff / reference.abs()
    }
}

/// Complex counterpart of [`rel_diff`].
pub fn rel_diff_c(actual: Complex64, reference: Complex64) -> f64 {
    let diff = (actual - reference).norm();
    let scale = reference.norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
