use thiserror::Error;

use crate::response::Channel;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures raised by the physics modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` must be positive and finite, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("parameter `{name}` is invalid: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("left cavity holds no control photons while the right one does; (G, n) is undefined")]
    DegenerateCoupling,

    #[error("steady-state iteration did not converge after {iterations} iterations (last step {last_step:e})")]
    SteadyStateDivergence { iterations: usize, last_step: f64 },

    #[error("cavity response is singular: |kappa + i Delta| = {magnitude:e}")]
    SingularCavityResponse { magnitude: f64 },

    #[error("no probe field is applied")]
    NoProbe,

    #[error("linear-response pole at delta = {delta}: |F1 + F2| = {magnitude:e}")]
    ResponsePole { delta: f64, magnitude: f64 },

    #[error("reference probe of channel {channel} is zero")]
    UndefinedChannel { channel: Channel },

    #[error("output field of channel {channel} vanishes at delta = {delta}; phase undefined")]
    UndefinedPhase { channel: Channel, delta: f64 },

    #[error("group-delay stencil around delta = {delta} touches a response pole")]
    PoleAdjacent { delta: f64 },

    #[error("phase jump of {jump:.3} rad inside the stencil at delta = {delta}; shrink the step")]
    PhaseJump { delta: f64, jump: f64 },

    #[error("harmonic system is singular at delta = {delta} (pivot ratio {pivot:e})")]
    SingularSystem { delta: f64, pivot: f64 },

    #[error("system is dynamically unstable (max real part {max_real_part})")]
    UnstableSystem { max_real_part: f64 },

    #[error("integration settings rejected: {0}")]
    InvalidIntegration(String),

    #[error("transient did not decay: harmonic fit residual {residual:e}")]
    TransientNotDecayed { residual: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("unknown figure `{0}`")]
    UnknownFigure(String),

    #[error("no grid point yields a defined value: {0}")]
    NoValidPoints(String),

    #[error("self-check failed: {0}")]
    SelfcheckFailed(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed dataset: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Whether the failure stems from user input (configuration, files)
    /// rather than from the physics of the requested evaluation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Format(_)
                | Error::Io(_)
                | Error::UnknownFigure(_)
                | Error::InvalidSweep(_)
                | Error::InvalidGrid(_)
                | Error::NonPositiveParameter { .. }
                | Error::InvalidParameter { .. }
                | Error::NoProbe
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
