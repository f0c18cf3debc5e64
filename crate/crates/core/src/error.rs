use thiserror::Error;

use crate::integrator::TerminalEvent;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One probe of the shooting parameter and how its trajectory ended.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Probe {
    pub kappa: f64,
    pub event: TerminalEvent,
    pub y: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    /// Rejected configuration or arguments (exit code 1 in the CLI).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A precondition of an operation was violated by its input.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("right-hand side is not finite at y = {y}")]
    NonFinite { y: f64 },

    #[error("no decisive bracket found after {} probes", scan.len())]
    BracketNotFound { scan: Vec<Probe> },

    #[error("trajectory ended with {} at y = {y} instead of reaching y_max", event.name())]
    NotAccepted { event: TerminalEvent, y: f64 },

    #[error("basis solutions are degenerate on the matching window (condition {condition:.3e})")]
    BasisDegenerate { condition: f64 },

    #[error("fit window too short: {usable} usable samples, need {needed}")]
    WindowTooShort { usable: usize, needed: usize },

    #[error("signal below noise floor on the fit window (max {max:.3e})")]
    SignalBelowNoise { max: f64 },

    /// A trajectory file failed re-validation.
    #[error("trajectory failed checks: {}", .0.join(", "))]
    ChecksFailed(Vec<String>),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::BracketNotFound { .. }
                | Error::NotAccepted { .. }
                | Error::BasisDegenerate { .. }
                | Error::WindowTooShort { .. }
                | Error::SignalBelowNoise { .. }
                | Error::ChecksFailed(_)
        )
    }

    /// Stable machine-readable name, used in the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "ConfigError",
            Error::Precondition(_) => "PreconditionViolated",
            Error::NonFinite { .. } => "NonFinite",
            Error::BracketNotFound { .. } => "BracketNotFound",
            Error::NotAccepted { .. } => "NotAccepted",
            Error::BasisDegenerate { .. } => "BasisDegenerate",
            Error::WindowTooShort { .. } => "WindowTooShort",
            Error::SignalBelowNoise { .. } => "SignalBelowNoise",
            Error::ChecksFailed(_) => "ChecksFailed",
            Error::Parse(_) => "ParseError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}
