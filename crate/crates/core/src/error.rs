use thiserror::Error;

/// Errors surfaced by the solver and field layers.
///
/// Blow-up is not an error: it is reported as a [`crate::BlowupVerdict`] value so
/// that runs can record the trigger instead of aborting.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("derivative order {order} exceeds the configured cap {cap}")]
    OrderCap { order: usize, cap: usize },

    #[error("time {t} lies beyond the schedule horizon {horizon} and cycling is off")]
    BeyondHorizon { t: f64, horizon: f64 },

    #[error("quadrature substep {dt} exceeds the configured cap {cap}")]
    QuadratureStep { dt: f64, cap: f64 },

    #[error("step crosses a phase boundary: {0}")]
    PhaseBoundary(String),

    #[error("instability: one-step norm growth factor {growth}")]
    Instability { growth: f64 },

    #[error("no decay window detected: {0}")]
    NoDecayWindow(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("conservation violated: {0}")]
    Conservation(String),

    #[error("measurement protocol: {0}")]
    Protocol(String),

    #[error("chemical split is not defined for the active shear direction: {0}")]
    SplitDirection(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
