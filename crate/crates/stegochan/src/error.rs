use thiserror::Error;

/// Crate-wide error type. Every failing stage (format, capacity, session
/// phase, scripting) gets its own variant so diagnostics can name it.
#[derive(Debug, Error)]
pub enum Error {
    /// A payload, frame, or slot request does not fit the available budget.
    #[error("capacity exceeded: need {needed}, have {available}")]
    Capacity { needed: usize, available: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input image is not in the required lossless format.
    #[error("{0}")]
    Format(String),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A session-state operation was invoked in the wrong phase.
    #[error("session phase is {actual}, operation requires {expected}")]
    Phase {
        expected: &'static str,
        actual: &'static str,
    },

    /// Scenario script or fault plan is malformed.
    #[error("scenario configuration error: {0}")]
    Script(String),
}

pub type Result<T> = std::result::Result<T, Error>;
