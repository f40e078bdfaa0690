use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Central projection is undefined outside the open northern hemisphere.
    #[error("point is not in the open northern hemisphere (h = {height})")]
    Hemisphere { height: f64 },

    /// The force field and potential are singular at the poles.
    #[error("point is at a pole of the sphere (h = {height})")]
    PoleSingularity { height: f64 },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("quadrature did not reach tolerance {tolerance:e} on [{lower}, {upper}]")]
    QuadratureFailure { lower: f64, upper: f64, tolerance: f64 },

    /// Period formulas are only defined for the unit sphere.
    #[error("operation requires R = 1, got R = {radius}")]
    UnsupportedRadius { radius: f64 },

    #[error("integrator step failed at t = {time}: {reason}")]
    StepFailure { time: f64, reason: String },

    #[error("trajectory left the open northern hemisphere at t = {time}")]
    HemisphereExit { time: f64 },

    /// No level-set bin collected two or more samples.
    #[error("no bin holds two or more samples; the scan is inconclusive")]
    EmptyBins,

    #[error("candidate `{name}` is not symmetric in its two endpoint distances")]
    AsymmetricCandidate { name: String },

    #[error("expression error: {0}")]
    Expression(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
