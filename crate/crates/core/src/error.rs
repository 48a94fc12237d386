use thiserror::Error;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("overflow guard: {0}")]
    Overflow(String),
    #[error("degenerate spectral point: {0}")]
    DegenerateSpectralPoint(String),
    #[error("near-exceptional energy (condition number {cond:.3e} at lambda = {lambda})")]
    NearExceptional { lambda: f64, cond: f64 },
    #[error("no propagating solution: {0}")]
    NoPropagating(String),
    #[error("singular argument: {0}")]
    SingularArgument(String),
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("resolution error: {msg} (suggested X_core = {suggested_x_core})")]
    Resolution { msg: String, suggested_x_core: f64 },
    #[error("convergence error: {0}")]
    Convergence(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl Error {
    /// Configuration and domain problems are the caller's fault; the rest are numerical.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Config(_)
                | Error::DegenerateSpectralPoint(_)
                | Error::NoPropagating(_)
                | Error::SingularArgument(_)
                | Error::Precondition(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
