use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    /// A partially interactive decomposition was requested for a ball that
    /// does not admit one.
    #[error("no decomposition: {0}")]
    NoDecomposition(String),

    #[error("missing field value at site {0}")]
    MissingData(String),

    /// Energy too close to the spectrum for a Green function evaluation.
    #[error("energy {energy} is resonant: dist(E, spectrum) = {distance:e}")]
    Resonance { energy: f64, distance: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid run config: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
