use thiserror::Error;

/// Errors raised by the barycenter toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("signed measure has nonzero mass {mass:e} (compatibility condition violated)")]
    NonzeroMass { mass: f64 },

    #[error("unsupported dimension {dim} for {what}")]
    UnsupportedDimension { dim: usize, what: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("potential outside the certified class: {0}")]
    OutsideClass(String),

    #[error("infeasible density bounds: {0}")]
    InfeasibleBounds(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("solver produced a non-finite objective at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("instance exceeds size cap: {0}")]
    SizeCap(String),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
