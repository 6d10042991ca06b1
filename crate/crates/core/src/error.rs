use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid direction: {0}")]
    InvalidDirection(String),

    #[error("states coincide (trace distance below tolerance)")]
    CoincidentStates,

    #[error("invalid bloch vector: {0}")]
    InvalidBloch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} outside family horizon [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("invalid surface: {0}")]
    InvalidSurface(String),

    #[error("empty lattice or grid: {0}")]
    EmptyLattice(String),

    #[error("reference state is not interior (margin {margin:.3e} < eps {eps:.3e})")]
    NotInterior { margin: f64, eps: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
