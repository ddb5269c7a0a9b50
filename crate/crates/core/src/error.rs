use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid functions live on incompatible grids")]
    IncompatibleGrids,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver failure in {stage}: {detail}")]
    SolverFailure { stage: &'static str, detail: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("every sweep scale failed: {0}")]
    SweepFailure(String),

    #[error("control is outside the locality radius ({distance} > {radius})")]
    OutOfNeighborhood { distance: f64, radius: f64 },

    #[error("malformed csv: {0}")]
    Csv(String),
}

impl Error {
    pub(crate) fn solver(stage: &'static str, detail: impl Into<String>) -> Self {
        Error::SolverFailure {
            stage,
            detail: detail.into(),
        }
    }
}
