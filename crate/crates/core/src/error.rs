use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("incomplete day {day}: no reading for slot {slot}")]
    IncompleteDay { day: String, slot: usize },

    #[error("invalid reading: {0}")]
    InvalidReading(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid normalization base {0} kW (must be > 0)")]
    InvalidNormalization(f64),

    #[error("invalid split: train_count {train_count} for {total} curves")]
    InvalidSplit { train_count: usize, total: usize },

    #[error("invalid fold count {k} for {total} items")]
    InvalidFoldCount { k: usize, total: usize },

    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("degenerate weighting: {0}")]
    DegenerateWeighting(String),

    #[error("activation cache does not match network")]
    StaleCache,

    #[error("training diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("pretraining stage {stage} failed: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("grid point {value} failed: {source}")]
    GridPoint {
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("mask mismatch: {0}")]
    MaskMismatch(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate load: peak is zero")]
    DegenerateLoad,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) | Error::InvalidSplit { .. } | Error::InvalidFoldCount { .. } => {
                ErrorClass::Config
            }
            Error::Divergence { .. } | Error::Numerical(_) | Error::DegenerateWeighting(_) => {
                ErrorClass::Numerical
            }
            Error::Stage { source, .. } | Error::GridPoint { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn at_stage(self, stage: usize) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    pub(crate) fn at_grid_point(self, value: f64) -> Self {
        Error::GridPoint { value, source: Box::new(self) }
    }
}
