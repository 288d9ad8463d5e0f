use thiserror::Error;

use survens::data::DataError;
use survens::ensemble::EnsembleError;
use survens::models::FitError;
use survens::simulate::SimulateError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    ParseFailure {
        row: usize,
        column: String,
        value: String,
    },
    #[error("split leaves {events} events on one side; at least 2 required")]
    TooSmall { events: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o failure on {path}: {message}")]
    IoFailure { path: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
}

impl BenchError {
    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        BenchError::IoFailure {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
