//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide error enum.
#[derive(Error, Debug)]
pub enum Error {
    /// Incompatible dimensions; the message names both sides.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A parameter is outside its documented range.
    #[error("invalid config: {0}")]
    Config(String),

    /// An operation was called on an object in the wrong state
    /// (stale trace, untrained teacher, double backward, ...).
    #[error("invalid state: {0}")]
    State(String),

    /// Input data failed a documented precondition.
    #[error("validation failed: {0}")]
    Validation(String),

    /// A cell of an input file could not be parsed. Coordinates are
    /// 1-based (row counts the physical line, including any header).
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    /// The file's structure does not match expectations (missing label
    /// column, inconsistent field counts, ...).
    #[error("schema error: {0}")]
    Schema(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Training produced a non-finite loss.
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Wraps any error raised inside an experiment pipeline with the
    /// seed and stage it occurred in.
    #[error("seed {seed}, stage {stage}: {source}")]
    Stage {
        seed: u64,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Attach pipeline context (master seed and stage name) to an error.
    pub fn at_stage(self, seed: u64, stage: &'static str) -> Self {
        Error::Stage {
            seed,
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
