use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("region of interest is empty after rasterization")]
    EmptyRoi,

    #[error("shape mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    ShapeMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("zero variance: {0}")]
    ZeroVariance(&'static str),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numeric routine failed to converge: {0}")]
    NumericConvergence(&'static str),

    #[error("cannot merge aggregates for {left} and {right}")]
    MergeDateMismatch { left: NaiveDate, right: NaiveDate },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid record: {0}")]
    Record(String),

    #[error("case series for {city}: gap, missing {missing}")]
    CaseGap { city: String, missing: NaiveDate },

    #[error("case series for {city}: cumulative count decreases on {date} ({prev} -> {next})")]
    CaseDecrease {
        city: String,
        date: NaiveDate,
        prev: u64,
        next: u64,
    },

    #[error("case series for {city}: duplicate date {date}")]
    CaseDuplicate { city: String, date: NaiveDate },

    #[error("unknown city_id {0:?}")]
    UnknownCity(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Input {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("bitmap: {0}")]
    Bitmap(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a bug or the environment.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::NumericConvergence(_) => false,
            Error::InFile { source, .. } => source.is_input_error(),
            _ => true,
        }
    }

    pub(crate) fn in_file(path: impl Into<PathBuf>, source: Error) -> Self {
        match source {
            e @ (Error::Io { .. } | Error::Input { .. } | Error::InFile { .. }) => e,
            e => Error::InFile {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }
}
