use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("region `{0}` not found in input")]
    NotFound(String),

    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input `{path}`: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("split date {date} outside series range {start}..={end}")]
    InvalidSplit {
        date: NaiveDate,
        start: NaiveDate,
        end: NaiveDate,
    },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("numerical blow-up at day {day} (compartment {compartment})")]
    NumericalBlowup { day: usize, compartment: usize },

    #[error("compartment {compartment} went negative ({value:e}) at day {day}")]
    NegativityViolation {
        day: usize,
        compartment: usize,
        value: f64,
    },

    #[error("model produced no infections over the horizon")]
    DegenerateEpidemic,

    #[error("observable `{0}` is not available for this model")]
    UnsupportedObservable(&'static str),

    #[error("operation not supported for model {0}")]
    UnsupportedModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("latent series below observed at day {day} ({total} < {observed})")]
    InvalidLatentSeries {
        day: usize,
        total: f64,
        observed: f64,
    },

    #[error("length mismatch: {left} vs {right}")]
    ShapeError { left: usize, right: usize },

    #[error("reported rate {0} leaves no unreported mass")]
    DegenerateReportedRate(f64),

    #[error("reporting-rate search failed: {0}")]
    SearchFailed(String),

    #[error("total-series refinement failed: {0}")]
    RefinementFailed(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn shape(left: usize, right: usize) -> Self {
        Error::ShapeError { left, right }
    }
}
