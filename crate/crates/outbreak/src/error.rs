use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("missing required column {column:?} in {path}")]
    MissingColumn { column: String, path: PathBuf },

    #[error("unparseable date header {header:?} in {path} (expected M/D/YY)")]
    BadDateHeader { header: String, path: PathBuf },

    #[error("duplicate gazetteer pattern {pattern:?} (lines {first_line} and {second_line})")]
    DuplicatePattern {
        pattern: String,
        first_line: usize,
        second_line: usize,
    },

    #[error("unknown state token {token:?} at line {line}")]
    UnknownStateToken { token: String, line: usize },

    #[error("records and normalization outcomes are misaligned ({records} vs {outcomes})")]
    MisalignedInputs { records: usize, outcomes: usize },

    #[error("smoothing window must be odd, >= 1 and <= series length (got {window} for length {len})")]
    InvalidSmoothingWindow { window: usize, len: usize },

    #[error("fit range too short: {len} points, need at least {min}")]
    RangeTooShort { len: usize, min: usize },

    #[error("analysis window of {len} days is shorter than min_linear_days + min_exp_days = {min}")]
    WindowTooShort { len: usize, min: usize },

    #[error("cumulative case series for {state} is not monotone non-decreasing")]
    NonMonotoneSeries { state: String },

    #[error("series does not cover {date} (series spans {start}..={end})")]
    SeriesDoesNotCover {
        date: chrono::NaiveDate,
        start: chrono::NaiveDate,
        end: chrono::NaiveDate,
    },

    #[error("series is empty")]
    EmptySeries,

    #[error("invalid synthetic spec: {reason}")]
    InvalidSynthSpec { reason: String },

    #[error("fetch of {url} failed ({reason}){}", if *.retryable { " [retryable]" } else { "" })]
    Fetch {
        url: String,
        reason: String,
        retryable: bool,
    },

    #[error("invalid date range: start {start} is after end {end}")]
    InvalidDateRange {
        start: chrono::NaiveDate,
        end: chrono::NaiveDate,
    },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
