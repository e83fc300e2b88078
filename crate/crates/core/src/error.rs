use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("line {line}: negative consumption {value}")]
    NegativeConsumption { line: u64, value: f64 },

    #[error("line {line}: timestamp for customer {customer} is not strictly increasing")]
    NonIncreasingTimestamp { line: u64, customer: String },

    #[error("inconsistent sampling interval: {0}")]
    InconsistentInterval(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("no customer covers the common time axis (rejected: {rejected})")]
    NoCompleteCustomers { rejected: usize },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("infeasible synthetic parameters: {:.3}% of samples expected below zero (limit 1%)", 100.0 * .expected_fraction)]
    TooManyFloored { expected_fraction: f64 },

    #[error("group size {size} exceeds population of {population}")]
    SizeExceedsPopulation { size: usize, population: usize },

    #[error("unknown customer id {0}")]
    UnknownCustomer(String),

    #[error("insufficient history: need {needed} samples, have {have}")]
    InsufficientHistory { needed: usize, have: usize },

    #[error("non-finite training loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("all targets are zero")]
    AllTargetsZero,

    #[error("{skipped} of {total} targets are zero (limit 10%)")]
    TooManyZeroTargets { skipped: usize, total: usize },

    #[error("mean of actual series is not positive ({0})")]
    NonPositiveMean(f64),

    #[error("too few points for scaling fit: {have} (need {needed})")]
    TooFewPoints { have: usize, needed: usize },

    #[error("load span {ratio:.3}x is below one decade; exponent is unidentifiable")]
    NarrowSpan { ratio: f64 },

    #[error("no finite critical load: {0}")]
    NoCriticalLoad(&'static str),

    #[error("bootstrap: {failed} of {total} resample fits failed (limit 5%)")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("size {size} has {have} points, need at least {needed}")]
    InsufficientReplicates {
        size: usize,
        have: usize,
        needed: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("group {group}, forecaster {forecaster}: {source}")]
    Stage {
        group: String,
        forecaster: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
