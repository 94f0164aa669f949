//! Error type shared across the crate.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by models, estimators and the experiment harness.
#[derive(Debug)]
pub enum Error {
    /// An input contained NaN or infinity.
    NonFinite(&'static str),
    /// Vector/matrix dimensions do not agree.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    /// A simulated state left the configured joint limits.
    LimitViolation {
        joint: usize,
        time: f64,
        value: f64,
        lo: f64,
        hi: f64,
    },
    /// Jacobian is rank-deficient at the queried configuration.
    SingularConfiguration(String),
    /// A matrix that must be positive definite failed to factorize.
    IllConditioned(&'static str),
    /// Rejection sampling could not produce a feasible GA population.
    InfeasiblePopulation { attempts: usize },
    /// Not enough samples for the requested fit.
    InsufficientData { needed: usize, actual: usize },
    /// A data range degenerated to a single point.
    DegenerateRange(&'static str),
    /// Series lengths or sampling periods disagree.
    SeriesMismatch(String),
    /// An input series was empty.
    EmptySeries(&'static str),
    /// Underlying I/O failure.
    Io(std::io::Error),
    /// A persisted file could not be parsed.
    Parse { line: usize, message: String },
    /// File carries the wrong format tag or version.
    SchemaVersion { expected: String, found: String },
    /// Failure tagged with the pipeline stage that produced it.
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::DimensionMismatch {
                what,
                expected,
                actual,
            } => write!(f, "{what}: expected dimension {expected}, got {actual}"),
            Error::LimitViolation {
                joint,
                time,
                value,
                lo,
                hi,
            } => write!(
                f,
                "joint {joint} left its limits at t = {time:.4} s: q = {value:.6} not in [{lo}, {hi}]"
            ),
            Error::SingularConfiguration(detail) => {
                write!(f, "singular configuration: {detail}")
            }
            Error::IllConditioned(what) => {
                write!(f, "{what} is not positive definite after jitter")
            }
            Error::InfeasiblePopulation { attempts } => write!(
                f,
                "could not sample a feasible initial population within {attempts} draws"
            ),
            Error::InsufficientData { needed, actual } => {
                write!(f, "need at least {needed} samples, got {actual}")
            }
            Error::DegenerateRange(what) => write!(f, "degenerate range in {what}"),
            Error::SeriesMismatch(detail) => write!(f, "series mismatch: {detail}"),
            Error::EmptySeries(what) => write!(f, "empty series: {what}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::SchemaVersion { expected, found } => {
                write!(f, "schema mismatch: expected {expected}, found {found}")
            }
            Error::Stage { stage, source } => write!(f, "[stage={stage}] {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Stage { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
