//! Error type shared by every pipeline stage.

use std::fmt;
use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by ingestion, selection, engineering, training and detection.
#[derive(Debug)]
pub enum Error {
    /// File could not be read or written.
    Io { path: PathBuf, source: std::io::Error },
    /// A CSV header did not match the required schema.
    BadHeader {
        path: PathBuf,
        expected: String,
        found: String,
    },
    /// More than half of the data rows in a log were rejected.
    TooManyRejectedRows {
        path: PathBuf,
        rejected: usize,
        total: usize,
    },
    /// A wall-clock time field was not `HH:MM:SS`.
    BadClockTime { value: String },
    /// An attack interval is inconsistent or lies outside the flight interval.
    BadInterval { reason: String },
    /// A category string in a mapping file is not one of the known categories.
    UnknownCategory { feature: String, value: String },
    /// A malformed row in a structured file (annotation, catalog, scaler, matrix).
    BadRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    /// A feature had no samples in any window of a session.
    FeatureEmpty { feature: String, session: String },
    /// A column was constant where non-constant values are required.
    ConstantColumn { feature: String },
    /// Column schemas of two artifacts disagree.
    SchemaMismatch { context: String, detail: String },
    /// Tensor dimensions disagree with the declared architecture.
    ShapeMismatch {
        tensor: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A model file could not be parsed.
    ModelFormat { line: usize, reason: String },
    /// Training data contained attack-labeled rows.
    AttackRowsInTraining { count: usize },
    /// An operation received an empty input where data is required.
    EmptyInput { what: String },
    /// A value that must be finite was NaN or infinite.
    NonFinite { what: String },
    /// An invalid configuration value.
    BadConfig { reason: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "io error on {}: {}", path.display(), source),
            Error::BadHeader {
                path,
                expected,
                found,
            } => write!(
                f,
                "bad header in {}: expected `{}`, found `{}`",
                path.display(),
                expected,
                found
            ),
            Error::TooManyRejectedRows {
                path,
                rejected,
                total,
            } => write!(
                f,
                "rejected {} of {} data rows in {}; refusing to continue",
                rejected,
                total,
                path.display()
            ),
            Error::BadClockTime { value } => {
                write!(f, "invalid wall-clock time `{}` (expected HH:MM:SS)", value)
            }
            Error::BadInterval { reason } => write!(f, "invalid interval: {}", reason),
            Error::UnknownCategory { feature, value } => write!(
                f,
                "unknown category `{}` for feature `{}`",
                value, feature
            ),
            Error::BadRow { path, line, reason } => {
                write!(f, "{}:{}: {}", path.display(), line, reason)
            }
            Error::FeatureEmpty { feature, session } => write!(
                f,
                "feature `{}` has no samples in any window of session `{}`; it should have been dropped as missing",
                feature, session
            ),
            Error::ConstantColumn { feature } => write!(
                f,
                "feature `{}` is constant; tranquil features must be dropped before scaling",
                feature
            ),
            Error::SchemaMismatch { context, detail } => {
                write!(f, "schema mismatch in {}: {}", context, detail)
            }
            Error::ShapeMismatch {
                tensor,
                expected,
                found,
            } => write!(
                f,
                "tensor `{}` has shape {}x{}, expected {}x{}",
                tensor, found.0, found.1, expected.0, expected.1
            ),
            Error::ModelFormat { line, reason } => {
                write!(f, "model file line {}: {}", line, reason)
            }
            Error::AttackRowsInTraining { count } => write!(
                f,
                "training data contains {} attack-labeled rows; training requires benign windows only",
                count
            ),
            Error::EmptyInput { what } => write!(f, "empty input: {}", what),
            Error::NonFinite { what } => write!(f, "non-finite value in {}", what),
            Error::BadConfig { reason } => write!(f, "invalid configuration: {}", reason),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    /// Wrap an io error with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
