use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error category, used by the CLI to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing intervals for {} household-day(s): {}", .0.len(), format_gaps(.0))]
    Gap(Vec<(String, NaiveDate)>),

    #[error("calendar filter left no days")]
    EmptyCalendar,

    #[error("no household observed on every day")]
    EmptyPanel,

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("cannot split {rows} rows into {folds} folds")]
    FoldSize { rows: usize, folds: usize },

    #[error("series too short for ARMA({p},{q}): need {needed} points, got {len}")]
    SeriesTooShort {
        p: usize,
        q: usize,
        needed: usize,
        len: usize,
    },

    #[error("model fit failed: {0}")]
    FitFailure(String),

    #[error("no observations: {0}")]
    NoObservations(String),

    #[error("missing artifact {path}; run `{producer}` first")]
    MissingArtifact { path: PathBuf, producer: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

fn format_gaps(gaps: &[(String, NaiveDate)]) -> String {
    const SHOWN: usize = 10;
    let mut s = gaps
        .iter()
        .take(SHOWN)
        .map(|(h, d)| format!("({h}, {d})"))
        .collect::<Vec<_>>()
        .join(", ");
    if gaps.len() > SHOWN {
        s.push_str(&format!(", ... {} more", gaps.len() - SHOWN));
    }
    s
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Grid(_) | Error::FoldSize { .. } => ErrorKind::Config,
            Error::FitFailure(_) | Error::Infeasible(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}
