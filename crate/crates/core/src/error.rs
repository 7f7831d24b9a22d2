use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LocusError>;

#[derive(Debug, Error)]
pub enum LocusError {
    /// Entries `(row, col)` and `(col, row)` disagree beyond tolerance.
    #[error("asymmetric matrix: entries ({row},{col}) and ({col},{row}) differ by {diff:e}")]
    Asymmetric { row: usize, col: usize, diff: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at {location}")]
    NonFinite { location: String },

    #[error("Fisher-Z transform needs |r| < 1, found {value} at {location}")]
    FisherZDomain { value: f64, location: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{stage}: degenerate input: {message}")]
    Degenerate { stage: &'static str, message: String },

    #[error("non-finite intermediate at iteration {iteration}: {message}")]
    Numeric { iteration: usize, message: String },

    #[error("{path}: {message}", path = .path.display())]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}", path = .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LocusError {
    /// Stable, module-qualified identifier for the error class.
    pub fn code(&self) -> &'static str {
        match self {
            LocusError::Asymmetric { .. } => "connmat.asymmetric",
            LocusError::Dimension(_) => "connmat.dimension",
            LocusError::NonFinite { .. } => "connmat.non_finite",
            LocusError::FisherZDomain { .. } => "connmat.fisher_z_domain",
            LocusError::InvalidConfig(_) => "config.invalid",
            LocusError::Degenerate { stage, .. } => match *stage {
                "preprocess" => "preprocess.degenerate",
                "solver" => "solver.degenerate",
                "modelsel" => "modelsel.degenerate",
                "eval" => "eval.degenerate",
                _ => "degenerate",
            },
            LocusError::Numeric { .. } => "solver.numeric",
            LocusError::Parse { .. } => "io.parse",
            LocusError::Io { .. } => "io.read_write",
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, LocusError::Degenerate { .. } | LocusError::Numeric { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LocusError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        LocusError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn degenerate(stage: &'static str, message: impl Into<String>) -> Self {
        LocusError::Degenerate {
            stage,
            message: message.into(),
        }
    }
}
