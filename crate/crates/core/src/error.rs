use std::path::PathBuf;

/// Errors raised anywhere in the recognition pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported or malformed image {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("image too small: {0}")]
    Size(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("bad data: {0}")]
    Data(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("cannot split subject {subject}: {reason}")]
    Split { subject: String, reason: String },
    #[error("inconsistent sub-band structure: {0}")]
    Structure(String),
    #[error("cannot fit normalizer: {0}")]
    Fit(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("solver did not converge (worst KKT residual {worst_residual:.3e})")]
    Convergence { worst_residual: f64 },
    #[error("report error: {0}")]
    Report(String),
    #[error("corrupt record {path}: {reason}")]
    Record { path: PathBuf, reason: String },
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
