use std::path::PathBuf;

/// Every failure class the library can report.
///
/// The CLI maps these onto its exit-status taxonomy, see [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("spec error: {0}")]
    Spec(String),
    #[error("state error: {0}")]
    State(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("generation error: {0}")]
    Generation(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error class.
    ///
    /// * 2: configuration, input files, formats, invalid specs or grids
    /// * 3: runtime numeric failures (dimension/domain/numeric/state/generation)
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Format { .. } | Error::Io { .. } | Error::Spec(_) => 2,
            Error::Dimension(_)
            | Error::Domain(_)
            | Error::Numeric(_)
            | Error::State(_)
            | Error::Generation(_) => 3,
        }
    }
}
