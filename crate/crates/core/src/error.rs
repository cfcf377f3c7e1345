use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A quantity that must be real carried an imaginary part above tolerance.
    #[error("imaginary residue {residue:.3e} (relative) in {context}")]
    ImaginaryResidue { context: &'static str, residue: f64 },

    #[error("matrix is not Hermitian: relative asymmetry {0:.3e}")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite: eigenvalue {0:.3e}")]
    NotPositiveSemidefinite(f64),

    #[error("power-delay profile line {line}: {message}")]
    Profile { line: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
