use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Io,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Config => "config",
            ErrorKind::Numerical => "numerical",
            ErrorKind::Io => "io",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("rank-deficient channel: smallest/largest gram eigenvalue ratio {ratio:.3e} below {threshold:.1e}")]
    RankDeficient { ratio: f64, threshold: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e}, last iterate [{:.6}, {:.6}, {:.6}])", .last[0], .last[1], .last[2])]
    NonConvergence { iterations: usize, residual: f64, last: [f64; 3] },

    #[error("malformed channel tensor data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidInput(_) | Error::Config(_) => ErrorKind::Config,
            Error::RankDeficient { .. } | Error::NonConvergence { .. } => ErrorKind::Numerical,
            Error::Format(_) | Error::Io(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
