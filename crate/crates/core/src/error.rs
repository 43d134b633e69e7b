use std::fmt;
use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure surfaced by the library. `category()` gives the stable
/// machine-readable tag the CLI prints.
#[derive(Debug)]
pub enum Error {
    /// Tensor or frame dimensions do not conform.
    Shape(String),
    /// A caller-supplied value is outside its domain.
    InvalidArgument(String),
    /// A text input failed to parse; `line` is 1-based.
    Parse { line: usize, reason: String },
    /// A structural invariant (tiling, overlap, alignment) is violated.
    Invariant(String),
    /// A NaN or infinity reached a place that requires finite values.
    NonFinite(String),
    /// Binary container (checkpoint, YUV) is malformed or truncated.
    Format(String),
    Io { path: PathBuf, source: io::Error },
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Parse { .. } => "parse",
            Error::Invariant(_) => "invariant",
            Error::NonFinite(_) => "non-finite",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape mismatch: {m}"),
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::Parse { line, reason } => write!(f, "line {line}: {reason}"),
            Error::Invariant(m) => write!(f, "invariant violated: {m}"),
            Error::NonFinite(m) => write!(f, "non-finite value: {m}"),
            Error::Format(m) => write!(f, "malformed data: {m}"),
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
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
