//! Error type shared by every module in the crate.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by tensors, the model, training and the I/O layers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible. `detail` names both shapes.
    Dimension { op: &'static str, detail: String },
    /// A configuration value is invalid or inconsistent.
    Config(String),
    /// An input value is outside the operation's domain (bad id, empty sequence).
    Domain(String),
    /// An operation was called in an invalid order.
    State(String),
    /// User-supplied data is malformed (corpora, score inputs).
    Input(String),
    /// A file could not be decoded (checkpoint, config, vocabulary, word map).
    Parse(String),
    /// Filesystem failure, with the offending path.
    Io(String),
    /// Non-finite values exceeded the configured tolerance policy.
    Numeric(String),
}

impl Error {
    pub fn dimension(op: &'static str, detail: impl Into<String>) -> Error {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    /// Process exit code for the CLI: 2 input, 3 config, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Parse(_) | Error::Io(_) | Error::Domain(_) => 2,
            Error::Config(_) | Error::Dimension { .. } | Error::State(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, detail } => write!(f, "dimension error in {op}: {detail}"),
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::State(m) => write!(f, "state error: {m}"),
            Error::Input(m) => write!(f, "input error: {m}"),
            Error::Parse(m) => write!(f, "parse error: {m}"),
            Error::Io(m) => write!(f, "io error: {m}"),
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl std::error::Error for Error {}

/// Attach a path to an `std::io::Error`.
pub fn io_error(path: &std::path::Path, err: &std::io::Error) -> Error {
    Error::Io(format!("{}: {err}", path.display()))
}

pub(crate) fn shape_string(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("[{}]", dims.join("x"))
}
