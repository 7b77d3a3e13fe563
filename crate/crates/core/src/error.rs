use thiserror::Error;

/// Errors produced by the prediction-set engine and its supporting modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A value fell outside the domain of an operation (adjustment
    /// functions, family parameters, metric inputs).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// The conditional model cannot provide what the caller asked for
    /// (density evaluation or sampling).
    #[error("capability error: {0}")]
    Capability(String),

    /// The mass of the confidence family never reached the target level
    /// while expanding the root-finding bracket.
    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    /// Wraps an error raised while processing one calibration or test point.
    #[error("point {index}: {source}")]
    AtPoint {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_point(self, index: usize) -> Self {
        Error::AtPoint {
            index,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
