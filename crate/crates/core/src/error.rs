use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("point with imaginary part {im} lies outside the strip |Im z| <= {h}")]
    StripViolation { im: f64, h: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("outside domain: {0}")]
    Domain(String),
    #[error("not elliptic at x = {x} (trace {trace})")]
    NotElliptic { x: f64, trace: f64 },
    #[error("regularity violated at x = {x}: eigenvalue modulus {modulus}")]
    Regularity { x: f64, modulus: f64 },
    #[error("small divisor at k = {k}: modulus {modulus:e} below floor")]
    Resonance { k: i64, modulus: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("consistency check failed: {0}")]
    Consistency(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Parameter(_) | Error::Config { .. } | Error::Io(_) => true,
            Error::Stage { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
