use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite field value: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `|grad phi|` left the accepted range inside the interface band.
    #[error("distorted field: |grad phi| = {value:.4} inside the interface band (reinitialize first)")]
    DistortedField { value: f64 },

    /// The zero level set vanished.
    #[error("empty surface: the zero level set vanished")]
    EmptySurface,

    #[error("shape does not fit inside the unit cell: {0}")]
    ShapeTooLarge(String),

    #[error("volume-fraction derivative vanished ({0:e})")]
    DerivativeVanished(f64),

    #[error("Newton volume correction did not converge after {iterations} iterations (|f - f0| = {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("continuation stage {stage} (target {target}): {source}")]
    Stage {
        stage: usize,
        target: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("field file: {0}")]
    FieldFile(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
