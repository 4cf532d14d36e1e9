use thiserror::Error;

/// Failure modes surfaced by every layer of the engine.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("noise generation error: {0}")]
    Noise(String),
    #[error("transform error: {0}")]
    Transform(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite field at t = {t} using {method}")]
    Divergence { t: f64, method: String },
    #[error("normal projection did not converge (residual {residual:e})")]
    Projection { residual: f64 },
    #[error("degenerate ensemble: every weight is below the breeding threshold")]
    DegenerateEnsemble,
    #[error("sequence {index} ({method}): {source}")]
    InSequence {
        index: usize,
        method: String,
        #[source]
        source: Box<SimError>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("result file: {0}")]
    Format(String),
    #[error("result file checksum mismatch")]
    Checksum,
}

pub type Result<T> = std::result::Result<T, SimError>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(SimError::Config(msg.into()))
}
