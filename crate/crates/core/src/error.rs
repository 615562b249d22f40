use thiserror::Error;

/// Errors produced by any layer of the workbench.
#[derive(Error, Debug)]
pub enum Error {
    /// Tensor/layer shape disagreement; the message names the offending axis.
    #[error("shape error: {0}")]
    Shape(String),

    /// Input values outside their documented domain (e.g. pixels outside \[0,1]).
    #[error("range error: {0}")]
    Range(String),

    /// A GLCM with zero valid pixel pairs cannot be built or normalized.
    #[error("degenerate GLCM: {0}")]
    DegenerateGlcm(String),

    /// Batch too small for the requested statistic.
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    /// Checkpoint file is malformed, truncated, or incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Dataset directory layout or contents are unusable.
    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image decode error: {0}")]
    Image(String),
}

pub type Result<T> = std::result::Result<T, Error>;
