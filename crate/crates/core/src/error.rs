//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("operation `{op}` is not supported by {target}")]
    Unsupported { op: &'static str, target: &'static str },

    #[error("feature map does not declare a finite bound")]
    UnboundedFeatures,

    #[error("degenerate design: normal equations are singular")]
    DegenerateDesign,

    #[error("fit did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("negative likelihood-ratio statistic {0:.6e} beyond tolerance")]
    NegativeStatistic(f64),

    #[error("configuration outside the admissible set: {0}")]
    ConfigOutOfRange(String),

    #[error("state outside the support of the initial distribution")]
    OutOfSupport,

    #[error("all importance weights vanish; the target configuration is too far from the sampling one")]
    DegenerateWeights,

    #[error("training diverged: parameter norm {0:.3e}")]
    Divergence(f64),

    #[error("combinatorial rule limited to {cap} units, got {d}")]
    TooManyUnits { d: usize, cap: usize },

    #[error("configuration objective became NaN")]
    ObjectiveNaN,

    #[error("experiment configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
